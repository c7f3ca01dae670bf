#include "bb/protocols.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"

namespace bb {

namespace {

constexpr std::uint64_t kRecvChunk = 4096;  // bounds stale heap entries

std::string ssf_key(int n, int x, std::uint64_t seed, int c) {
    std::ostringstream k;
    k << "ssf_" << n << "_" << x << "_" << x << "_" << seed << "_" << c;
    return k.str();
}

int clamp_x(int x, int name_space) {
    return std::max(1, std::min(x, name_space));
}

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t tag) {
    return RandomStream(seed, tag).next_u64();
}

}  // namespace

int name_bits_of(int name_space) {
    return std::max(1, static_cast<int>(ceil_log2(std::uint64_t(name_space))));
}

int ProtocolConfig::x_heavy(int name_space) const {
    int lg = name_bits_of(name_space);
    long long cube = static_cast<long long>(lg) * lg * lg;
    int x = static_cast<int>(std::min<long long>(std::max<long long>(cube, 2), x_heavy_cap));
    return clamp_x(x, name_space);
}

const SelectionFamily& light_ssf(int name_space, const ProtocolConfig& pc) {
    static thread_local std::shared_ptr<const SelectionFamily> last;
    last = family_cache().ssf(name_space, clamp_x(pc.x_light, name_space), pc.family_seed,
                              pc.c_ssf);
    return *last;
}

const SelectionFamily& heavy_ssf(int name_space, const ProtocolConfig& pc) {
    static thread_local std::shared_ptr<const SelectionFamily> last;
    last = family_cache().ssf(name_space, pc.x_heavy(name_space), pc.family_seed, pc.c_ssf);
    return *last;
}

const SelectionFamily& emul_ssf(int name_space, const ProtocolConfig& pc) {
    static thread_local std::shared_ptr<const SelectionFamily> last;
    last = family_cache().ssf(name_space, clamp_x(pc.x_emul, name_space), pc.family_seed,
                              pc.c_ssf);
    return *last;
}

long long lun_y(long long x, const ProtocolConfig& pc) {
    return std::max<long long>(1, static_cast<long long>(std::floor(pc.lun_c * double(x))));
}

const SelectionFamily& lun_selector(int name_space, long long x, const ProtocolConfig& pc) {
    static thread_local std::shared_ptr<const SelectionFamily> last;
    int xc = clamp_x(static_cast<int>(std::min<long long>(x, name_space)), name_space);
    int y = static_cast<int>(lun_y(xc, pc));
    last = family_cache().selector(name_space, xc, y, pc.family_seed, pc.c_sel);
    return *last;
}

std::uint64_t esun_rounds(int name_space, const ProtocolConfig& pc) {
    std::uint64_t lg = name_bits_of(name_space);
    return lg * (std::uint64_t(pc.d_esun) * lg);
}

std::uint64_t mis_rounds(int name_space, int max_degree, const ProtocolConfig& pc) {
    int delta1 = std::max(max_degree, 1);
    std::uint64_t phases = ceil_log2(std::uint64_t(delta1)) + 1;
    std::uint64_t sub = std::uint64_t(pc.c_phases) * name_bits_of(name_space);
    return phases * sub * 2 * heavy_ssf(name_space, pc).length();
}

// ---------------------------------------------------------------------------
// ssf execution over raw engine rounds: transmit in scheduled slots (if a
// message is given), listen everywhere else, return everything heard.
// ---------------------------------------------------------------------------

static Task<std::vector<Message>> ssf_exec(NodeCtx& c, const SelectionFamily& fam,
                                           std::optional<Message> m) {
    std::vector<Message> heard;
    const std::uint64_t len = fam.length();
    if (!m) {
        heard = co_await c.listen(len);
        co_return heard;
    }
    std::uint64_t cur = 0;
    for (int p : fam.slots_of(c.name)) {
        if (std::uint64_t(p) > cur) {
            auto v = co_await c.listen(std::uint64_t(p) - cur);
            heard.insert(heard.end(), v.begin(), v.end());
        }
        co_await c.transmit(*m);
        cur = std::uint64_t(p) + 1;
    }
    if (cur < len) {
        auto v = co_await c.listen(len - cur);
        heard.insert(heard.end(), v.begin(), v.end());
    }
    co_return heard;
}

// ---------------------------------------------------------------------------
// Channels
// ---------------------------------------------------------------------------

Task<std::optional<Message>> PlainChan::step(std::optional<Message> m) {
    if (m) {
        co_await c_.transmit(*m);
        co_return std::nullopt;  // half duplex
    }
    auto v = co_await c_.listen(1);
    if (v.empty()) co_return std::nullopt;
    co_return v.front();
}

Task<std::vector<Message>> PlainChan::collect(std::uint64_t k) {
    auto v = co_await c_.listen(k);
    co_return v;
}

Task<std::optional<Message>> PlainChan::recv() {
    while (c_.now() <= c_.round_limit()) {
        std::uint64_t k = std::min<std::uint64_t>(kRecvChunk,
                                                  c_.round_limit() + 1 - c_.now());
        if (k == 0) break;
        auto m = co_await c_.listen_one(k);
        if (m) co_return m;
    }
    co_return std::nullopt;
}

std::optional<Message> EmulChan::feedback(std::vector<Message>& heard) {
    Name best = source_;
    for (const auto& h : heard) best = std::max(best, h.source_tag);
    if (best > source_) {
        // Rule (ii): a higher source name preempts the current execution.
        const Message* pick = nullptr;
        bool multi = false;
        for (const auto& h : heard) {
            if (h.source_tag != best) continue;
            if (!pick) pick = &h;
            else if (h.src != pick->src) multi = true;
        }
        Preempted p;
        p.source = best;
        if (pick && !multi) p.msg = *pick;
        throw p;
    }
    // Rule (iii): feedback iff exactly one sender for the stored source.
    const Message* pick = nullptr;
    bool multi = false;
    for (const auto& h : heard) {
        if (h.source_tag != source_) continue;
        if (!pick) pick = &h;
        else if (h.src != pick->src) multi = true;
    }
    if (pick && !multi) return *pick;
    return std::nullopt;  // rule (i): nothing, or an emulation-level collision
}

Task<std::optional<Message>> EmulChan::step(std::optional<Message> m) {
    const std::uint64_t len = fam_.length();
    assert(c_.now() >= base_ && (c_.now() - base_) % len == 0);
    if (m) {
        m->source_tag = source_;
        m->emul_round = static_cast<std::int64_t>((c_.now() - base_) / len);
    }
    auto heard = co_await ssf_exec(c_, fam_, std::move(m));
    co_return feedback(heard);
}

Task<std::vector<Message>> EmulChan::collect(std::uint64_t k) {
    std::vector<Message> out;
    for (std::uint64_t i = 0; i < k; ++i) {
        auto m = co_await step(std::nullopt);
        if (m) out.push_back(*m);
    }
    co_return out;
}

Task<std::optional<Message>> EmulChan::recv() {
    const std::uint64_t len = fam_.length();
    while (c_.now() <= c_.round_limit()) {
        std::uint64_t budget = std::min<std::uint64_t>(kRecvChunk * len,
                                                       c_.round_limit() + 1 - c_.now());
        if (budget == 0) break;
        auto first = co_await c_.listen_one(budget);
        if (!first) continue;
        // Finish the emulated round the delivery fell into, then judge it.
        std::uint64_t e = (c_.now() - 1 - base_) / len;
        std::uint64_t boundary = base_ + (e + 1) * len;
        std::vector<Message> heard{*first};
        if (boundary > c_.now()) {
            auto rest = co_await c_.listen(boundary - c_.now());
            heard.insert(heard.end(), rest.begin(), rest.end());
        }
        auto fb = feedback(heard);
        if (fb) co_return fb;
    }
    co_return std::nullopt;
}

Task<void> EmulChan::align() {
    std::uint64_t now = c_.now();
    if (now < base_) {
        co_await c_.listen(base_ - now);
        co_return;
    }
    std::uint64_t off = (now - base_) % fam_.length();
    if (off) co_await c_.listen(fam_.length() - off);
}

// ---------------------------------------------------------------------------
// ESUN
// ---------------------------------------------------------------------------

namespace {

struct DfsCtx {
    const ProtocolConfig* pc;
    int name_space;
};

Task<std::uint64_t> esun_coordinate(Chan& ch, const DfsCtx& g) {
    const int lg = name_bits_of(g.name_space);
    const std::uint64_t sub = std::uint64_t(g.pc->d_esun) * lg;
    const double thresh = (1.0 - g.pc->esun_eps) * double(g.pc->d_esun) * lg / 8.0;
    std::uint64_t best = 0;
    for (int i = 1; i <= lg; ++i) {
        auto msgs = co_await ch.collect(sub);
        std::uint64_t cnt = 0;
        for (const auto& m : msgs)
            if (m.kind == MsgKind::EsunPing) ++cnt;
        if (double(cnt) >= thresh) best = std::uint64_t(1) << i;
    }
    co_return best;
}

Task<void> esun_participate(Chan& ch, const DfsCtx& g) {
    NodeCtx& c = ch.ctx();
    const int lg = name_bits_of(g.name_space);
    const std::uint64_t sub = std::uint64_t(g.pc->d_esun) * lg;
    for (int i = 1; i <= lg; ++i) {
        for (std::uint64_t r = 0; r < sub; ++r) {
            if (c.coin_pow2(i)) {
                Message ping;
                ping.kind = MsgKind::EsunPing;
                co_await ch.step(ping);
            } else {
                co_await ch.step(std::nullopt);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// LUN
// ---------------------------------------------------------------------------

Task<std::vector<Name>> lun_coordinate(Chan& ch, const DfsCtx& g, std::uint64_t est) {
    std::vector<Name> learned;
    std::set<Name> seen;
    std::size_t announced = 0;
    long long x = std::min<long long>(static_cast<long long>(est), g.name_space);
    std::int64_t pass = 0;
    while (x > 0) {
        const auto& sel = lun_selector(g.name_space, x, *g.pc);
        Message hdr;
        hdr.kind = MsgKind::LunSelStart;
        hdr.f1 = pass;
        hdr.f2 = x;
        co_await ch.step(hdr);
        auto msgs = co_await ch.collect(sel.length());
        for (const auto& m : msgs) {
            if (m.kind == MsgKind::LunName && seen.insert(m.src).second)
                learned.push_back(m.src);
        }
        while (announced < learned.size()) {
            Message an;
            an.kind = MsgKind::LunAnnounce;
            an.a = learned[announced++];
            co_await ch.step(an);
        }
        x -= lun_y(x, *g.pc);
        ++pass;
    }
    Message done;
    done.kind = MsgKind::LunDone;
    co_await ch.step(done);
    co_return learned;
}

Task<bool> lun_participate(Chan& ch, const DfsCtx& g) {
    NodeCtx& c = ch.ctx();
    bool learned = false;
    while (true) {
        auto m = co_await ch.recv();
        if (!m) co_return learned;  // starved out by the round limit
        switch (m->kind) {
            case MsgKind::LunSelStart: {
                const auto& sel = lun_selector(g.name_space, m->f2, *g.pc);
                for (int slot = 0; slot < sel.length(); ++slot) {
                    std::optional<Message> out;
                    if (!learned && sel.scheduled(c.name, slot)) {
                        out.emplace();
                        out->kind = MsgKind::LunName;
                    }
                    auto r = co_await ch.step(std::move(out));
                    if (r && r->kind == MsgKind::LunAnnounce && r->a == c.name)
                        learned = true;
                }
                break;
            }
            case MsgKind::LunAnnounce:
                if (m->a == c.name) learned = true;
                break;
            case MsgKind::LunDone:
                co_return learned;
            default:
                break;  // stray traffic
        }
    }
}

// ---------------------------------------------------------------------------
// Wireless_DFS node logic, written against Chan so the same state machine
// runs plainly and under ssf emulation.
// ---------------------------------------------------------------------------

Task<void> dfs_explore(Chan& ch, const DfsCtx& g, DfsNodeState& st) {
    NodeCtx& c = ch.ctx();
    Message start;
    start.kind = MsgKind::EsunStart;
    co_await ch.step(start);
    st.estimate = co_await esun_coordinate(ch, g);
    auto learned = co_await lun_coordinate(ch, g, *st.estimate);
    std::sort(learned.begin(), learned.end());
    st.viewed_set = learned;
    for (Name u : learned) {
        Message tok;
        tok.kind = MsgKind::TokenPass;
        tok.a = u;
        co_await ch.step(tok);
        while (true) {
            auto m = co_await ch.recv();
            if (!m) co_return;  // round limit; run ends incomplete
            if (m->kind == MsgKind::TokenReturn && m->a == c.name && m->src == u) break;
        }
    }
}

Task<void> dfs_run(Chan& ch, const DfsCtx& g, DfsNodeState& st, bool is_source,
                   std::optional<Message> first) {
    NodeCtx& c = ch.ctx();
    if (is_source) {
        st.status = DfsNodeState::Status::Grey;
        st.token_holder = true;
        co_await dfs_explore(ch, g, st);
        st.token_holder = false;
        st.status = DfsNodeState::Status::Black;
        co_return;
    }
    std::optional<Message> pending = std::move(first);
    while (true) {
        std::optional<Message> m = std::move(pending);
        pending.reset();
        if (!m) m = co_await ch.recv();
        if (!m) co_return;
        if (m->kind == MsgKind::EsunStart &&
            st.status == DfsNodeState::Status::Unexplored) {
            co_await esun_participate(ch, g);
            if (co_await lun_participate(ch, g))
                st.status = DfsNodeState::Status::Viewed;
        } else if (m->kind == MsgKind::TokenPass && m->a == c.name &&
                   st.status != DfsNodeState::Status::Black) {
            st.status = DfsNodeState::Status::Grey;
            st.parent = m->src;
            st.token_holder = true;
            co_await dfs_explore(ch, g, st);
            st.token_holder = false;
            st.status = DfsNodeState::Status::Black;
            Message ret;
            ret.kind = MsgKind::TokenReturn;
            ret.a = *st.parent;
            co_await ch.step(ret);
            co_return;
        }
    }
}

struct DfsShared {
    DfsCtx g;
    Name source;
    std::vector<DfsNodeState>* states;
};

Proc dfs_plain_node(NodeCtx& c, DfsShared& sh) {
    PlainChan ch(c);
    bool is_source = c.name == sh.source;
    std::optional<Message> first = c.wake_msg;
    co_await dfs_run(ch, sh.g, (*sh.states)[c.idx], is_source, std::move(first));
    if (is_source) c.finish();
}

}  // namespace

DfsResult wireless_dfs(const Network& net, const ProtocolConfig& pc, Name source,
                       std::uint64_t seed, std::uint64_t round_limit, TraceSink* sink) {
    if (!net.has_name(source)) throw InputError("wireless_dfs: unknown source");
    DfsResult res;
    res.states.resize(net.n());
    DfsShared sh{{&pc, net.name_space}, source, &res.states};
    Engine eng(net, seed, round_limit);
    eng.set_sink(sink);
    res.summary = eng.run([&sh](NodeCtx& c) { return dfs_plain_node(c, sh); },
                          StartMode::only({source}));
    res.awake.resize(net.n());
    bool all_black = true;
    for (int i = 0; i < net.n(); ++i) {
        res.awake[i] = eng.node_started(i);
        if (res.states[i].status != DfsNodeState::Status::Black) all_black = false;
    }
    res.completed = res.summary.finished && all_black;
    return res;
}

// ---------------------------------------------------------------------------
// Mis_SWD
// ---------------------------------------------------------------------------

namespace {

struct MisCtx {
    const ProtocolConfig* pc;
    int name_space;
    int delta1;
    const SelectionFamily* fam;
};

Task<void> mis_task(NodeCtx& c, const MisCtx& g, MisNodeState& st) {
    const int phases = static_cast<int>(ceil_log2(std::uint64_t(g.delta1)));
    const int sub_phases = g.pc->c_phases * name_bits_of(g.name_space);
    std::set<Name> leaders_heard;
    for (int i = 0; i <= phases; ++i) {
        const double p = std::min(double(std::uint64_t(1) << i) / g.delta1, 0.5);
        for (int j = 0; j < sub_phases; ++j) {
            // Stage 1: workers flip into candidacy; candidates transmit.
            bool contender = false;
            if (st.status == MisNodeState::Status::Worker && c.chance(p)) {
                st.status = MisNodeState::Status::Candidate;
                contender = true;
            }
            std::optional<Message> cm;
            if (contender) {
                cm.emplace();
                cm->kind = MsgKind::MisCandidate;
            }
            auto h1 = co_await ssf_exec(c, *g.fam, std::move(cm));
            bool new_leader = false;
            if (st.status == MisNodeState::Status::Candidate) {
                bool rival = false;
                for (const auto& m : h1)
                    if (m.kind == MsgKind::MisCandidate) rival = true;
                if (rival) {
                    st.status = MisNodeState::Status::Worker;
                } else {
                    st.status = MisNodeState::Status::Leader;
                    new_leader = true;
                }
            }
            // Stage 2: fresh leaders transmit; hearing workers submit.
            std::optional<Message> lm;
            if (new_leader) {
                lm.emplace();
                lm->kind = MsgKind::MisLeader;
            }
            auto h2 = co_await ssf_exec(c, *g.fam, std::move(lm));
            Name smallest = -1;
            for (const auto& m : h2) {
                if (m.kind != MsgKind::MisLeader) continue;
                leaders_heard.insert(m.src);
                if (smallest < 0 || m.src < smallest) smallest = m.src;
            }
            if (st.status == MisNodeState::Status::Worker && smallest >= 0) {
                st.master = smallest;
                st.status = MisNodeState::Status::Slave;
            }
        }
    }
    st.heard_leaders.assign(leaders_heard.begin(), leaders_heard.end());
}

struct MisShared {
    MisCtx g;
    std::vector<MisNodeState>* states;
};

Proc mis_node(NodeCtx& c, MisShared& sh) {
    co_await mis_task(c, sh.g, (*sh.states)[c.idx]);
}

void mis_check_invariants(const Network& net, const std::vector<MisNodeState>& st,
                          int delta1, int phase, std::vector<std::string>* out) {
    // (a) worker density halves per phase (checked at the start of phase i).
    if (phase >= 1) {
        std::map<std::uint64_t, int> workers;
        for (int i = 0; i < net.n(); ++i) {
            if (st[i].status == MisNodeState::Status::Worker) {
                auto [bx, by] = box_of(net.pos_at(i), net.box_side);
                ++workers[Network::pack_box(bx, by)];
            }
        }
        int cap = std::max(1, (delta1 + (1 << phase) - 1) / (1 << phase));
        for (auto& [box, cnt] : workers) {
            if (cnt > cap)
                out->push_back("phase " + std::to_string(phase) + ": box holds " +
                               std::to_string(cnt) + " workers, cap " + std::to_string(cap));
        }
    }
    for (int i = 0; i < net.n(); ++i) {
        if (st[i].status == MisNodeState::Status::Candidate)
            out->push_back("phase " + std::to_string(phase) + ": candidate survived a stage");
        int leader_nb = 0;
        for (int u : net.neighbors(i))
            if (st[u].status == MisNodeState::Status::Leader) ++leader_nb;
        // (c) packing bound on leader neighbors.
        if (leader_nb > 25)
            out->push_back("phase " + std::to_string(phase) + ": node " +
                           std::to_string(net.name_at(i)) + " has " +
                           std::to_string(leader_nb) + " leader neighbors");
        // (b) neighbors of leaders are enslaved.
        if (st[i].status == MisNodeState::Status::Leader) {
            for (int u : net.neighbors(i)) {
                if (st[u].status != MisNodeState::Status::Slave &&
                    st[u].status != MisNodeState::Status::Leader)
                    out->push_back("phase " + std::to_string(phase) + ": leader " +
                                   std::to_string(net.name_at(i)) +
                                   " has a non-slave neighbor");
            }
        }
    }
}

}  // namespace

MisResult mis_swd(const Network& net, const ProtocolConfig& pc, std::uint64_t seed,
                  TraceSink* sink) {
    MisResult res;
    res.states.resize(net.n());
    const int delta1 = std::max(net.max_degree, 1);
    const auto& fam = heavy_ssf(net.name_space, pc);
    MisShared sh{{&pc, net.name_space, delta1, &fam}, &res.states};
    const std::uint64_t total = mis_rounds(net.name_space, net.max_degree, pc);
    Engine eng(net, seed, total + 2);
    eng.set_sink(sink);
    const int phases = static_cast<int>(ceil_log2(std::uint64_t(delta1)));
    const std::uint64_t phase_len =
        std::uint64_t(pc.c_phases) * name_bits_of(net.name_space) * 2 * fam.length();
    for (int i = 1; i <= phases; ++i) {
        eng.observe_at(std::uint64_t(i) * phase_len, [&, i](std::uint64_t) {
            mis_check_invariants(net, res.states, delta1, i, &res.violations);
        });
    }
    res.summary = eng.run([&sh](NodeCtx& c) { return mis_node(c, sh); }, StartMode::all());
    for (int i = 0; i < net.n(); ++i) {
        if (res.states[i].status == MisNodeState::Status::Leader)
            res.leaders.push_back(net.name_at(i));
        else if (res.states[i].status != MisNodeState::Status::Slave)
            res.violations.push_back("node " + std::to_string(net.name_at(i)) +
                                     " ended as neither leader nor slave");
    }
    res.invariants_ok = res.violations.empty();
    return res;
}

// ---------------------------------------------------------------------------
// ConnectBB
// ---------------------------------------------------------------------------

namespace {

struct BbEntry {
    Name u = -1;         // leader name
    Name g = -1;         // forwarding neighbor for two-hop knowledge
    std::int64_t f = -1; // block in which g was heard announcing u
};

struct PairChoice {
    Name g1 = -1, g2 = -1;
    std::int64_t f1 = -1, f2 = -1;
};

// Smallest (g1, g2) lexicographically, single-connector entries first.
bool pair_better(const PairChoice& a, const PairChoice& b) {
    bool a2 = a.g2 >= 0, b2 = b.g2 >= 0;
    if (a2 != b2) return !a2;
    if (a.g1 != b.g1) return a.g1 < b.g1;
    return a.g2 < b.g2;
}

struct BbNodeOut {
    std::vector<ConnectorRec> conn;
    std::vector<Name> bb_nb;
    std::optional<Name> master;
    std::vector<Name> slaves;
    bool is_backbone = false;
};

struct BbShared {
    const Network* net;
    const ProtocolConfig* pc;
    int name_space = 0;
    int delta1 = 1;
    std::vector<char> is_leader;           // by index
    std::vector<std::optional<Name>> mis_master;
    std::vector<BbNodeOut>* out;
};

Proc bb_node(NodeCtx& c, BbShared& sh) {
    const bool leader = sh.is_leader[c.idx] != 0;
    const auto& fl = light_ssf(sh.name_space, *sh.pc);
    const auto& fh = heavy_ssf(sh.name_space, *sh.pc);
    BbNodeOut& out = (*sh.out)[c.idx];

    // Part 1: leaders announce themselves; everyone else records its first
    // 25 distinct leader names in order of hearing.
    std::optional<Message> own;
    if (leader) {
        own.emplace();
        own->kind = MsgKind::BbLeaderName;
    }
    auto h1 = co_await ssf_exec(c, fl, std::move(own));
    std::vector<Name> my_leaders;
    if (!leader) {
        for (const auto& m : h1) {
            if (m.kind != MsgKind::BbLeaderName) continue;
            if (std::find(my_leaders.begin(), my_leaders.end(), m.src) == my_leaders.end() &&
                static_cast<int>(my_leaders.size()) < 25)
                my_leaders.push_back(m.src);
        }
    }

    // Part 2, first sub-part: non-leaders gossip their leader lists so that
    // distance-2 information spreads; everyone records who relayed which
    // leader and in which block.
    const std::uint64_t groups = std::uint64_t(sh.pc->t_mult) * sh.delta1;
    std::map<Name, std::pair<Name, std::int64_t>> twohop;  // leader -> (via, block)
    std::map<Name, PairChoice> pairs;                      // leaders only
    {
        std::uint64_t tv = leader ? 0 : c.draw_below(groups);
        for (std::uint64_t b = 0; b < groups * 25; ++b) {
            std::uint64_t j = b % 25;
            bool active = !leader && b / 25 == tv && j < my_leaders.size();
            std::optional<Message> m;
            if (active) {
                m.emplace();
                m->kind = MsgKind::BbTwoHop;
                m->a = my_leaders[j];
                m->f1 = static_cast<std::int64_t>(b);
            }
            auto h = co_await ssf_exec(c, fh, std::move(m));
            for (const auto& r : h) {
                if (r.kind != MsgKind::BbTwoHop || r.a == c.name) continue;
                if (leader) {
                    PairChoice cand{r.src, -1, r.f1, -1};
                    auto it = pairs.find(r.a);
                    if (it == pairs.end() || pair_better(cand, it->second))
                        pairs[r.a] = cand;
                } else if (std::find(my_leaders.begin(), my_leaders.end(), r.a) ==
                               my_leaders.end() &&
                           !twohop.count(r.a)) {
                    twohop[r.a] = {r.src, r.f1};
                }
            }
        }
    }

    // Part 2, second sub-part: 49 blocks per group; non-leaders forward
    // one- and two-hop leader knowledge up to their leader neighbors.
    {
        std::vector<BbEntry> entries;
        for (Name u : my_leaders) entries.push_back({u, -1, -1});
        for (const auto& [u, via] : twohop) entries.push_back({u, via.first, via.second});
        if (entries.size() > 49) entries.resize(49);
        std::uint64_t tv = leader ? 0 : c.draw_below(groups);
        for (std::uint64_t b = 0; b < groups * 49; ++b) {
            std::uint64_t j = b % 49;
            bool active = !leader && b / 49 == tv && j < entries.size();
            std::optional<Message> m;
            if (active) {
                m.emplace();
                m->kind = MsgKind::BbRelay;
                m->a = entries[j].u;
                m->b = entries[j].g;
                m->f1 = entries[j].f;
                m->f2 = static_cast<std::int64_t>(b);
            }
            auto h = co_await ssf_exec(c, fh, std::move(m));
            if (!leader) continue;
            for (const auto& r : h) {
                if (r.kind != MsgKind::BbRelay || r.a == c.name) continue;
                PairChoice cand;
                if (r.b < 0) {
                    cand = {r.src, -1, r.f2, -1};
                } else {
                    cand = {r.src, r.b, r.f2, r.f1};
                }
                auto it = pairs.find(r.a);
                if (it == pairs.end() || pair_better(cand, it->second)) pairs[r.a] = cand;
            }
        }
    }

    // Part 3: leaders inform the chosen connectors, then first connectors
    // relay to second connectors; 121 executions each way.
    std::vector<std::tuple<Name, Name, Name, std::int64_t>> relays;  // (g2, u, w, f2)
    {
        std::vector<std::pair<Name, PairChoice>> plist(pairs.begin(), pairs.end());
        if (plist.size() > 121) plist.resize(121);
        for (int j = 0; j < 121; ++j) {
            std::optional<Message> m;
            if (leader && j < static_cast<int>(plist.size())) {
                m.emplace();
                m->kind = MsgKind::BbInform;
                m->a = plist[j].first;
                m->b = plist[j].second.g1;
                m->c = plist[j].second.g2;
                m->f1 = plist[j].second.f1;
                m->f2 = plist[j].second.f2;
            }
            auto h = co_await ssf_exec(c, fl, std::move(m));
            for (const auto& r : h) {
                if (r.kind != MsgKind::BbInform || r.b != c.name) continue;
                if (r.c < 0) {
                    out.conn.push_back({c.name, r.a, r.src, -1});
                } else {
                    out.conn.push_back({c.name, r.a, r.src, r.c});
                    relays.emplace_back(r.c, r.a, r.src, r.f2);
                }
            }
        }
        if (relays.size() > 121) relays.resize(121);
        for (int j = 0; j < 121; ++j) {
            std::optional<Message> m;
            if (j < static_cast<int>(relays.size())) {
                m.emplace();
                m->kind = MsgKind::BbInform2;
                m->a = std::get<0>(relays[j]);
                m->b = std::get<1>(relays[j]);
                m->c = std::get<2>(relays[j]);
                m->f1 = std::get<3>(relays[j]);
            }
            auto h = co_await ssf_exec(c, fl, std::move(m));
            for (const auto& r : h) {
                if (r.kind != MsgKind::BbInform2 || r.a != c.name) continue;
                out.conn.push_back({c.name, r.b, r.c, r.src});
            }
        }
    }

    // Part 4: backbone members learn their backbone neighborhoods.
    out.is_backbone = leader || !out.conn.empty();
    {
        std::optional<Message> m;
        if (out.is_backbone) {
            m.emplace();
            m->kind = MsgKind::BbBackbone;
        }
        auto h = co_await ssf_exec(c, fl, std::move(m));
        if (out.is_backbone) {
            std::set<Name> nb;
            for (const auto& r : h)
                if (r.kind == MsgKind::BbBackbone) nb.insert(r.src);
            out.bb_nb.assign(nb.begin(), nb.end());
        }
    }

    // Stage 2 control run: confirms backbone neighbors and gives masterless
    // nodes the smallest backbone name in range as master.
    {
        std::optional<Message> m;
        if (out.is_backbone) {
            m.emplace();
            m->kind = MsgKind::InterMsg;
        }
        auto h = co_await ssf_exec(c, fl, std::move(m));
        if (!out.is_backbone) {
            if (sh.mis_master[c.idx]) {
                out.master = sh.mis_master[c.idx];
            } else {
                Name best = -1;
                for (const auto& r : h)
                    if (r.kind == MsgKind::InterMsg && (best < 0 || r.src < best))
                        best = r.src;
                if (best >= 0) out.master = best;
            }
        }
    }
}

struct IntraShared {
    const ProtocolConfig* pc;
    int name_space = 0;
    int delta1 = 1;
    std::vector<char> is_backbone;
    std::vector<std::optional<Name>> master;  // by index, non-backbone only
    std::vector<std::vector<Name>>* slaves;   // by index (backbone)
    std::vector<std::optional<int>>* sigma;   // by index (non-backbone)
};

Proc intra_node(NodeCtx& c, IntraShared& sh) {
    const auto& fl = light_ssf(sh.name_space, *sh.pc);
    const auto& fh = heavy_ssf(sh.name_space, *sh.pc);
    const bool bb = sh.is_backbone[c.idx] != 0;
    const std::uint64_t range =
        std::uint64_t(sh.pc->y_mult) * sh.delta1 * name_bits_of(sh.name_space);
    // Registration: each slave picks one random block and names its master.
    std::uint64_t t = bb ? 0 : c.draw_below(range);
    std::set<Name> heard_slaves;
    for (std::uint64_t b = 0; b < range; ++b) {
        bool active = !bb && b == t && sh.master[c.idx].has_value();
        std::optional<Message> m;
        if (active) {
            m.emplace();
            m->kind = MsgKind::IntraReg;
            m->a = *sh.master[c.idx];
        }
        auto h = co_await ssf_exec(c, fh, std::move(m));
        if (bb) {
            for (const auto& r : h)
                if (r.kind == MsgKind::IntraReg && r.a == c.name) heard_slaves.insert(r.src);
        }
    }
    std::vector<Name> list(heard_slaves.begin(), heard_slaves.end());
    if (bb) (*sh.slaves)[c.idx] = list;
    // Acknowledgment: masters walk their slave lists, one execution per slot.
    for (int k = 0; k < sh.delta1; ++k) {
        std::optional<Message> m;
        if (bb && k < static_cast<int>(list.size())) {
            m.emplace();
            m->kind = MsgKind::IntraAck;
            m->a = list[k];
            m->f1 = k;
        }
        auto h = co_await ssf_exec(c, fl, std::move(m));
        if (!bb) {
            for (const auto& r : h) {
                if (r.kind == MsgKind::IntraAck && r.a == c.name &&
                    sh.master[c.idx] && r.src == *sh.master[c.idx])
                    (*sh.sigma)[c.idx] = static_cast<int>(r.f1);
            }
        }
    }
}

}  // namespace

std::vector<Name> BackboneResult::backbone_nodes() const {
    std::set<Name> s(leaders.begin(), leaders.end());
    for (const auto& c : connectors) s.insert(c.via);
    return {s.begin(), s.end()};
}

std::string BackboneResult::to_json() const {
    nlohmann::json j;
    j["leaders"] = leaders;
    j["connectors"] = nlohmann::json::array();
    for (const auto& c : connectors)
        j["connectors"].push_back({{"via", c.via}, {"from", c.from}, {"to", c.to}});
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [k, v] : masters) m[std::to_string(k)] = v;
    j["masters"] = m;
    j["a1"] = a1;
    j["a2"] = a2;
    j["inter_family"] = inter_family_key;
    j["intra_family"] = intra_family_key;
    nlohmann::json s = nlohmann::json::object();
    for (const auto& [k, v] : sigma) s[std::to_string(k)] = v;
    j["sigma"] = s;
    return j.dump();
}

void compute_intra_h(const Network& net, const ProtocolConfig& pc, BackboneResult& bb,
                     std::uint64_t seed) {
    IntraShared sh;
    sh.pc = &pc;
    sh.name_space = net.name_space;
    sh.delta1 = std::max(net.max_degree, 1);
    sh.is_backbone.assign(net.n(), 0);
    sh.master.assign(net.n(), std::nullopt);
    for (Name v : bb.backbone_nodes()) sh.is_backbone[net.index_of(v)] = 1;
    for (const auto& [slave, master] : bb.masters) sh.master[net.index_of(slave)] = master;
    std::vector<std::vector<Name>> slaves(net.n());
    std::vector<std::optional<int>> sigma(net.n());
    sh.slaves = &slaves;
    sh.sigma = &sigma;
    const std::uint64_t range =
        std::uint64_t(pc.y_mult) * sh.delta1 * name_bits_of(net.name_space);
    const std::uint64_t total = range * heavy_ssf(net.name_space, pc).length() +
                                std::uint64_t(sh.delta1) * light_ssf(net.name_space, pc).length();
    Engine eng(net, seed, total + 2);
    auto sum = eng.run([&sh](NodeCtx& c) { return intra_node(c, sh); }, StartMode::all());
    bb.summary.rounds += sum.rounds;
    bb.summary.transmissions += sum.transmissions;
    bb.summary.max_node_random_bits =
        std::max(bb.summary.max_node_random_bits, sum.max_node_random_bits);
    bb.summary.max_msg_control_bits =
        std::max(bb.summary.max_msg_control_bits, sum.max_msg_control_bits);
    bb.sigma.clear();
    for (int i = 0; i < net.n(); ++i)
        if (sigma[i]) bb.sigma[net.name_at(i)] = *sigma[i];
    bb.intra_family_key = ssf_key(net.name_space, clamp_x(pc.x_light, net.name_space),
                                  pc.family_seed, pc.c_ssf);
    bb.a2 = std::uint64_t(sh.delta1) * light_ssf(net.name_space, pc).length();
}

BackboneResult connect_bb(const Network& net, const ProtocolConfig& pc,
                          const MisResult& mis, std::uint64_t seed, TraceSink* sink) {
    BackboneResult res;
    res.leaders = mis.leaders;
    std::vector<BbNodeOut> out(net.n());
    BbShared sh;
    sh.net = &net;
    sh.pc = &pc;
    sh.name_space = net.name_space;
    sh.delta1 = std::max(net.max_degree, 1);
    sh.is_leader.assign(net.n(), 0);
    sh.mis_master.assign(net.n(), std::nullopt);
    for (Name v : mis.leaders) sh.is_leader[net.index_of(v)] = 1;
    for (int i = 0; i < net.n(); ++i)
        if (mis.states[i].status == MisNodeState::Status::Slave)
            sh.mis_master[i] = mis.states[i].master;
    sh.out = &out;

    const std::uint64_t l1 = light_ssf(net.name_space, pc).length();
    const std::uint64_t lh = heavy_ssf(net.name_space, pc).length();
    const std::uint64_t groups = std::uint64_t(pc.t_mult) * sh.delta1;
    const std::uint64_t total = l1                      // part 1
                                + groups * 25 * lh      // part 2a
                                + groups * 49 * lh      // part 2b
                                + 121 * l1 + 121 * l1   // part 3
                                + l1                    // part 4
                                + l1;                   // stage 2 control
    Engine eng(net, seed, total + 2);
    eng.set_sink(sink);
    res.summary = eng.run([&sh](NodeCtx& c) { return bb_node(c, sh); }, StartMode::all());

    std::set<std::tuple<Name, Name, Name, Name>> dedup;
    for (int i = 0; i < net.n(); ++i) {
        for (const auto& c : out[i].conn)
            dedup.insert({c.via, c.from, c.to, c.partner});
        if (!out[i].is_backbone) {
            if (out[i].master)
                res.masters[net.name_at(i)] = *out[i].master;
            else
                res.violations.push_back("node " + std::to_string(net.name_at(i)) +
                                         " has no master");
        }
        if (out[i].is_backbone) res.bb_neighbors[net.name_at(i)] = out[i].bb_nb;
    }
    for (const auto& [via, from, to, partner] : dedup)
        res.connectors.push_back({via, from, to, partner});
    res.inter_family_key = ssf_key(net.name_space, clamp_x(pc.x_light, net.name_space),
                                   pc.family_seed, pc.c_ssf);
    res.a1 = l1;
    compute_intra_h(net, pc, res, sub_seed(seed, 1));
    return res;
}

// ---------------------------------------------------------------------------
// Inter_H / Intra_H multi-rounds
// ---------------------------------------------------------------------------

namespace {

struct InterShared {
    const ProtocolConfig* pc;
    int name_space = 0;
    std::vector<char> is_backbone, is_leader, is_sender;
    std::vector<std::set<Name>>* heard;
};

Proc inter_node(NodeCtx& c, InterShared& sh) {
    const auto& fl = light_ssf(sh.name_space, *sh.pc);
    std::optional<Message> m;
    if (sh.is_backbone[c.idx] && sh.is_sender[c.idx]) {
        m.emplace();
        m->kind = MsgKind::InterMsg;
        m->rumor = true;
    }
    auto h = co_await ssf_exec(c, fl, std::move(m));
    for (const auto& r : h)
        if (r.kind == MsgKind::InterMsg) (*sh.heard)[c.idx].insert(r.src);
    // Leaders rebroadcast once so their slaves see the traffic too.
    std::optional<Message> m2;
    if (sh.is_leader[c.idx]) {
        m2.emplace();
        m2->kind = MsgKind::InterMsg;
        m2->rumor = true;
    }
    auto h2 = co_await ssf_exec(c, fl, std::move(m2));
    for (const auto& r : h2)
        if (r.kind == MsgKind::InterMsg) (*sh.heard)[c.idx].insert(r.src);
}

struct IntraRunShared {
    const ProtocolConfig* pc;
    int name_space = 0;
    int delta1 = 1;
    std::vector<char> is_backbone;
    std::vector<std::optional<Name>> master;
    std::vector<std::optional<int>> sigma;
    std::vector<std::set<Name>>* heard;
};

Proc intra_run_node(NodeCtx& c, IntraRunShared& sh) {
    const auto& fl = light_ssf(sh.name_space, *sh.pc);
    for (int k = 0; k < sh.delta1; ++k) {
        std::optional<Message> m;
        if (!sh.is_backbone[c.idx] && sh.sigma[c.idx] && *sh.sigma[c.idx] == k) {
            m.emplace();
            m->kind = MsgKind::IntraMsg;
            m->a = sh.master[c.idx].value_or(-1);
            m->rumor = true;
        }
        auto h = co_await ssf_exec(c, fl, std::move(m));
        if (sh.is_backbone[c.idx]) {
            for (const auto& r : h)
                if (r.kind == MsgKind::IntraMsg && r.a == c.name)
                    (*sh.heard)[c.idx].insert(r.src);
        }
    }
}

}  // namespace

std::map<Name, std::vector<Name>> run_inter_h(const Network& net, const ProtocolConfig& pc,
                                              const BackboneResult& bb,
                                              const std::vector<Name>& senders,
                                              std::uint64_t seed) {
    InterShared sh;
    sh.pc = &pc;
    sh.name_space = net.name_space;
    sh.is_backbone.assign(net.n(), 0);
    sh.is_leader.assign(net.n(), 0);
    sh.is_sender.assign(net.n(), 0);
    for (Name v : bb.backbone_nodes()) sh.is_backbone[net.index_of(v)] = 1;
    for (Name v : bb.leaders) sh.is_leader[net.index_of(v)] = 1;
    for (Name v : senders) sh.is_sender[net.index_of(v)] = 1;
    std::vector<std::set<Name>> heard(net.n());
    sh.heard = &heard;
    const std::uint64_t total = 2 * std::uint64_t(light_ssf(net.name_space, pc).length());
    Engine eng(net, seed, total + 2);
    eng.run([&sh](NodeCtx& c) { return inter_node(c, sh); }, StartMode::all());
    std::map<Name, std::vector<Name>> out;
    for (int i = 0; i < net.n(); ++i)
        if (!heard[i].empty())
            out[net.name_at(i)] = {heard[i].begin(), heard[i].end()};
    return out;
}

std::map<Name, std::vector<Name>> run_intra_h(const Network& net, const ProtocolConfig& pc,
                                              const BackboneResult& bb, std::uint64_t seed) {
    IntraRunShared sh;
    sh.pc = &pc;
    sh.name_space = net.name_space;
    sh.delta1 = std::max(net.max_degree, 1);
    sh.is_backbone.assign(net.n(), 0);
    sh.master.assign(net.n(), std::nullopt);
    sh.sigma.assign(net.n(), std::nullopt);
    for (Name v : bb.backbone_nodes()) sh.is_backbone[net.index_of(v)] = 1;
    for (const auto& [slave, master] : bb.masters) sh.master[net.index_of(slave)] = master;
    for (const auto& [slave, s] : bb.sigma) sh.sigma[net.index_of(slave)] = s;
    std::vector<std::set<Name>> heard(net.n());
    sh.heard = &heard;
    const std::uint64_t total =
        std::uint64_t(sh.delta1) * light_ssf(net.name_space, pc).length();
    Engine eng(net, seed, total + 2);
    eng.run([&sh](NodeCtx& c) { return intra_run_node(c, sh); }, StartMode::all());
    std::map<Name, std::vector<Name>> out;
    for (int i = 0; i < net.n(); ++i)
        if (sh.is_backbone[i])
            out[net.name_at(i)] = {heard[i].begin(), heard[i].end()};
    return out;
}

// ---------------------------------------------------------------------------
// Partly coordinated start: MIS over the initially awake set, parallel
// per-leader DFS emulated over an ssf with preemption by source name, then a
// synchronized backbone construction once everyone is awake.
// ---------------------------------------------------------------------------

namespace {

struct SrcTracker {
    const Network* net = nullptr;
    std::vector<Name> cur;
    std::map<std::uint64_t, std::map<Name, int>> per_box;
    int max_distinct = 0;
    bool monotone_ok = true;

    void init(const Network& n) {
        net = &n;
        cur.assign(n.n(), -1);
    }
    void set(int idx, Name s) {
        if (s < cur[idx]) monotone_ok = false;
        if (s == cur[idx]) return;
        auto [bx, by] = box_of(net->pos_at(idx), net->box_side);
        auto key = Network::pack_box(bx, by);
        auto& box = per_box[key];
        if (cur[idx] >= 0) {
            auto it = box.find(cur[idx]);
            if (it != box.end() && --it->second == 0) box.erase(it);
        }
        cur[idx] = s;
        if (s >= 0) ++box[s];
        max_distinct = std::max(max_distinct, static_cast<int>(box.size()));
    }
};

struct EmulShared {
    DfsCtx g;
    MisCtx mis;
    const SelectionFamily* fe = nullptr;
    std::uint64_t phase_a = 0;
    std::vector<MisNodeState>* mis_states = nullptr;
    SrcTracker* sources = nullptr;
    Name* winner = nullptr;
    Name max_source = -1;
};

Proc emul_node(NodeCtx& c, EmulShared& sh) {
    const bool in_start_set = !c.wake_msg.has_value();
    Name src = -1;
    std::optional<Message> pending;

    if (in_start_set) {
        co_await mis_task(c, sh.mis, (*sh.mis_states)[c.idx]);
        if ((*sh.mis_states)[c.idx].status == MisNodeState::Status::Leader) {
            src = c.name;
            sh.max_source = std::max(sh.max_source, c.name);
        }
    } else {
        Message wake = *c.wake_msg;
        if (wake.source_tag >= 0) {
            src = wake.source_tag;
            pending = wake;
        }
        if (c.now() < sh.phase_a) co_await c.listen(sh.phase_a - c.now());
    }

    EmulChan ch(c, *sh.fe, sh.phase_a, src);
    co_await ch.align();
    sh.sources->set(c.idx, src);

    DfsNodeState st;
    while (true) {
        try {
            if (src >= 0 && src == c.name) {
                co_await dfs_run(ch, sh.g, st, true, std::nullopt);
                // Only the largest source can never be preempted, so only its
                // completion is global. A smaller source that runs out of
                // unexplored neighbors may simply be surrounded by nodes owned
                // by a larger source; it stays receptive until preempted.
                if (c.name == sh.max_source) {
                    *sh.winner = c.name;
                    c.finish();
                    co_return;
                }
            } else if (src >= 0) {
                co_await dfs_run(ch, sh.g, st, false, std::move(pending));
                pending.reset();
            }
            // Finished (black) or sourceless: stay receptive; a higher
            // source is the only thing that can matter now.
            while (true) {
                auto m = co_await ch.recv();
                if (!m) co_return;  // round limit
            }
        } catch (const Preempted& p) {
            src = p.source;
            ch.set_source(src);
            sh.sources->set(c.idx, src);
            st = DfsNodeState{};
            pending = p.msg;
            co_await ch.align();
        }
    }
}

}  // namespace

EmulResult emulated_dfs_backbone(const Network& net, const ProtocolConfig& pc,
                                 const std::vector<Name>& start_set, std::uint64_t seed,
                                 std::uint64_t round_limit, TraceSink* sink) {
    if (start_set.empty()) throw InputError("emulated_dfs_backbone: empty start set");
    EmulResult res;
    std::vector<MisNodeState> mis_states(net.n());
    SrcTracker sources;
    sources.init(net);
    const auto& fe = emul_ssf(net.name_space, pc);
    const auto& fh = heavy_ssf(net.name_space, pc);
    EmulShared sh;
    sh.g = {&pc, net.name_space};
    sh.mis = {&pc, net.name_space, std::max(net.max_degree, 1), &fh};
    sh.fe = &fe;
    sh.phase_a = mis_rounds(net.name_space, net.max_degree, pc);
    sh.mis_states = &mis_states;
    sh.sources = &sources;
    sh.winner = &res.winning_source;

    Engine eng(net, seed, round_limit);
    eng.set_sink(sink);
    res.summary = eng.run([&sh](NodeCtx& c) { return emul_node(c, sh); },
                          StartMode::only(start_set));
    res.all_awake = true;
    for (int i = 0; i < net.n(); ++i)
        if (!eng.node_started(i)) res.all_awake = false;
    res.max_box_sources = sources.max_distinct;
    res.sources_ok = sources.monotone_ok && sources.max_distinct <= 25;

    // With everyone awake, the synchronized machinery takes over.
    res.mis = mis_swd(net, pc, sub_seed(seed, 2));
    res.backbone = connect_bb(net, pc, res.mis, sub_seed(seed, 3));
    res.total_rounds =
        res.summary.rounds + res.mis.summary.rounds + res.backbone.summary.rounds;
    return res;
}

}  // namespace bb
