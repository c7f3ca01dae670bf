#include "bb/engine.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

namespace bb {

// ---------------------------------------------------------------------------
// Message
// ---------------------------------------------------------------------------

std::uint64_t Message::control_bits(int name_bits) const {
    int names = 1;  // src
    if (a >= 0) ++names;
    if (b >= 0) ++names;
    if (c >= 0) ++names;
    if (source_tag >= 0) ++names;
    std::uint64_t counter_bits = 0;
    auto width = [](std::int64_t v) { return ceil_log2(std::uint64_t(v) + 1); };
    if (counter >= 0) counter_bits += width(counter);
    if (f1 >= 0) counter_bits += width(f1);
    if (f2 >= 0) counter_bits += width(f2);
    if (emul_round >= 0) counter_bits += width(emul_round);
    // 5-bit kind tag + rumor flag
    return std::uint64_t(names) * name_bits + counter_bits + 6;
}

// ---------------------------------------------------------------------------
// JsonlSink
// ---------------------------------------------------------------------------

void JsonlSink::on_round(const TraceRound& r) {
    os_ << "{\"round\":" << r.round << ",\"tx\":[";
    for (std::size_t i = 0; i < r.tx.size(); ++i)
        os_ << (i ? "," : "") << r.tx[i];
    os_ << "],\"rx\":[";
    for (std::size_t i = 0; i < r.rx.size(); ++i) {
        os_ << (i ? "," : "") << "{\"to\":" << r.rx[i].to << ",\"from\":" << r.rx[i].from
            << "}";
    }
    os_ << "],\"wake\":[";
    for (std::size_t i = 0; i < r.wake.size(); ++i)
        os_ << (i ? "," : "") << r.wake[i];
    os_ << "]}\n";
}

void JsonlSink::on_summary(const RunSummary& s) {
    os_ << "{\"summary\":{\"rounds\":" << s.rounds
        << ",\"finished\":" << (s.finished ? "true" : "false")
        << ",\"hit_limit\":" << (s.hit_limit ? "true" : "false")
        << ",\"transmissions\":" << s.transmissions << ",\"deliveries\":" << s.deliveries
        << ",\"max_node_random_bits\":" << s.max_node_random_bits
        << ",\"max_msg_control_bits\":" << s.max_msg_control_bits << "}}\n";
    os_.flush();
}

// ---------------------------------------------------------------------------
// NodeCtx
// ---------------------------------------------------------------------------

std::uint64_t NodeCtx::now() const { return eng->now(); }
std::uint64_t NodeCtx::round_limit() const { return eng->round_limit(); }
const Network& NodeCtx::net() const { return eng->net(); }

std::uint64_t NodeCtx::draw_bits(int k) {
    assert(k >= 0 && k <= 64);
    random_bits += std::uint64_t(k);
    if (k == 0) return 0;
    return rng.next_u64() >> (64 - k);
}

bool NodeCtx::chance(double p) {
    if (p >= 1.0) return true;
    if (p <= 0.0) return false;
    return double(draw_bits(32)) < p * 4294967296.0;
}

std::uint64_t NodeCtx::draw_below(std::uint64_t n) {
    assert(n > 0);
    random_bits += ceil_log2(n);
    return rng.below(n);
}

void NodeCtx::finish() { eng->done_ = true; }

NodeCtx::TransmitAw NodeCtx::transmit(Message m) {
    outgoing = std::move(m);
    return TransmitAw{this};
}

NodeCtx::ListenAw NodeCtx::listen(std::uint64_t k) { return ListenAw{this, k}; }

NodeCtx::ListenOneAw NodeCtx::listen_one(std::uint64_t k) {
    return ListenOneAw{this, k};
}

void NodeCtx::TransmitAw::await_suspend(std::coroutine_handle<> h) {
    c->waiting = h;
    c->eng->post_transmit(*c);
}

void NodeCtx::ListenAw::await_suspend(std::coroutine_handle<> h) {
    c->waiting = h;
    c->eng->post_listen(*c, k, /*one=*/false);
}

std::vector<Message> NodeCtx::ListenAw::await_resume() {
    return std::move(c->inbox);
}

void NodeCtx::ListenOneAw::await_suspend(std::coroutine_handle<> h) {
    c->waiting = h;
    c->eng->post_listen(*c, k, /*one=*/true);
}

std::optional<Message> NodeCtx::ListenOneAw::await_resume() {
    if (c->inbox.empty()) return std::nullopt;
    Message m = std::move(c->inbox.front());
    c->inbox.clear();
    return m;
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

Engine::Engine(const Network& net, std::uint64_t seed, std::uint64_t round_limit)
    : net_(net),
      seed_(seed),
      round_limit_(round_limit),
      name_bits_(int(ceil_log2(std::uint64_t(net.name_space)))) {
    ctxs_.reserve(net.n());
    for (int i = 0; i < net.n(); ++i) {
        auto c = std::make_unique<NodeCtx>();
        c->name = net.name_at(i);
        c->idx = i;
        c->eng = this;
        c->rng = RandomStream(seed_, std::uint64_t(c->name) + 1);
        ctxs_.push_back(std::move(c));
    }
    procs_.resize(net.n());
    interference_.assign(net.n(), 0.0);
}

bool Engine::node_started(int idx) const {
    return ctxs_[idx]->mode != NodeCtx::Mode::Asleep || ctxs_[idx]->wake_msg.has_value();
}

void Engine::observe_at(std::uint64_t round, std::function<void(std::uint64_t)> fn) {
    observers_[round].push_back(std::move(fn));
    heap_.push(Event{round, -1, 0, EvKind::Observer});
}

void Engine::post_transmit(NodeCtx& c) {
    c.mode = NodeCtx::Mode::Transmit;
    c.outgoing.src = c.name;
    c.outgoing.counter = std::int64_t(round_ - c.wake_round);
    auto bits = c.outgoing.control_bits(name_bits_);
    summary_.max_msg_control_bits = std::max(summary_.max_msg_control_bits, bits);
    ++summary_.transmissions;
    tx_round_.push_back(c.idx);
    ++c.gen;
    heap_.push(Event{round_ + 1, c.idx, c.gen, EvKind::Resume});
}

void Engine::post_listen(NodeCtx& c, std::uint64_t k, bool one) {
    if (k == 0) throw std::logic_error("listen window must be at least one round");
    c.mode = one ? NodeCtx::Mode::ListenOne : NodeCtx::Mode::Listen;
    c.inbox.clear();
    c.got_one = false;
    c.deadline = round_ + k;
    ++c.gen;
    heap_.push(Event{c.deadline, c.idx, c.gen, EvKind::Resume});
}

void Engine::resume_node(NodeCtx& c) {
    c.mode = NodeCtx::Mode::Idle;
    auto h = c.waiting;
    c.waiting = nullptr;
    h.resume();
    auto top = procs_[c.idx].handle();
    if (top && top.done()) {
        if (top.promise().error) std::rethrow_exception(top.promise().error);
        c.mode = NodeCtx::Mode::Done;
    }
}

void Engine::resolve_round() {
    std::sort(tx_round_.begin(), tx_round_.end());
    // Interference at each candidate receiver is the sum over all
    // transmitters; only neighbors of a transmitter can possibly receive.
    for (int v : tx_round_) {
        for (int u : net_.neighbors(v)) {
            if (interference_[u] == 0.0) touched_.push_back(u);
            interference_[u] = -1.0;  // mark as candidate
        }
    }
    const auto& cfg = net_.cfg;
    for (int u : touched_) {
        double sum = 0.0;
        for (int w : tx_round_)
            sum += cfg.power * std::pow(net_.dist_between(w, u), -cfg.alpha);
        interference_[u] = sum;
    }

    TraceRound rec;
    rec.round = round_;
    rec.tx.reserve(tx_round_.size());
    for (int v : tx_round_) rec.tx.push_back(net_.name_at(v));

    std::vector<std::pair<int, int>> hits;  // (receiver, sender)
    for (int v : tx_round_) {
        for (int u : net_.neighbors(v)) {
            NodeCtx& cu = *ctxs_[u];
            if (cu.mode == NodeCtx::Mode::Transmit) continue;  // half duplex
            double sig = cfg.power * std::pow(net_.dist_between(v, u), -cfg.alpha);
            double denom = cfg.noise + interference_[u] - sig;
            if (sig < cfg.beta * denom) continue;
            hits.emplace_back(u, v);
        }
    }
    std::sort(hits.begin(), hits.end());
    for (std::size_t i = 0; i + 1 < hits.size(); ++i) {
        if (hits[i].first == hits[i + 1].first)
            throw std::logic_error("two deliveries at one receiver in one round");
    }

    for (auto [u, v] : hits) {
        NodeCtx& cu = *ctxs_[u];
        Message m = ctxs_[v]->outgoing;
        rec.rx.push_back({cu.name, m.src});
        ++summary_.deliveries;
        switch (cu.mode) {
            case NodeCtx::Mode::Asleep:
                if (!cu.wake_msg) {  // first wake only
                    cu.wake_msg = std::move(m);
                    rec.wake.push_back(cu.name);
                    heap_.push(Event{round_ + 1, u, cu.gen, EvKind::Start});
                }
                break;
            case NodeCtx::Mode::Listen:
                cu.inbox.push_back(std::move(m));
                break;
            case NodeCtx::Mode::ListenOne:
                cu.inbox.push_back(std::move(m));
                ++cu.gen;
                heap_.push(Event{round_ + 1, u, cu.gen, EvKind::Resume});
                break;
            case NodeCtx::Mode::Done:
                break;  // physically received, logically discarded
            default:
                throw std::logic_error("delivery to node in impossible state");
        }
    }

    for (int u : touched_) interference_[u] = 0.0;
    touched_.clear();
    tx_round_.clear();

    if (sink_) sink_->on_round(rec);
}

RunSummary Engine::run(const Behavior& behavior, const StartMode& start) {
    summary_ = RunSummary{};
    if (start.kind == StartKind::Synchronized) {
        for (int i = 0; i < net_.n(); ++i)
            heap_.push(Event{0, i, 0, EvKind::Start});
    } else {
        for (Name nm : start.awake) {
            int i = net_.index_of(nm);
            if (i < 0) throw InputError("start set names an unknown node");
            heap_.push(Event{0, i, 0, EvKind::Start});
        }
    }

    std::uint64_t last = 0;
    std::vector<Event> batch;
    while (!heap_.empty()) {
        std::uint64_t t = heap_.top().round;
        if (t > round_limit_) {
            summary_.hit_limit = true;
            last = round_limit_;
            break;
        }
        round_ = t;
        last = t;
        batch.clear();
        while (!heap_.empty() && heap_.top().round == t) {
            batch.push_back(heap_.top());
            heap_.pop();
        }
        for (const Event& ev : batch) {
            if (ev.kind == EvKind::Observer) {
                auto it = observers_.find(t);
                if (it == observers_.end()) continue;
                auto fns = std::move(it->second);
                observers_.erase(it);
                for (auto& fn : fns) fn(t);
                continue;
            }
            NodeCtx& c = *ctxs_[ev.idx];
            if (ev.kind == EvKind::Start) {
                if (c.mode != NodeCtx::Mode::Asleep) continue;
                c.wake_round = t;
                procs_[ev.idx] = behavior(c);
                c.waiting = procs_[ev.idx].handle();
                resume_node(c);
            } else {
                if (ev.gen != c.gen) continue;  // superseded request
                resume_node(c);
            }
        }
        if (!tx_round_.empty()) resolve_round();
        if (done_) {
            summary_.finished = true;
            break;
        }
    }
    summary_.rounds = last + 1;
    std::uint64_t mx = 0;
    for (auto& c : ctxs_) mx = std::max(mx, c->random_bits);
    summary_.max_node_random_bits = mx;
    if (sink_) sink_->on_summary(summary_);
    return summary_;
}

}  // namespace bb
