#include "bb/harness.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <sstream>

#include "json.hpp"

namespace bb {

namespace {

using nlohmann::json;

constexpr int kConnectRetries = 20;

void check_keys(const json& j, const char* where,
                std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) ok = true;
        if (!ok)
            throw InputError(std::string(where) + ": unknown key '" + it.key() + "'");
    }
}

template <typename T>
void opt_get(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

Scenario Scenario::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InputError(std::string("scenario: bad JSON: ") + e.what());
    }
    if (!j.is_object()) throw InputError("scenario: top level must be an object");
    check_keys(j, "scenario",
               {"schema", "topology", "n", "name_space", "side", "spacing", "grid_k",
                "file", "phys", "proto", "protocol", "source", "start_set",
                "round_limit"});
    if (!j.contains("schema") || j.at("schema") != 1)
        throw InputError("scenario: missing or unsupported schema (expected 1)");
    Scenario sc;
    opt_get(j, "topology", sc.topology);
    opt_get(j, "n", sc.n);
    opt_get(j, "name_space", sc.name_space);
    opt_get(j, "side", sc.side);
    opt_get(j, "spacing", sc.spacing);
    opt_get(j, "grid_k", sc.grid_k);
    opt_get(j, "file", sc.file);
    opt_get(j, "protocol", sc.protocol);
    opt_get(j, "source", sc.source);
    opt_get(j, "start_set", sc.start_set);
    opt_get(j, "round_limit", sc.round_limit);
    if (j.contains("phys")) {
        const json& p = j.at("phys");
        check_keys(p, "phys", {"alpha", "noise", "beta", "power", "eps_s", "eps_c"});
        opt_get(p, "alpha", sc.phys.alpha);
        opt_get(p, "noise", sc.phys.noise);
        opt_get(p, "beta", sc.phys.beta);
        opt_get(p, "power", sc.phys.power);
        opt_get(p, "eps_s", sc.phys.eps_s);
        opt_get(p, "eps_c", sc.phys.eps_c);
    }
    if (j.contains("proto")) {
        const json& p = j.at("proto");
        check_keys(p, "proto",
                   {"d_esun", "esun_eps", "lun_c", "c_phases", "x_light", "x_emul",
                    "x_heavy_cap", "t_mult", "y_mult", "c_ssf", "c_sel", "b_msg",
                    "c_bits", "c_dfs", "c_bb", "family_seed", "backbone_degree_bound"});
        opt_get(p, "d_esun", sc.proto.d_esun);
        opt_get(p, "esun_eps", sc.proto.esun_eps);
        opt_get(p, "lun_c", sc.proto.lun_c);
        opt_get(p, "c_phases", sc.proto.c_phases);
        opt_get(p, "x_light", sc.proto.x_light);
        opt_get(p, "x_emul", sc.proto.x_emul);
        opt_get(p, "x_heavy_cap", sc.proto.x_heavy_cap);
        opt_get(p, "t_mult", sc.proto.t_mult);
        opt_get(p, "y_mult", sc.proto.y_mult);
        opt_get(p, "c_ssf", sc.proto.c_ssf);
        opt_get(p, "c_sel", sc.proto.c_sel);
        opt_get(p, "b_msg", sc.proto.b_msg);
        opt_get(p, "c_bits", sc.proto.c_bits);
        opt_get(p, "c_dfs", sc.proto.c_dfs);
        opt_get(p, "c_bb", sc.proto.c_bb);
        opt_get(p, "family_seed", sc.proto.family_seed);
        opt_get(p, "backbone_degree_bound", sc.proto.backbone_degree_bound);
    }
    static const std::set<std::string> topos{"uniform_square", "path", "grid", "star",
                                             "file"};
    if (!topos.count(sc.topology))
        throw InputError("scenario: unknown topology '" + sc.topology + "'");
    static const std::set<std::string> protos{"dfs", "mis", "backbone", "emulated"};
    if (!protos.count(sc.protocol))
        throw InputError("scenario: unknown protocol '" + sc.protocol + "'");
    if (sc.topology == "file") {
        if (sc.file.empty()) throw InputError("scenario: topology 'file' needs a path");
    } else if (sc.topology == "grid") {
        if (sc.grid_k <= 0 && sc.n <= 0)
            throw InputError("scenario: grid needs grid_k or n");
    } else if (sc.n <= 0) {
        throw InputError("scenario: n must be positive");
    }
    sc.phys.validate();
    return sc;
}

std::string Scenario::to_json_text() const {
    json j;
    j["schema"] = 1;
    j["topology"] = topology;
    j["n"] = n;
    j["name_space"] = name_space;
    j["side"] = side;
    j["spacing"] = spacing;
    j["grid_k"] = grid_k;
    j["file"] = file;
    j["protocol"] = protocol;
    j["source"] = source;
    j["start_set"] = start_set;
    j["round_limit"] = round_limit;
    j["phys"] = {{"alpha", phys.alpha},   {"noise", phys.noise}, {"beta", phys.beta},
                 {"power", phys.power},   {"eps_s", phys.eps_s}, {"eps_c", phys.eps_c}};
    j["proto"] = {{"d_esun", proto.d_esun},
                  {"esun_eps", proto.esun_eps},
                  {"lun_c", proto.lun_c},
                  {"c_phases", proto.c_phases},
                  {"x_light", proto.x_light},
                  {"x_emul", proto.x_emul},
                  {"x_heavy_cap", proto.x_heavy_cap},
                  {"t_mult", proto.t_mult},
                  {"y_mult", proto.y_mult},
                  {"c_ssf", proto.c_ssf},
                  {"c_sel", proto.c_sel},
                  {"b_msg", proto.b_msg},
                  {"c_bits", proto.c_bits},
                  {"c_dfs", proto.c_dfs},
                  {"c_bb", proto.c_bb},
                  {"family_seed", proto.family_seed},
                  {"backbone_degree_bound", proto.backbone_degree_bound}};
    return j.dump(2);
}

namespace {

std::vector<std::pair<Name, Point>> place(const Scenario& sc, RandomStream& rng,
                                          double r) {
    std::vector<std::pair<Name, Point>> pl;
    const double reach = (1.0 - sc.phys.eps_c) * r;
    if (sc.topology == "uniform_square") {
        double side = sc.side;
        if (side <= 0.0) {
            // Aim for an average of ~8 neighbors so the graph is comfortably
            // connected without being a clique.
            side = reach * std::sqrt(std::max(1, sc.n) / 8.0 * 3.141592653589793);
        }
        for (int i = 0; i < sc.n; ++i)
            pl.push_back({i + 1, {rng.unit() * side, rng.unit() * side}});
    } else if (sc.topology == "path") {
        double sp = sc.spacing > 0.0 ? sc.spacing : 0.9 * reach;
        for (int i = 0; i < sc.n; ++i) pl.push_back({i + 1, {i * sp, 0.0}});
    } else if (sc.topology == "grid") {
        int k = sc.grid_k > 0 ? sc.grid_k
                              : static_cast<int>(std::ceil(std::sqrt(double(sc.n))));
        double sp = sc.spacing > 0.0 ? sc.spacing : 0.9 * reach;
        Name nm = 1;
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) pl.push_back({nm++, {j * sp, i * sp}});
    } else if (sc.topology == "star") {
        // A hub at the origin with leaves on a tight ring: every node hears
        // every other, so the hub's degree is n - 1.
        pl.push_back({1, {0.0, 0.0}});
        double rad = 0.25 * reach;
        for (int i = 1; i < sc.n; ++i) {
            double a = 2.0 * 3.141592653589793 * i / std::max(1, sc.n - 1);
            pl.push_back({i + 1, {rad * std::cos(a), rad * std::sin(a)}});
        }
    } else {  // file
        pl = load_placements_file(sc.file);
    }
    return pl;
}

bool min_sep_ok(const std::vector<std::pair<Name, Point>>& pl, double floor) {
    for (std::size_t i = 0; i < pl.size(); ++i)
        for (std::size_t j = i + 1; j < pl.size(); ++j)
            if (dist(pl[i].second, pl[j].second) < floor) return false;
    return true;
}

int component_count(const Network& net) {
    std::vector<int> comp(net.n(), -1);
    int cnt = 0;
    for (int s = 0; s < net.n(); ++s) {
        if (comp[s] >= 0) continue;
        comp[s] = cnt;
        std::deque<int> q{s};
        while (!q.empty()) {
            int v = q.front();
            q.pop_front();
            for (int u : net.neighbors(v))
                if (comp[u] < 0) {
                    comp[u] = cnt;
                    q.push_back(u);
                }
        }
        ++cnt;
    }
    return cnt;
}

}  // namespace

Network generate(const Scenario& sc, std::uint64_t seed) {
    const double r = max_range(sc.phys);
    int ns = sc.name_space;
    for (int attempt = 0; attempt < kConnectRetries; ++attempt) {
        RandomStream rng(seed, 0x9140 + attempt);
        auto pl = place(sc, rng, r);
        if (ns <= 0) ns = 4 * static_cast<int>(pl.size());
        if (!min_sep_ok(pl, 1e-6 * r)) {
            if (sc.topology == "uniform_square") continue;
            throw InputError("generate: placement has (near-)coincident nodes");
        }
        Network net = build_comm_graph(pl, ns, sc.phys);
        if (component_count(net) == 1) return net;
        if (sc.topology != "uniform_square")
            throw InputError("generate: placement is not connected");
    }
    throw InputError("generate: no connected placement within the retry budget");
}

GraphStats graph_stats(const Network& net) {
    GraphStats st;
    st.n = net.n();
    st.max_degree = net.max_degree;
    st.components = component_count(net);
    if (st.components != 1) {
        st.diameter = -1;
        return st;
    }
    int diam = 0;
    std::vector<int> d(net.n());
    for (int s = 0; s < net.n(); ++s) {
        std::fill(d.begin(), d.end(), -1);
        d[s] = 0;
        std::deque<int> q{s};
        while (!q.empty()) {
            int v = q.front();
            q.pop_front();
            for (int u : net.neighbors(v))
                if (d[u] < 0) {
                    d[u] = d[v] + 1;
                    diam = std::max(diam, d[u]);
                    q.push_back(u);
                }
        }
    }
    st.diameter = diam;
    return st;
}

bool oracle_is_mis(const Network& net, const std::vector<Name>& leaders) {
    std::vector<char> in(net.n(), 0);
    for (Name v : leaders) {
        if (!net.has_name(v)) return false;
        in[net.index_of(v)] = 1;
    }
    for (int i = 0; i < net.n(); ++i) {
        bool covered = in[i] != 0;
        for (int u : net.neighbors(i)) {
            if (in[i] && in[u]) return false;  // independence
            if (in[u]) covered = true;
        }
        if (!covered) return false;  // maximality
    }
    return true;
}

namespace {

struct SubGraph {
    std::vector<Name> nodes;                 // ascending
    std::vector<std::vector<int>> adj;       // indices into nodes
    std::map<Name, int> idx;
};

SubGraph induced(const Network& net, const std::vector<Name>& nodes) {
    SubGraph g;
    g.nodes = nodes;
    std::sort(g.nodes.begin(), g.nodes.end());
    g.nodes.erase(std::unique(g.nodes.begin(), g.nodes.end()), g.nodes.end());
    g.adj.resize(g.nodes.size());
    for (std::size_t i = 0; i < g.nodes.size(); ++i) g.idx[g.nodes[i]] = int(i);
    for (std::size_t i = 0; i < g.nodes.size(); ++i)
        for (std::size_t j = i + 1; j < g.nodes.size(); ++j)
            if (net.edge(g.nodes[i], g.nodes[j])) {
                g.adj[i].push_back(int(j));
                g.adj[j].push_back(int(i));
            }
    return g;
}

int sub_diameter(const SubGraph& g) {
    int n = int(g.nodes.size());
    if (n == 0) return 0;
    int diam = 0;
    std::vector<int> d(n);
    for (int s = 0; s < n; ++s) {
        std::fill(d.begin(), d.end(), -1);
        d[s] = 0;
        std::deque<int> q{s};
        while (!q.empty()) {
            int v = q.front();
            q.pop_front();
            for (int u : g.adj[v])
                if (d[u] < 0) {
                    d[u] = d[v] + 1;
                    diam = std::max(diam, d[u]);
                    q.push_back(u);
                }
        }
        for (int v = 0; v < n; ++v)
            if (d[v] < 0) return -1;
    }
    return diam;
}

bool connected_in(const Network& net, const std::vector<int>& members) {
    if (members.empty()) return false;
    std::set<int> in(members.begin(), members.end());
    std::set<int> seen{members[0]};
    std::deque<int> q{members[0]};
    while (!q.empty()) {
        int v = q.front();
        q.pop_front();
        for (int u : net.neighbors(v))
            if (in.count(u) && !seen.count(u)) {
                seen.insert(u);
                q.push_back(u);
            }
    }
    return seen.size() == in.size();
}

bool dominating_in(const Network& net, const std::vector<int>& members) {
    std::vector<char> dom(net.n(), 0);
    for (int v : members) {
        dom[v] = 1;
        for (int u : net.neighbors(v)) dom[u] = 1;
    }
    for (int i = 0; i < net.n(); ++i)
        if (!dom[i]) return false;
    return true;
}

}  // namespace

int min_cds_size(const Network& net) {
    const int n = net.n();
    if (n > 20) throw InputError("min_cds_size: exhaustive search capped at n = 20");
    if (n == 1) return 1;
    for (int k = 1; k <= n; ++k) {
        // All k-subsets via the standard combination walk.
        std::vector<int> pick(k);
        for (int i = 0; i < k; ++i) pick[i] = i;
        while (true) {
            if (dominating_in(net, pick) && connected_in(net, pick)) return k;
            int i = k - 1;
            while (i >= 0 && pick[i] == n - k + i) --i;
            if (i < 0) break;
            ++pick[i];
            for (int j = i + 1; j < k; ++j) pick[j] = pick[j - 1] + 1;
        }
    }
    return n;
}

BackboneCheck oracle_backbone(const Network& net, const BackboneResult& bb,
                              int degree_bound, bool brute_force_cds) {
    BackboneCheck chk;
    auto bbn = bb.backbone_nodes();
    chk.backbone_size = int(bbn.size());
    std::vector<int> members;
    for (Name v : bbn) {
        if (!net.has_name(v)) {
            chk.notes.push_back("backbone name " + std::to_string(v) + " not in network");
            return chk;
        }
        members.push_back(net.index_of(v));
    }
    if (members.empty()) {
        chk.notes.push_back("empty backbone");
        return chk;
    }
    chk.dominating = dominating_in(net, members);
    if (!chk.dominating) chk.notes.push_back("backbone is not dominating");
    chk.connected = connected_in(net, members);
    if (!chk.connected) chk.notes.push_back("backbone is not connected");

    SubGraph h = induced(net, bbn);
    for (const auto& a : h.adj)
        chk.backbone_degree = std::max(chk.backbone_degree, int(a.size()));
    chk.degree_ok = chk.backbone_degree <= degree_bound;
    if (!chk.degree_ok)
        chk.notes.push_back("backbone degree " + std::to_string(chk.backbone_degree) +
                            " exceeds bound " + std::to_string(degree_bound));
    chk.backbone_diameter = sub_diameter(h);

    chk.masters_ok = true;
    std::set<Name> bset(bbn.begin(), bbn.end());
    for (int i = 0; i < net.n(); ++i) {
        Name v = net.name_at(i);
        if (bset.count(v)) continue;
        auto it = bb.masters.find(v);
        if (it == bb.masters.end()) {
            chk.masters_ok = false;
            chk.notes.push_back("node " + std::to_string(v) + " has no master");
            continue;
        }
        if (!bset.count(it->second) || !net.edge(v, it->second)) {
            chk.masters_ok = false;
            chk.notes.push_back("node " + std::to_string(v) +
                                " has an invalid master " + std::to_string(it->second));
        }
    }
    if (brute_force_cds && net.n() <= 20) chk.min_cds = min_cds_size(net);
    chk.ok = chk.dominating && chk.connected && chk.degree_ok && chk.masters_ok;
    return chk;
}

FitResult scaling_fit(const std::vector<double>& model,
                      const std::vector<double>& observed) {
    FitResult fit;
    if (model.size() != observed.size() || model.empty())
        throw InputError("scaling_fit: mismatched or empty samples");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < model.size(); ++i) {
        num += model[i] * observed[i];
        den += model[i] * model[i];
    }
    if (den <= 0.0) throw InputError("scaling_fit: degenerate model column");
    fit.c = num / den;
    fit.within_factor2 = fit.c > 0.0;
    for (std::size_t i = 0; i < model.size(); ++i) {
        double pred = fit.c * model[i];
        if (pred <= 0.0 || observed[i] <= 0.0) {
            fit.within_factor2 = false;
            continue;
        }
        double ratio = std::max(observed[i] / pred, pred / observed[i]);
        fit.max_ratio = std::max(fit.max_ratio, ratio);
        if (ratio > 2.0) fit.within_factor2 = false;
    }
    return fit;
}

std::string MetricsRow::csv_header() {
    return "seed,n,name_space,delta,diam,rounds,success,max_node_random_bits,"
           "max_msg_control_bits,backbone_size,backbone_degree,backbone_diameter";
}

std::string MetricsRow::csv_line() const {
    std::ostringstream os;
    os << seed << ',' << n << ',' << name_space << ',' << delta << ',' << diam << ','
       << rounds << ',' << (success ? 1 : 0) << ',' << max_node_random_bits << ','
       << max_msg_control_bits << ',' << backbone_size << ',' << backbone_degree << ','
       << backbone_diameter;
    return os.str();
}

}  // namespace bb
