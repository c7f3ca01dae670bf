// barebones: run wireless-network protocol simulations from scenario files,
// verify transmission schedules, sanity-check traces, and print graph stats.
//
// Exit codes: 0 success, 1 failed check, 2 bad input, 3 guard tripped.

#include <atomic>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bb/harness.hpp"
#include "bb/protocols.hpp"

namespace {

using namespace bb;

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        auto dash = tok.find('-');
        if (dash == std::string::npos) {
            out.push_back(std::stoull(tok));
        } else {
            std::uint64_t a = std::stoull(tok.substr(0, dash));
            std::uint64_t b = std::stoull(tok.substr(dash + 1));
            if (b < a) throw InputError("bad seed range " + tok);
            for (std::uint64_t s = a; s <= b; ++s) out.push_back(s);
        }
    }
    if (out.empty()) throw InputError("no seeds given");
    return out;
}

std::uint64_t default_round_limit(const Scenario& sc, const Network& net) {
    const int lg = name_bits_of(net.name_space);
    if (sc.protocol == "mis") return mis_rounds(net.name_space, net.max_degree, sc.proto) + 2;
    // Generous: broadcast- and backbone-style runs both fit well under this.
    return std::uint64_t(sc.proto.c_dfs) * net.n() * lg * lg * lg +
           std::uint64_t(sc.proto.c_bb) * std::max(net.max_degree, 1) * lg * lg * lg *
               1024ULL +
           1000000ULL;
}

struct SeedOutcome {
    MetricsRow row;
    bool ok = false;
};

SeedOutcome run_one(const Scenario& sc, std::uint64_t seed, TraceSink* sink) {
    Network net = generate(sc, seed);
    GraphStats gs = graph_stats(net);
    SeedOutcome so;
    so.row.seed = seed;
    so.row.n = net.n();
    so.row.name_space = net.name_space;
    so.row.delta = gs.max_degree;
    so.row.diam = gs.diameter;
    std::uint64_t limit = sc.round_limit ? sc.round_limit : default_round_limit(sc, net);
    if (sc.protocol == "dfs") {
        Name src = sc.source > 0 ? sc.source : net.name_at(0);
        auto res = wireless_dfs(net, sc.proto, src, seed, limit, sink);
        so.ok = res.completed;
        so.row.rounds = res.summary.rounds;
        so.row.max_node_random_bits = res.summary.max_node_random_bits;
        so.row.max_msg_control_bits = res.summary.max_msg_control_bits;
    } else if (sc.protocol == "mis") {
        auto res = mis_swd(net, sc.proto, seed, sink);
        so.ok = res.invariants_ok && oracle_is_mis(net, res.leaders);
        so.row.rounds = res.summary.rounds;
        so.row.max_node_random_bits = res.summary.max_node_random_bits;
        so.row.max_msg_control_bits = res.summary.max_msg_control_bits;
    } else if (sc.protocol == "backbone") {
        auto mis = mis_swd(net, sc.proto, seed);
        auto bb = connect_bb(net, sc.proto, mis, seed, sink);
        auto chk = oracle_backbone(net, bb, sc.proto.backbone_degree_bound, false);
        so.ok = oracle_is_mis(net, mis.leaders) && chk.ok;
        so.row.rounds = mis.summary.rounds + bb.summary.rounds;
        so.row.max_node_random_bits =
            std::max(mis.summary.max_node_random_bits, bb.summary.max_node_random_bits);
        so.row.max_msg_control_bits =
            std::max(mis.summary.max_msg_control_bits, bb.summary.max_msg_control_bits);
        so.row.backbone_size = chk.backbone_size;
        so.row.backbone_degree = chk.backbone_degree;
        so.row.backbone_diameter = chk.backbone_diameter;
    } else {  // emulated
        std::vector<Name> starts = sc.start_set;
        if (starts.empty()) starts = {sc.source > 0 ? sc.source : net.name_at(0)};
        auto res = emulated_dfs_backbone(net, sc.proto, starts, seed, limit, sink);
        auto chk = oracle_backbone(net, res.backbone, sc.proto.backbone_degree_bound, false);
        so.ok = res.all_awake && res.sources_ok && chk.ok;
        so.row.rounds = res.total_rounds;
        so.row.max_node_random_bits = res.summary.max_node_random_bits;
        so.row.max_msg_control_bits = res.summary.max_msg_control_bits;
        so.row.backbone_size = chk.backbone_size;
        so.row.backbone_degree = chk.backbone_degree;
        so.row.backbone_diameter = chk.backbone_diameter;
    }
    so.row.success = so.ok;
    return so;
}

int cmd_run(const std::string& scenario_path, const std::string& out_path,
            const std::string& trace_path, const std::string& seed_spec, int parallel,
            std::uint64_t round_limit) {
    Scenario sc = Scenario::from_json_text(slurp(scenario_path));
    if (round_limit) sc.round_limit = round_limit;
    auto seeds = parse_seeds(seed_spec);
    if (!trace_path.empty() && seeds.size() != 1)
        throw InputError("--trace needs exactly one seed");

    std::vector<SeedOutcome> outcomes(seeds.size());
    if (!trace_path.empty()) {
        std::ofstream tf(trace_path);
        if (!tf) throw InputError("cannot open " + trace_path);
        JsonlSink sink(tf);
        outcomes[0] = run_one(sc, seeds[0], &sink);
    } else if (parallel <= 1 || seeds.size() == 1) {
        for (std::size_t i = 0; i < seeds.size(); ++i)
            outcomes[i] = run_one(sc, seeds[i], nullptr);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        int k = std::min<int>(parallel, int(seeds.size()));
        for (int t = 0; t < k; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < seeds.size();
                     i = next.fetch_add(1))
                    outcomes[i] = run_one(sc, seeds[i], nullptr);
            });
        }
        for (auto& th : pool) th.join();
    }

    std::ostream* os = &std::cout;
    std::ofstream of;
    if (!out_path.empty()) {
        of.open(out_path);
        if (!of) throw InputError("cannot open " + out_path);
        os = &of;
    }
    *os << MetricsRow::csv_header() << '\n';
    std::size_t good = 0;
    for (const auto& so : outcomes) {
        *os << so.row.csv_line() << '\n';
        if (so.ok) ++good;
    }
    std::cerr << "ok " << good << "/" << outcomes.size() << '\n';
    return good == outcomes.size() ? 0 : 1;
}

int cmd_verify_family(const std::string& kind, int n, int x, int y, std::uint64_t seed,
                      int c) {
    if (kind == "ssf") {
        auto fam = build_ssf(n, x, seed, c);
        bool ok = verify_ssf(fam, x);
        std::cout << "ssf n=" << n << " x=" << x << " length=" << fam.length()
                  << (ok ? " verified" : " FAILED") << '\n';
        return ok ? 0 : 1;
    }
    if (kind == "selector") {
        if (y <= 0) y = std::max(1, x / 2);
        auto fam = build_selector(n, x, y, seed, c);
        bool ok = verify_selector(fam, x, y);
        std::cout << "selector n=" << n << " x=" << x << " y=" << y
                  << " length=" << fam.length() << (ok ? " verified" : " FAILED") << '\n';
        return ok ? 0 : 1;
    }
    throw InputError("kind must be ssf or selector");
}

int cmd_check_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    std::string line;
    std::uint64_t prev_round = 0;
    bool first = true, saw_summary = false;
    std::uint64_t rounds_seen = 0, tx_seen = 0, rx_seen = 0;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            std::cerr << "line " << lineno << ": bad JSON\n";
            return 1;
        }
        if (j.contains("summary")) {
            saw_summary = true;
            const auto& s = j["summary"];
            if (s["transmissions"].get<std::uint64_t>() != tx_seen ||
                s["deliveries"].get<std::uint64_t>() != rx_seen) {
                std::cerr << "summary counters disagree with the per-round records\n";
                return 1;
            }
            continue;
        }
        if (saw_summary) {
            std::cerr << "line " << lineno << ": round record after the summary\n";
            return 1;
        }
        std::uint64_t round = j.at("round").get<std::uint64_t>();
        if (!first && round <= prev_round) {
            std::cerr << "line " << lineno << ": rounds not strictly increasing\n";
            return 1;
        }
        first = false;
        prev_round = round;
        ++rounds_seen;
        std::set<std::int64_t> tx(j.at("tx").begin(), j.at("tx").end());
        tx_seen += j.at("tx").size();
        std::set<std::int64_t> receivers;
        for (const auto& d : j.at("rx")) {
            ++rx_seen;
            std::int64_t to = d.at("to"), from = d.at("from");
            if (!tx.count(from)) {
                std::cerr << "line " << lineno << ": delivery from a non-transmitter\n";
                return 1;
            }
            if (tx.count(to)) {
                std::cerr << "line " << lineno << ": a transmitter received\n";
                return 1;
            }
            if (!receivers.insert(to).second) {
                std::cerr << "line " << lineno << ": node received twice in one round\n";
                return 1;
            }
        }
    }
    if (!saw_summary) {
        std::cerr << "trace has no summary record\n";
        return 1;
    }
    std::cout << "trace ok: " << rounds_seen << " active rounds, " << tx_seen
              << " transmissions, " << rx_seen << " deliveries\n";
    return 0;
}

int cmd_stats(const std::string& scenario_path, std::uint64_t seed) {
    Scenario sc = Scenario::from_json_text(slurp(scenario_path));
    Network net = generate(sc, seed);
    GraphStats gs = graph_stats(net);
    nlohmann::json j;
    j["n"] = gs.n;
    j["name_space"] = net.name_space;
    j["max_degree"] = gs.max_degree;
    j["diameter"] = gs.diameter;
    j["components"] = gs.components;
    j["box_side"] = net.box_side;
    j["range"] = max_range(net.cfg);
    std::cout << j.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"barebones: SINR wireless-network protocol simulator"};
    app.require_subcommand(1);

    std::string scenario_path, out_path, trace_path, seed_spec = "1";
    int parallel = 1;
    std::uint64_t round_limit = 0;

    auto* run = app.add_subcommand("run", "run a scenario over one or more seeds");
    run->add_option("--scenario", scenario_path, "scenario JSON file")->required();
    run->add_option("--out", out_path, "write the metrics CSV here (default stdout)");
    run->add_option("--trace", trace_path, "write a JSONL trace (single seed only)");
    run->add_option("--seeds", seed_spec, "seed list, e.g. 1,2,5-8 (default 1)");
    run->add_option("--parallel", parallel, "worker threads (default 1)");
    run->add_option("--round-limit", round_limit, "override the scenario round limit");

    std::string kind = "ssf";
    int fam_n = 0, fam_x = 0, fam_y = 0, fam_c = 4;
    std::uint64_t fam_seed = 0x5eed;
    auto* vf = app.add_subcommand("verify-family", "build and verify a schedule family");
    vf->add_option("--kind", kind, "ssf | selector (default ssf)");
    vf->add_option("--n", fam_n, "name space")->required();
    vf->add_option("--x", fam_x, "density parameter")->required();
    vf->add_option("--y", fam_y, "selector hit target (default floor(x/2))");
    vf->add_option("--seed", fam_seed, "family seed (default 0x5eed)");
    vf->add_option("--c", fam_c, "length constant (default 4)");

    auto* ct = app.add_subcommand("check-trace", "validate a JSONL trace file");
    ct->add_option("--trace", trace_path, "trace file")->required();

    std::uint64_t stats_seed = 1;
    auto* st = app.add_subcommand("stats", "print graph statistics for a scenario");
    st->add_option("--scenario", scenario_path, "scenario JSON file")->required();
    st->add_option("--seed", stats_seed, "placement seed (default 1)");

    try {
        app.parse(argc, argv);
        if (run->parsed())
            return cmd_run(scenario_path, out_path, trace_path, seed_spec, parallel,
                           round_limit);
        if (vf->parsed())
            return cmd_verify_family(kind, fam_n, fam_x, fam_y, fam_seed, fam_c);
        if (ct->parsed()) return cmd_check_trace(trace_path);
        if (st->parsed()) return cmd_stats(scenario_path, stats_seed);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const GuardError& e) {
        std::cerr << "guard: " << e.what() << '\n';
        return 3;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
