#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bb/phys.hpp"
#include "bb/protocols.hpp"

namespace bb {

/// Scenario description, loaded from versioned JSON. Unknown keys and missing
/// required keys are rejected so typos never silently change an experiment.
struct Scenario {
    std::string topology = "uniform_square";  // uniform_square | path | grid | star | file
    int n = 0;
    int name_space = 0;       // 0 -> 4 * n
    double side = 0.0;        // uniform_square: 0 -> chosen from density
    double spacing = 0.0;     // path: 0 -> 0.9 * (1 - eps_c) * r
    int grid_k = 0;           // grid: k x k nodes (n ignored when > 0)
    std::string file;         // placement file for topology "file"
    PhysicalConfig phys;
    ProtocolConfig proto;
    std::string protocol = "dfs";  // dfs | mis | backbone | emulated
    Name source = -1;              // dfs: 0/-1 -> smallest name
    std::vector<Name> start_set;   // emulated: empty -> {source}
    std::uint64_t round_limit = 0; // 0 -> a generous protocol-specific bound

    static Scenario from_json_text(const std::string& text);
    std::string to_json_text() const;
};

/// Deterministic placement generation; throws InputError when a connected
/// placement cannot be found within the retry budget.
Network generate(const Scenario& sc, std::uint64_t seed);

struct GraphStats {
    int n = 0;
    int max_degree = 0;
    int diameter = 0;    // hops; -1 when disconnected
    int components = 1;
};

GraphStats graph_stats(const Network& net);

/// True iff `leaders` is a maximal independent set of the communication
/// graph.
bool oracle_is_mis(const Network& net, const std::vector<Name>& leaders);

struct BackboneCheck {
    bool ok = false;
    bool dominating = false;
    bool connected = false;
    bool degree_ok = false;
    bool masters_ok = false;
    int backbone_size = 0;
    int backbone_degree = 0;      // max degree inside H
    int backbone_diameter = 0;    // hops within H; -1 when disconnected
    std::optional<int> min_cds;   // brute force, only for small n
    std::vector<std::string> notes;
};

/// Structural validation of a constructed backbone against the network.
BackboneCheck oracle_backbone(const Network& net, const BackboneResult& bb,
                              int degree_bound, bool brute_force_cds);

/// Smallest connected dominating set size, exhaustive; n must be <= 20.
int min_cds_size(const Network& net);

struct FitResult {
    double c = 0.0;        // least-squares scale against the model column
    double max_ratio = 0.0;  // worst observed/model ratio after scaling
    bool within_factor2 = false;
};

/// Fits observed = c * model by least squares and reports the worst residual
/// ratio; within_factor2 holds when every point sits in [c/2, 2c].
FitResult scaling_fit(const std::vector<double>& model,
                      const std::vector<double>& observed);

struct MetricsRow {
    std::uint64_t seed = 0;
    int n = 0;
    int name_space = 0;
    int delta = 0;
    int diam = 0;
    std::uint64_t rounds = 0;
    bool success = false;
    std::uint64_t max_node_random_bits = 0;
    std::uint64_t max_msg_control_bits = 0;
    int backbone_size = -1;
    int backbone_degree = -1;
    int backbone_diameter = -1;

    static std::string csv_header();
    std::string csv_line() const;
};

}  // namespace bb
