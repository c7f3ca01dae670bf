#pragma once

#include <cstdint>
#include <iosfwd>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bb/util.hpp"

namespace bb {

/// All scalars of the SINR model. Weak connectivity requires eps_c == eps_s;
/// validate() rejects a mismatch unless the override flag is set.
struct PhysicalConfig {
    double alpha = 4.0;  // path-loss exponent, > 2
    double noise = 1.0;  // ambient noise, > 0
    double beta = 1.0;   // SINR threshold, >= 1
    double power = 1.0;  // uniform transmission power, > 0
    double eps_s = 0.1;  // sensitivity parameter
    double eps_c = 0.1;  // connectivity parameter

    void validate(bool allow_eps_mismatch = false) const;
};

struct Point {
    double x = 0.0;
    double y = 0.0;
};

double dist(Point a, Point b);

/// r = (P / (N * beta))^(1/alpha): the largest distance at which a lone
/// transmission can be received.
double max_range(const PhysicalConfig& config);

/// Grid box of a point: boxes are half-open, left/bottom edges inclusive.
std::pair<long long, long long> box_of(Point p, double box_side);

/// Immutable node placement plus the derived communication graph and the
/// grid box index used by protocol density checks.
class Network {
public:
    int name_space = 0;
    double box_side = 0.0;
    int max_degree = 0;
    PhysicalConfig cfg;

    int n() const { return static_cast<int>(names_.size()); }
    Name name_at(int idx) const { return names_[idx]; }
    Point pos_at(int idx) const { return pos_[idx]; }
    int index_of(Name name) const;
    bool has_name(Name name) const { return index_.count(name) != 0; }
    const std::vector<int>& neighbors(int idx) const { return adj_[idx]; }
    bool edge(Name u, Name v) const;
    double dist_between(int a, int b) const { return dist(pos_[a], pos_[b]); }

    const std::vector<Name>& names() const { return names_; }
    /// Box index keyed by packed (bx, by); values are node indices.
    const std::unordered_map<std::uint64_t, std::vector<int>>& boxes() const { return boxes_; }
    static std::uint64_t pack_box(long long bx, long long by);

    friend Network build_comm_graph(const std::vector<std::pair<Name, Point>>& placements,
                                    int name_space, const PhysicalConfig& config);

private:
    std::vector<Name> names_;
    std::vector<Point> pos_;
    std::vector<std::vector<int>> adj_;
    std::unordered_map<Name, int> index_;
    std::unordered_map<std::uint64_t, std::vector<int>> boxes_;
};

/// Builds the communication graph: (u,v) is an edge iff dist <= (1-eps_c)*r.
/// Rejects duplicate names, names outside [1, name_space], and coincident
/// positions.
Network build_comm_graph(const std::vector<std::pair<Name, Point>>& placements,
                         int name_space, const PhysicalConfig& config);

/// SINR of Eq. (1). Preconditions: sender transmits, receiver does not,
/// positive distance.
double sinr(Name sender, Name receiver, const std::vector<Name>& transmitters,
            const Network& network, const PhysicalConfig& config);

/// Weak-sensitivity reception: SINR >= beta and dist <= (1-eps_s)*r.
bool receives(Name sender, Name receiver, const std::vector<Name>& transmitters,
              const Network& network, const PhysicalConfig& config);

/// Placement file: one `<name> <x> <y>` per line, `#` starts a comment.
std::vector<std::pair<Name, Point>> load_placements(std::istream& in);
std::vector<std::pair<Name, Point>> load_placements_file(const std::string& path);

}  // namespace bb
