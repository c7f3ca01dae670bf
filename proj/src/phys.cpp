#include "bb/phys.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace bb {

void PhysicalConfig::validate(bool allow_eps_mismatch) const {
    if (!(alpha > 2.0)) throw InputError("physical config: alpha must be > 2");
    if (!(noise > 0.0)) throw InputError("physical config: noise must be > 0");
    if (!(beta >= 1.0)) throw InputError("physical config: beta must be >= 1");
    if (!(power > 0.0)) throw InputError("physical config: power must be > 0");
    if (!(eps_s >= 0.0 && eps_s <= eps_c && eps_c < 1.0))
        throw InputError("physical config: need 0 <= eps_s <= eps_c < 1");
    if (eps_c != eps_s && !allow_eps_mismatch)
        throw InputError("physical config: eps_c != eps_s is strong connectivity, "
                         "rejected without explicit override");
}

double dist(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

double max_range(const PhysicalConfig& config) {
    config.validate(true);
    return std::pow(config.power / (config.noise * config.beta), 1.0 / config.alpha);
}

std::pair<long long, long long> box_of(Point p, double box_side) {
    if (!(box_side > 0.0)) throw InputError("box_of: box_side must be > 0");
    return {static_cast<long long>(std::floor(p.x / box_side)),
            static_cast<long long>(std::floor(p.y / box_side))};
}

std::uint64_t Network::pack_box(long long bx, long long by) {
    auto ux = static_cast<std::uint64_t>(static_cast<std::uint32_t>(bx));
    auto uy = static_cast<std::uint64_t>(static_cast<std::uint32_t>(by));
    return (ux << 32) | uy;
}

int Network::index_of(Name name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw InputError("unknown node name " + std::to_string(name));
    return it->second;
}

bool Network::edge(Name u, Name v) const {
    int a = index_of(u);
    int b = index_of(v);
    const auto& nb = adj_[a];
    return std::find(nb.begin(), nb.end(), b) != nb.end();
}

Network build_comm_graph(const std::vector<std::pair<Name, Point>>& placements,
                         int name_space, const PhysicalConfig& config) {
    config.validate();
    Network net;
    net.name_space = name_space;
    net.cfg = config;

    std::set<Name> seen;
    for (const auto& [name, p] : placements) {
        if (name < 1 || name > name_space)
            throw InputError("node name " + std::to_string(name) + " outside [1, name_space]");
        if (!seen.insert(name).second)
            throw InputError("duplicate node name " + std::to_string(name));
        if (!std::isfinite(p.x) || !std::isfinite(p.y))
            throw InputError("non-finite coordinate for node " + std::to_string(name));
    }

    // Canonical order: ascending names, so derived data is placement-order
    // independent.
    std::vector<std::pair<Name, Point>> sorted = placements;
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    for (const auto& [name, p] : sorted) {
        net.index_[name] = static_cast<int>(net.names_.size());
        net.names_.push_back(name);
        net.pos_.push_back(p);
    }

    const double r = max_range(config);
    const double radius = (1.0 - config.eps_c) * r;
    net.box_side = radius / std::sqrt(2.0);

    const int n = net.n();
    net.adj_.assign(n, {});
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double d = dist(net.pos_[i], net.pos_[j]);
            if (d == 0.0)
                throw InputError("coincident positions for nodes " +
                                 std::to_string(net.names_[i]) + " and " +
                                 std::to_string(net.names_[j]));
            if (d <= radius) {
                net.adj_[i].push_back(j);
                net.adj_[j].push_back(i);
            }
        }
    }
    for (int i = 0; i < n; ++i) {
        std::sort(net.adj_[i].begin(), net.adj_[i].end());
        net.max_degree = std::max(net.max_degree, static_cast<int>(net.adj_[i].size()));
    }
    for (int i = 0; i < n; ++i) {
        auto [bx, by] = box_of(net.pos_[i], net.box_side);
        net.boxes_[Network::pack_box(bx, by)].push_back(i);
    }
    return net;
}

double sinr(Name sender, Name receiver, const std::vector<Name>& transmitters,
            const Network& network, const PhysicalConfig& config) {
    config.validate(true);
    bool sender_in = false;
    for (Name t : transmitters) {
        if (t == receiver) throw InputError("sinr: receiver is transmitting");
        if (t == sender) sender_in = true;
    }
    if (!sender_in) throw InputError("sinr: sender not in transmitter set");
    if (sender == receiver) throw InputError("sinr: sender equals receiver");

    const int si = network.index_of(sender);
    const int ri = network.index_of(receiver);
    const double d = network.dist_between(si, ri);
    if (d == 0.0) throw InputError("sinr: coincident sender and receiver");

    const double signal = config.power * std::pow(d, -config.alpha);
    double interference = 0.0;
    for (Name t : transmitters) {
        if (t == sender) continue;
        double dw = network.dist_between(network.index_of(t), ri);
        interference += config.power * std::pow(dw, -config.alpha);
    }
    return signal / (config.noise + interference);
}

bool receives(Name sender, Name receiver, const std::vector<Name>& transmitters,
              const Network& network, const PhysicalConfig& config) {
    const double d =
        network.dist_between(network.index_of(sender), network.index_of(receiver));
    if (d > (1.0 - config.eps_s) * max_range(config)) return false;
    return sinr(sender, receiver, transmitters, network, config) >= config.beta;
}

std::vector<std::pair<Name, Point>> load_placements(std::istream& in) {
    std::vector<std::pair<Name, Point>> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        long long name;
        double x, y;
        if (!(ls >> name)) continue;  // blank or comment-only line
        if (!(ls >> x >> y))
            throw InputError("placement line " + std::to_string(lineno) + ": expected <name> <x> <y>");
        std::string rest;
        if (ls >> rest)
            throw InputError("placement line " + std::to_string(lineno) + ": trailing junk");
        out.emplace_back(static_cast<Name>(name), Point{x, y});
    }
    return out;
}

std::vector<std::pair<Name, Point>> load_placements_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open placement file " + path);
    return load_placements(f);
}

}  // namespace bb
