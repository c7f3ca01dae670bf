#include "bb/combinat.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace bb {
namespace {

using nlohmann::json;

// Sum of C(n, k) for 1 <= k <= x, saturating at cap + 1.
long long subset_count_capped(int n, int x, long long cap) {
    long long total = 0;
    long double c = 1;  // C(n, 0)
    for (int k = 1; k <= x; ++k) {
        c = c * (n - k + 1) / k;
        if (c > static_cast<long double>(cap)) return cap + 1;
        total += static_cast<long long>(c);
        if (total > cap) return cap + 1;
    }
    return total;
}

std::vector<std::vector<Name>> draw_sets(int name_space, int x, int count,
                                         std::uint64_t seed) {
    RandomStream rng(seed, 0x5e75ULL);
    std::vector<std::vector<Name>> sets(count);
    for (auto& s : sets) {
        for (Name v = 1; v <= name_space; ++v) {
            if (rng.below(static_cast<std::uint64_t>(x)) == 0) s.push_back(v);
        }
    }
    return sets;
}

// Enumerates all subsets of {1..n} of size exactly k, invoking fn(members).
template <class Fn>
void for_each_combination(int n, int k, Fn&& fn) {
    std::vector<Name> z(k);
    for (int i = 0; i < k; ++i) z[i] = i + 1;
    for (;;) {
        fn(z);
        int i = k - 1;
        while (i >= 0 && z[i] == n - (k - 1 - i)) --i;
        if (i < 0) break;
        ++z[i];
        for (int j = i + 1; j < k; ++j) z[j] = z[j - 1] + 1;
    }
}

// Marks which elements of Z are isolated by some set of the family.
// Returns the number of isolated elements.
int count_isolated(const SelectionFamily& fam, const std::vector<Name>& z,
                   std::vector<char>& scratch) {
    scratch.assign(z.size(), 0);
    int isolated = 0;
    const int len = fam.length();
    for (int i = 0; i < len && isolated < static_cast<int>(z.size()); ++i) {
        int hits = 0;
        int last = -1;
        for (int j = 0; j < static_cast<int>(z.size()); ++j) {
            if (fam.member(z[j], i)) {
                if (++hits > 1) break;
                last = j;
            }
        }
        if (hits == 1 && !scratch[last]) {
            scratch[last] = 1;
            ++isolated;
        }
    }
    return isolated;
}

bool spot_check(const SelectionFamily& fam, int x, int y, std::uint64_t seed) {
    RandomStream rng(seed, 0xc0ffeeULL);
    std::vector<int> slot_hits(fam.length(), 0);
    for (int trial = 0; trial < 500; ++trial) {
        // Random x-subset of [1, N].
        std::vector<Name> z;
        while (static_cast<int>(z.size()) < x) {
            Name v = static_cast<Name>(rng.below(fam.name_space)) + 1;
            if (std::find(z.begin(), z.end(), v) == z.end()) z.push_back(v);
        }
        // Per-slot occupancy over Z, then isolation per element; this is
        // O(sum of slot lists) per trial rather than O(length * x).
        std::fill(slot_hits.begin(), slot_hits.end(), 0);
        for (Name v : z)
            for (int s : fam.slots_of(v)) ++slot_hits[s];
        int isolated = 0;
        for (Name v : z) {
            for (int s : fam.slots_of(v)) {
                if (slot_hits[s] == 1) {
                    ++isolated;
                    break;
                }
            }
        }
        if (isolated < y) return false;
    }
    return true;
}

}  // namespace

SelectionFamily::SelectionFamily(int name_space, FamilyKind kind, int x, int y,
                                 std::uint64_t seed, std::vector<std::vector<Name>> sets)
    : name_space(name_space), kind(kind), x(x), y(y), seed(seed), sets_(std::move(sets)) {
    for (auto& s : sets_) {
        std::sort(s.begin(), s.end());
        for (Name v : s) {
            if (v < 1 || v > name_space)
                throw InputError("selection family: element " + std::to_string(v) +
                                 " outside [1, name_space]");
        }
    }
    build_index();
}

void SelectionFamily::build_index() {
    node_slots_.assign(name_space + 1, {});
    for (int i = 0; i < length(); ++i) {
        for (Name v : sets_[i]) node_slots_[v].push_back(i);
    }
    if (name_space <= 64) {
        masks_.assign(sets_.size(), 0);
        for (size_t i = 0; i < sets_.size(); ++i) {
            for (Name v : sets_[i]) masks_[i] |= 1ULL << (v - 1);
        }
    }
}

bool SelectionFamily::member(Name node, int slot) const {
    if (!masks_.empty()) return (masks_[slot] >> (node - 1)) & 1ULL;
    const auto& s = sets_[slot];
    return std::binary_search(s.begin(), s.end(), node);
}

bool SelectionFamily::scheduled(Name node, int slot) const {
    if (slot < 0 || slot >= length())
        throw InputError("scheduled: slot " + std::to_string(slot) + " out of range");
    if (node < 1 || node > name_space)
        throw InputError("scheduled: node " + std::to_string(node) + " outside [1, name_space]");
    return member(node, slot);
}

const std::vector<int>& SelectionFamily::slots_of(Name node) const {
    if (node < 1 || node > name_space)
        throw InputError("slots_of: node outside [1, name_space]");
    return node_slots_[node];
}

std::string SelectionFamily::to_json() const {
    json j;
    j["name_space"] = name_space;
    j["kind"] = kind == FamilyKind::Ssf ? "ssf" : "selector";
    j["params"] = {{"x", x}, {"y", y}, {"seed", seed}};
    j["sets"] = sets_;
    return j.dump();
}

SelectionFamily SelectionFamily::from_json(const std::string& text) {
    json j = json::parse(text);
    FamilyKind kind = j.at("kind").get<std::string>() == "ssf" ? FamilyKind::Ssf
                                                               : FamilyKind::Selector;
    return SelectionFamily(j.at("name_space").get<int>(), kind,
                           j.at("params").at("x").get<int>(),
                           j.at("params").at("y").get<int>(),
                           j.at("params").at("seed").get<std::uint64_t>(),
                           j.at("sets").get<std::vector<std::vector<Name>>>());
}

bool verify_ssf(const SelectionFamily& family, int x, long long guard_cap) {
    if (x < 1 || x > family.name_space) throw InputError("verify_ssf: bad x");
    if (subset_count_capped(family.name_space, x, guard_cap) > guard_cap)
        throw GuardError("verify_ssf: subset count exceeds guard cap");
    std::vector<char> scratch;
    for (int k = 1; k <= x; ++k) {
        bool ok = true;
        for_each_combination(family.name_space, k, [&](const std::vector<Name>& z) {
            if (!ok) return;
            if (count_isolated(family, z, scratch) < k) ok = false;
        });
        if (!ok) return false;
    }
    return true;
}

bool verify_selector(const SelectionFamily& family, int x, int y, long long guard_cap) {
    if (y < 1 || y > x || x > family.name_space) throw InputError("verify_selector: bad x/y");
    if (subset_count_capped(family.name_space, x, guard_cap) > guard_cap)
        throw GuardError("verify_selector: subset count exceeds guard cap");
    std::vector<char> scratch;
    bool ok = true;
    for_each_combination(family.name_space, x, [&](const std::vector<Name>& a) {
        if (!ok) return;
        if (count_isolated(family, a, scratch) < y) ok = false;
    });
    return ok;
}

namespace {

SelectionFamily build_family(FamilyKind kind, int name_space, int x, int y,
                             std::uint64_t seed, int c) {
    const int log_n = ceil_log2(static_cast<std::uint64_t>(name_space));
    const int count = kind == FamilyKind::Ssf ? c * x * x * log_n : c * x * log_n;
    constexpr int kRetryBudget = 16;
    for (int attempt = 0; attempt < kRetryBudget; ++attempt) {
        std::uint64_t sub_seed = seed + 0x9e37ULL * attempt;
        SelectionFamily fam(name_space, kind, x, y, seed,
                            draw_sets(name_space, x, count, sub_seed));
        bool ok;
        try {
            ok = kind == FamilyKind::Ssf ? verify_ssf(fam, x) : verify_selector(fam, x, y);
        } catch (const GuardError&) {
            // Above the exhaustive cap: accept with the statistical spot check.
            ok = spot_check(fam, x, y, sub_seed);
        }
        if (ok) return fam;
    }
    throw GuardError("family construction failed after retry budget (constant too small?)");
}

}  // namespace

SelectionFamily build_ssf(int name_space, int x, std::uint64_t seed, int c_ssf) {
    if (x < 1 || x > name_space) throw InputError("build_ssf: need 1 <= x <= name_space");
    return build_family(FamilyKind::Ssf, name_space, x, x, seed, c_ssf);
}

SelectionFamily build_selector(int name_space, int x, int y, std::uint64_t seed, int c_sel) {
    if (y < 1 || y > x || x > name_space)
        throw InputError("build_selector: need 1 <= y <= x <= name_space");
    return build_family(FamilyKind::Selector, name_space, x, y, seed, c_sel);
}

std::shared_ptr<const SelectionFamily> FamilyCache::ssf(int name_space, int x,
                                                        std::uint64_t seed, int c_ssf) {
    std::ostringstream key;
    key << "ssf_" << name_space << "_" << x << "_" << x << "_" << seed << "_" << c_ssf;
    return lookup_or_build(key.str(), FamilyKind::Ssf, name_space, x, x, seed, c_ssf);
}

std::shared_ptr<const SelectionFamily> FamilyCache::selector(int name_space, int x, int y,
                                                             std::uint64_t seed, int c_sel) {
    std::ostringstream key;
    key << "sel_" << name_space << "_" << x << "_" << y << "_" << seed << "_" << c_sel;
    return lookup_or_build(key.str(), FamilyKind::Selector, name_space, x, y, seed, c_sel);
}

std::shared_ptr<const SelectionFamily> FamilyCache::lookup_or_build(
    const std::string& key, FamilyKind kind, int name_space, int x, int y,
    std::uint64_t seed, int c) {
    {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }
    const char* dir = std::getenv("BAREBONES_CACHE_DIR");
    std::filesystem::path file;
    if (dir && *dir) {
        file = std::filesystem::path(dir) / (key + ".json");
        std::ifstream in(file);
        if (in) {
            std::stringstream buf;
            buf << in.rdbuf();
            auto fam = std::make_shared<const SelectionFamily>(
                SelectionFamily::from_json(buf.str()));
            std::lock_guard<std::mutex> lock(mu_);
            return cache_.emplace(key, fam).first->second;
        }
    }
    auto fam = std::make_shared<const SelectionFamily>(
        kind == FamilyKind::Ssf ? build_ssf(name_space, x, seed, c)
                                : build_selector(name_space, x, y, seed, c));
    if (!file.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(file.parent_path(), ec);
        std::ofstream out(file);
        if (out) out << fam->to_json();
    }
    std::lock_guard<std::mutex> lock(mu_);
    return cache_.emplace(key, fam).first->second;
}

FamilyCache& family_cache() {
    static FamilyCache cache;
    return cache;
}

}  // namespace bb
