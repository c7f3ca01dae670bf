#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "bb/util.hpp"

namespace bb {

enum class FamilyKind { Ssf, Selector };

/// An indexed sequence of name-subsets of [1, name_space], used as a
/// deterministic transmission schedule: node v is scheduled in slot i iff
/// v is a member of sets[i].
class SelectionFamily {
public:
    int name_space = 0;
    FamilyKind kind = FamilyKind::Ssf;
    int x = 0;
    int y = 0;  // selector only; equals x for ssf
    std::uint64_t seed = 0;

    SelectionFamily() = default;
    SelectionFamily(int name_space, FamilyKind kind, int x, int y, std::uint64_t seed,
                    std::vector<std::vector<Name>> sets);

    int length() const { return static_cast<int>(sets_.size()); }
    const std::vector<std::vector<Name>>& sets() const { return sets_; }
    bool member(Name node, int slot) const;

    /// Schedule bit: true iff node is in sets[slot]. Throws on a bad slot.
    bool scheduled(Name node, int slot) const;

    /// Ascending slots in which the node is scheduled.
    const std::vector<int>& slots_of(Name node) const;

    std::string to_json() const;
    static SelectionFamily from_json(const std::string& text);

private:
    std::vector<std::vector<Name>> sets_;
    std::vector<std::uint64_t> masks_;          // length() words per set when N <= 64
    std::vector<std::vector<int>> node_slots_;  // per name (1-based), ascending
    void build_index();
};

/// Randomized (N,x)-ssf construction: C_ssf * x^2 * ceil(log2 N) sets, each
/// including each name with probability 1/x. At desk scale the result is
/// verified exhaustively and rebuilt under fresh sub-seeds on failure; above
/// the verification guard it is spot-checked on random x-subsets.
SelectionFamily build_ssf(int name_space, int x, std::uint64_t seed, int c_ssf = 8);

/// Exhaustive (N,x)-ssf check: every nonempty Z with |Z| <= x has, for every
/// z in Z, a set with sets[i] ∩ Z = {z}. Throws GuardError when the subset
/// count exceeds guard_cap.
bool verify_ssf(const SelectionFamily& family, int x, long long guard_cap = 100000);

/// Randomized (N,x,y)-selector; same construction scheme with C_sel * x *
/// ceil(log2 N) sets.
SelectionFamily build_selector(int name_space, int x, int y, std::uint64_t seed, int c_sel = 8);

/// Exhaustive selector check: every A with |A| = x has at least y elements z
/// with some sets[i] ∩ A = {z}.
bool verify_selector(const SelectionFamily& family, int x, int y,
                     long long guard_cap = 100000);

/// Process-wide family cache so all protocol nodes share one deterministic
/// schedule per parameter tuple. Safe for concurrent lookup-or-build. When
/// BAREBONES_CACHE_DIR is set, families are also persisted there as JSON.
class FamilyCache {
public:
    std::shared_ptr<const SelectionFamily> ssf(int name_space, int x, std::uint64_t seed,
                                               int c_ssf = 8);
    std::shared_ptr<const SelectionFamily> selector(int name_space, int x, int y,
                                                    std::uint64_t seed, int c_sel = 8);

private:
    std::shared_ptr<const SelectionFamily> lookup_or_build(const std::string& key,
                                                           FamilyKind kind, int name_space,
                                                           int x, int y, std::uint64_t seed,
                                                           int c);
    std::mutex mu_;
    std::unordered_map<std::string, std::shared_ptr<const SelectionFamily>> cache_;
};

FamilyCache& family_cache();

}  // namespace bb
