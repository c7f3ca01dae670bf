#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bb/combinat.hpp"
#include "bb/engine.hpp"
#include "bb/phys.hpp"
#include "bb/task.hpp"

namespace bb {

/// Every asymptotic constant from the algorithm descriptions, pinned to a
/// concrete default. The defaults are calibrated against the acceptance
/// suite: whp guarantees are asymptotic, so the knobs trade success
/// probability against schedule length at desk scale.
struct ProtocolConfig {
    int d_esun = 16;        // rounds per degree-estimation sub-stage, times log2 N
    double esun_eps = 0.25; // slack in the sub-stage qualification threshold
    double lun_c = 0.99;    // fraction of remaining neighbors learned per pass
    int c_phases = 6;       // MIS sub-phases per phase, times log2 N
    int x_light = 8;        // ssf width for constant-density transmitter sets
    int x_emul = 2;         // ssf width wrapping one emulated round
    int x_heavy_cap = 16;   // cap on the log^3-density ssf width
    int t_mult = 8;         // group-count multiplier for random block choice
    int y_mult = 8;         // slave-registration range multiplier
    int c_ssf = 4;          // ssf length constant (sets = c * x^2 * log2 N)
    int c_sel = 4;          // selector length constant (sets = c * x * log2 N)
    int b_msg = 16;         // message control-bit budget, times log2 N
    int c_bits = 256;       // per-node random-bit budget, times log2^3 N
    double c_dfs = 256.0;   // round-bound constant for broadcast scaling checks
    double c_bb = 64.0;     // round-bound constant for backbone scaling checks
    std::uint64_t family_seed = 0x5eedULL;  // common knowledge; shared schedules
    int backbone_degree_bound = 64;

    int x_heavy(int name_space) const;
};

int name_bits_of(int name_space);  // max(1, ceil(log2 name_space))

// Shared deterministic schedules, via the process-wide family cache.
const SelectionFamily& light_ssf(int name_space, const ProtocolConfig& pc);
const SelectionFamily& heavy_ssf(int name_space, const ProtocolConfig& pc);
const SelectionFamily& emul_ssf(int name_space, const ProtocolConfig& pc);
const SelectionFamily& lun_selector(int name_space, long long x, const ProtocolConfig& pc);
long long lun_y(long long x, const ProtocolConfig& pc);

std::uint64_t esun_rounds(int name_space, const ProtocolConfig& pc);
std::uint64_t mis_rounds(int name_space, int max_degree, const ProtocolConfig& pc);

// ---------------------------------------------------------------------------
// Channel abstraction: one protocol-level round, either plain (one engine
// round) or emulated (one full ssf execution with feedback rules).
// ---------------------------------------------------------------------------

/// Thrown by an emulated channel when a message with a higher source name is
/// heard: the node must cease its current execution and adopt the new source.
struct Preempted {
    Name source = -1;
    std::optional<Message> msg;  // present iff the new source had a unique sender
};

class Chan {
public:
    explicit Chan(NodeCtx& c) : c_(c) {}
    virtual ~Chan() = default;

    /// One protocol round: transmit m if present, otherwise listen.
    /// Returns the received message, if any.
    virtual Task<std::optional<Message>> step(std::optional<Message> m) = 0;
    /// Listen for k protocol rounds; returns everything received.
    virtual Task<std::vector<Message>> collect(std::uint64_t k) = 0;
    /// Listen until the first nonempty reception, at most until the engine
    /// round limit. Returns nullopt if the limit cuts the wait short.
    virtual Task<std::optional<Message>> recv() = 0;

    NodeCtx& ctx() { return c_; }

protected:
    NodeCtx& c_;
};

class PlainChan : public Chan {
public:
    using Chan::Chan;
    Task<std::optional<Message>> step(std::optional<Message> m) override;
    Task<std::vector<Message>> collect(std::uint64_t k) override;
    Task<std::optional<Message>> recv() override;
};

class EmulChan : public Chan {
public:
    EmulChan(NodeCtx& c, const SelectionFamily& fam, std::uint64_t base, Name source)
        : Chan(c), fam_(fam), base_(base), source_(source) {}

    Task<std::optional<Message>> step(std::optional<Message> m) override;
    Task<std::vector<Message>> collect(std::uint64_t k) override;
    Task<std::optional<Message>> recv() override;

    /// Listen up to the next emulated-round boundary (no-op when aligned).
    Task<void> align();

    Name source() const { return source_; }
    void set_source(Name s) { source_ = s; }

private:
    std::optional<Message> feedback(std::vector<Message>& heard);
    const SelectionFamily& fam_;
    std::uint64_t base_;
    Name source_;
};

// ---------------------------------------------------------------------------
// Wireless_DFS (with ESUN + LUN inside)
// ---------------------------------------------------------------------------

struct DfsNodeState {
    enum class Status { Unexplored, Viewed, Grey, Black };
    Status status = Status::Unexplored;
    std::optional<Name> parent;
    std::vector<Name> viewed_set;
    std::optional<std::uint64_t> estimate;
    bool token_holder = false;
};

struct DfsResult {
    bool completed = false;  // source finished and every node ended black
    std::vector<DfsNodeState> states;  // indexed like the network
    std::vector<char> awake;
    RunSummary summary;
};

DfsResult wireless_dfs(const Network& net, const ProtocolConfig& pc, Name source,
                       std::uint64_t seed, std::uint64_t round_limit,
                       TraceSink* sink = nullptr);

// ---------------------------------------------------------------------------
// Mis_SWD
// ---------------------------------------------------------------------------

struct MisNodeState {
    enum class Status { Worker, Candidate, Leader, Slave };
    Status status = Status::Worker;
    std::optional<Name> master;
    std::vector<Name> heard_leaders;
};

struct MisResult {
    std::vector<Name> leaders;  // ascending
    std::vector<MisNodeState> states;
    bool invariants_ok = true;
    std::vector<std::string> violations;
    RunSummary summary;
};

MisResult mis_swd(const Network& net, const ProtocolConfig& pc, std::uint64_t seed,
                  TraceSink* sink = nullptr);

// ---------------------------------------------------------------------------
// ConnectBB, Inter_H, Intra_H
// ---------------------------------------------------------------------------

struct ConnectorRec {
    Name via = -1;   // the connector itself
    Name from = -1;  // leader pair it serves
    Name to = -1;
    Name partner = -1;  // second connector on a 3-hop path, if any
};

struct BackboneResult {
    std::vector<Name> leaders;            // ascending
    std::vector<ConnectorRec> connectors; // sorted by (via, from, to)
    std::map<Name, Name> masters;         // non-backbone name -> backbone name
    std::map<Name, std::vector<Name>> bb_neighbors;
    std::string inter_family_key;
    std::uint64_t a1 = 0;
    std::map<Name, int> sigma;            // slave -> slot on its master's list
    std::string intra_family_key;
    std::uint64_t a2 = 0;
    std::vector<std::string> violations;
    RunSummary summary;

    std::vector<Name> backbone_nodes() const;  // leaders + connectors, ascending
    std::string to_json() const;
};

BackboneResult connect_bb(const Network& net, const ProtocolConfig& pc,
                          const MisResult& mis, std::uint64_t seed,
                          TraceSink* sink = nullptr);

/// Standalone Intra_H schedule computation (registration + acknowledgment
/// run); fills sigma/a2 on the given result. connect_bb already does this.
void compute_intra_h(const Network& net, const ProtocolConfig& pc, BackboneResult& bb,
                     std::uint64_t seed);

/// One Inter_H multi-round: the given backbone nodes transmit their payloads;
/// afterwards leaders rebroadcast once for their slaves. Returns, per node,
/// the ascending sender names it received.
std::map<Name, std::vector<Name>> run_inter_h(const Network& net, const ProtocolConfig& pc,
                                              const BackboneResult& bb,
                                              const std::vector<Name>& senders,
                                              std::uint64_t seed);

/// One Intra_H multi-round: every slave with an assigned slot transmits to
/// its master. Returns, per master, the ascending slave names received.
std::map<Name, std::vector<Name>> run_intra_h(const Network& net, const ProtocolConfig& pc,
                                              const BackboneResult& bb, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Partly coordinated start
// ---------------------------------------------------------------------------

struct EmulResult {
    bool all_awake = false;
    int max_box_sources = 0;   // distinct stored source names per grid box, max
    bool sources_ok = true;    // never exceeded 25, and monotone per node
    Name winning_source = -1;
    MisResult mis;             // the final synchronized run
    BackboneResult backbone;
    std::uint64_t total_rounds = 0;
    RunSummary summary;        // of the wake-up run
};

EmulResult emulated_dfs_backbone(const Network& net, const ProtocolConfig& pc,
                                 const std::vector<Name>& start_set, std::uint64_t seed,
                                 std::uint64_t round_limit, TraceSink* sink = nullptr);

}  // namespace bb
