#pragma once

#include <coroutine>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <queue>
#include <string>
#include <vector>

#include "bb/phys.hpp"
#include "bb/task.hpp"
#include "bb/util.hpp"

namespace bb {

// ---------------------------------------------------------------------------
// Messages
// ---------------------------------------------------------------------------

enum class MsgKind : std::uint8_t {
    Generic,
    EsunStart,     // a = stage index carrier via f1
    EsunPing,
    LunSelStart,   // f1 = pass index, f2 = selector width
    LunName,       // participant announces its own name (src)
    LunAnnounce,   // a = learned name
    LunDone,
    TokenPass,     // a = target child
    TokenReturn,   // a = parent
    DfsDone,
    MisCandidate,
    MisLeader,
    BbLeaderName,
    BbTwoHop,      // a = leader g, f1 = block index
    BbRelay,       // a = endpoint u, b = its leader g_u, f1 = block f_u
    BbInform,      // a = far leader, b/c = connector(s); src = near leader
    BbInform2,     // a = second connector, b/c = leader pair; src = first connector
    BbBackbone,
    InterMsg,      // rumor-bearing broadcast on the backbone
    IntraReg,      // a = master name
    IntraAck,      // a = slave name, f1 = ack slot
    IntraMsg,
};

/// One transmission payload. Field usage depends on kind; unused fields stay
/// at their defaults and do not count toward the control-bit budget.
struct Message {
    Name src = 0;
    MsgKind kind = MsgKind::Generic;
    Name a = -1;
    Name b = -1;
    Name c = -1;
    std::int64_t f1 = -1;
    std::int64_t f2 = -1;
    std::int64_t counter = -1;   // sender's local round counter, for clock sync
    bool rumor = false;
    Name source_tag = -1;        // emulation: name of the originating source
    std::int64_t emul_round = -1;

    /// Control bits carried: each name field costs name_bits, each counter
    /// field the width of its value, plus a fixed tag/flag overhead.
    std::uint64_t control_bits(int name_bits) const;
};

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

struct TraceDelivery {
    Name to = 0;
    Name from = 0;
};

struct TraceRound {
    std::uint64_t round = 0;
    std::vector<Name> tx;             // ascending
    std::vector<TraceDelivery> rx;    // ascending by `to`
    std::vector<Name> wake;           // nodes woken by a delivery this round
};

struct RunSummary {
    std::uint64_t rounds = 0;
    bool finished = false;      // a node called finish()
    bool hit_limit = false;
    std::uint64_t transmissions = 0;
    std::uint64_t deliveries = 0;
    std::uint64_t max_node_random_bits = 0;
    std::uint64_t max_msg_control_bits = 0;
};

class TraceSink {
public:
    virtual ~TraceSink() = default;
    virtual void on_round(const TraceRound&) {}
    virtual void on_summary(const RunSummary&) {}
};

class CollectSink : public TraceSink {
public:
    void on_round(const TraceRound& r) override { rounds.push_back(r); }
    void on_summary(const RunSummary& s) override { summary = s; }
    std::vector<TraceRound> rounds;
    RunSummary summary;
};

/// Streams one JSON object per active round, then a summary object.
class JsonlSink : public TraceSink {
public:
    explicit JsonlSink(std::ostream& os) : os_(os) {}
    void on_round(const TraceRound& r) override;
    void on_summary(const RunSummary& s) override;

private:
    std::ostream& os_;
};

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

class Engine;

/// Top-level coroutine handle for one node's behavior.
class Proc {
public:
    struct promise_type {
        std::exception_ptr error;
        Proc get_return_object() {
            return Proc(std::coroutine_handle<promise_type>::from_promise(*this));
        }
        std::suspend_always initial_suspend() noexcept { return {}; }
        std::suspend_always final_suspend() noexcept { return {}; }
        void return_void() {}
        void unhandled_exception() { error = std::current_exception(); }
    };

    Proc() = default;
    explicit Proc(std::coroutine_handle<promise_type> h) : h_(h) {}
    Proc(Proc&& o) noexcept : h_(std::exchange(o.h_, nullptr)) {}
    Proc& operator=(Proc&& o) noexcept {
        if (this != &o) {
            if (h_) h_.destroy();
            h_ = std::exchange(o.h_, nullptr);
        }
        return *this;
    }
    Proc(const Proc&) = delete;
    Proc& operator=(const Proc&) = delete;
    ~Proc() {
        if (h_) h_.destroy();
    }

    std::coroutine_handle<promise_type> handle() const { return h_; }

private:
    std::coroutine_handle<promise_type> h_;
};

/// Per-node interface handed to the behavior coroutine. All interaction with
/// the channel goes through the awaitables below; each co_await consumes one
/// or more whole rounds.
class NodeCtx {
public:
    Name name = 0;
    int idx = 0;

    std::uint64_t now() const;
    std::uint64_t round_limit() const;
    const Network& net() const;

    /// Fair random bits, with per-node accounting.
    std::uint64_t draw_bits(int k);
    /// True with probability 2^-k.
    bool coin_pow2(int k) { return draw_bits(k) == 0; }
    /// True with probability ~p (32-bit resolution).
    bool chance(double p);
    /// Uniform in [0, n).
    std::uint64_t draw_below(std::uint64_t n);

    /// Signal global termination; the engine stops after this round.
    void finish();

    /// Delivery that woke this node, if it was started by a reception.
    std::optional<Message> wake_msg;

    // --- awaitables -------------------------------------------------------

    struct TransmitAw {
        NodeCtx* c;
        bool await_ready() const noexcept { return false; }
        void await_suspend(std::coroutine_handle<> h);
        void await_resume() const noexcept {}
    };
    struct ListenAw {
        NodeCtx* c;
        std::uint64_t k;
        bool await_ready() const noexcept { return false; }
        void await_suspend(std::coroutine_handle<> h);
        std::vector<Message> await_resume();
    };
    struct ListenOneAw {
        NodeCtx* c;
        std::uint64_t k;
        bool await_ready() const noexcept { return false; }
        void await_suspend(std::coroutine_handle<> h);
        std::optional<Message> await_resume();
    };

    /// Transmit m this round (src/counter filled in by the engine).
    TransmitAw transmit(Message m);
    /// Listen for k rounds; returns every message received in that window.
    ListenAw listen(std::uint64_t k);
    /// Listen for at most k rounds; returns at the end of the first round
    /// with a reception, or empty after k silent rounds.
    ListenOneAw listen_one(std::uint64_t k);

private:
    friend class Engine;

    enum class Mode : std::uint8_t {
        Asleep,   // not yet started
        Idle,     // being resumed right now
        Transmit,
        Listen,
        ListenOne,
        Done,     // coroutine finished
    };

    Engine* eng = nullptr;
    Mode mode = Mode::Asleep;
    std::uint64_t gen = 0;          // invalidates stale heap entries
    std::uint64_t deadline = 0;     // listen window end (exclusive)
    Message outgoing;
    std::vector<Message> inbox;
    bool got_one = false;           // ListenOne: a delivery arrived this round
    std::coroutine_handle<> waiting;
    RandomStream rng{0, 0};
    std::uint64_t random_bits = 0;
    std::uint64_t local_counter = 0;  // rounds since this node woke
    std::uint64_t wake_round = 0;
};

enum class StartKind { Synchronized, Subset };

/// Which nodes are awake at round 0. Everyone else sleeps until it receives
/// a message (and then starts at the beginning of the next round).
struct StartMode {
    StartKind kind = StartKind::Synchronized;
    std::vector<Name> awake;  // used when kind == Subset

    static StartMode all() { return {}; }
    static StartMode only(std::vector<Name> names) {
        return {StartKind::Subset, std::move(names)};
    }
};

class Engine {
public:
    using Behavior = std::function<Proc(NodeCtx&)>;

    Engine(const Network& net, std::uint64_t seed, std::uint64_t round_limit);

    void set_sink(TraceSink* sink) { sink_ = sink; }

    /// Run fn at the start of the given round, before any node acts in it.
    /// fn may register further observers.
    void observe_at(std::uint64_t round, std::function<void(std::uint64_t)> fn);

    RunSummary run(const Behavior& behavior, const StartMode& start);

    std::uint64_t now() const { return round_; }
    std::uint64_t round_limit() const { return round_limit_; }
    const Network& net() const { return net_; }
    NodeCtx& ctx(int idx) { return *ctxs_[idx]; }
    /// True once the node has been started (initially awake or woken).
    bool node_started(int idx) const;
    int name_bits() const { return name_bits_; }

private:
    friend class NodeCtx;

    enum class EvKind : std::uint8_t { Start, Resume, Observer };
    struct Event {
        std::uint64_t round;
        int idx;  // -1 for observers
        std::uint64_t gen;
        EvKind kind;
        bool operator>(const Event& o) const {
            if (round != o.round) return round > o.round;
            return idx > o.idx;
        }
    };

    void post_transmit(NodeCtx& c);
    void post_listen(NodeCtx& c, std::uint64_t k, bool one);
    void resume_node(NodeCtx& c);
    void resolve_round();

    const Network& net_;
    std::uint64_t seed_;
    std::uint64_t round_limit_;
    int name_bits_;
    std::uint64_t round_ = 0;
    bool done_ = false;
    TraceSink* sink_ = nullptr;
    std::vector<std::unique_ptr<NodeCtx>> ctxs_;
    std::vector<Proc> procs_;
    std::priority_queue<Event, std::vector<Event>, std::greater<Event>> heap_;
    std::map<std::uint64_t, std::vector<std::function<void(std::uint64_t)>>> observers_;
    std::vector<int> tx_round_;     // transmitters of the current round
    std::vector<Name> wake_round_names_;
    RunSummary summary_;
    std::vector<double> interference_;  // scratch, indexed by node
    std::vector<int> touched_;
};

}  // namespace bb
