#pragma once

#include <pchain/crypto.hpp>
#include <pchain/rng.hpp>
#include <pchain/time.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace pchain {

using NodeId = std::uint32_t;

/// Deterministic discrete-event loop. Events run in (time, sequence) order;
/// the sequence is the scheduling order.
class EventLoop
{
public:
    using Action = std::function<void()>;

    SimTime now() const { return now_; }

    /// Throws std::logic_error when `at` lies before now().
    std::uint64_t schedule(SimTime at, Action action);
    std::uint64_t schedule_after(SimTime delay, Action action) { return schedule(now_ + delay, std::move(action)); }

    /// Runs every event with time <= t_end, then advances the clock to
    /// t_end. Throws std::logic_error when t_end lies before now().
    void run_until(SimTime t_end);

    std::size_t pending() const { return queue_.size(); }
    std::uint64_t executed() const { return executed_; }

private:
    struct Event
    {
        SimTime at;
        std::uint64_t sequence;
        Action action;
    };
    static bool later(const Event& a, const Event& b)
    {
        return a.at != b.at ? a.at > b.at : a.sequence > b.sequence;
    }

    SimTime now_ = 0;
    std::uint64_t next_sequence_ = 0;
    std::uint64_t executed_ = 0;
    std::vector<Event> queue_;
};

/// Newline-delimited JSON event log. Every line feeds a running digest; the
/// lines themselves are kept or streamed only on request.
class EventLog
{
public:
    void keep_lines(bool keep) { keep_ = keep; }
    void stream_to(std::ostream* out) { out_ = out; }

    void append(const std::string& line);

    std::uint64_t size() const { return count_; }
    Digest digest() const { return hasher_.finish(); }
    const std::vector<std::string>& lines() const { return lines_; }

private:
    bool keep_ = false;
    std::ostream* out_ = nullptr;
    std::uint64_t count_ = 0;
    Hasher hasher_;
    std::vector<std::string> lines_;
};

/// Minimal JSON object writer with fixed key order.
class JsonLine
{
public:
    JsonLine& field(std::string_view key, std::int64_t value);
    JsonLine& field(std::string_view key, std::uint64_t value);
    JsonLine& field(std::string_view key, int value) { return field(key, static_cast<std::int64_t>(value)); }
    JsonLine& field(std::string_view key, unsigned value) { return field(key, static_cast<std::uint64_t>(value)); }
    JsonLine& field(std::string_view key, std::string_view value);
    JsonLine& field(std::string_view key, const char* value) { return field(key, std::string_view(value)); }
    JsonLine& field(std::string_view key, bool value);
    std::string str() const { return text_ + "}"; }

private:
    void key(std::string_view k);
    std::string text_ = "{";
};

/// Protocol payload carried by the network.
struct Message
{
    virtual ~Message() = default;
    virtual std::string kind() const = 0;
    /// Short identifier for the log, e.g. a tx_id prefix.
    virtual std::string ref() const { return {}; }
};

using MessagePtr = std::shared_ptr<const Message>;

struct LatencyModel
{
    SimTime base = 10 * ms;
    SimTime jitter = 5 * ms;
};

struct NetworkConfig
{
    std::size_t nodes = 0;
    std::size_t regions = 5;
    LatencyModel latency;
    SimTime ping_interval = 1 * seconds;
    int miss_limit = 3;
    SimTime connectivity_window = 5 * seconds;
    double connectivity_threshold = 0.5;
    std::size_t min_regions = 3;
    /// Optional per-node region labels; default is node % regions.
    std::vector<std::uint32_t> region_of;
    std::vector<NodeId> firewalled;
    std::vector<NodeId> bridges;
    SimTime keepalive_interval = 10 * seconds;
    /// Per-node offset of the local clock from simulated time.
    std::vector<SimTime> clock_offset;
    /// Log every delivery and drop, not only protocol events.
    bool log_traffic = true;
};

enum class HandshakeResult { direct, bridged, isolated };

std::string to_string(HandshakeResult result);

struct NetworkStats
{
    std::uint64_t sent = 0;
    std::uint64_t delivered = 0;
    std::uint64_t dropped_partition = 0;
    std::uint64_t dropped_firewall = 0;
    std::uint64_t via_bridge = 0;
};

/// Simulated network: latency, partitions, liveness pings, connectivity and
/// region monitoring, firewalls and bridge tethers.
class Network
{
public:
    using Handler = std::function<void(NodeId to, NodeId from, const MessagePtr& message)>;
    using PeerHook = std::function<void(NodeId node, NodeId peer)>;
    using TickHook = std::function<void()>;

    Network(NetworkConfig config, EventLoop& loop, RngStream latency_rng, EventLog& log);

    const NetworkConfig& config() const { return config_; }
    std::size_t size() const { return config_.nodes; }
    EventLoop& loop() { return loop_; }
    EventLog& log() { return log_; }

    void set_handler(Handler handler) { handler_ = std::move(handler); }
    /// Called when `node` sees `peer` come back after being declared dead.
    void on_peer_up(PeerHook hook) { peer_up_ = std::move(hook); }
    /// Called after every liveness tick.
    void on_tick(TickHook hook) { tick_ = std::move(hook); }

    /// Schedules delivery after link latency plus `extra_delay`. Returns
    /// false when the message is dropped.
    bool send(NodeId from, NodeId to, MessagePtr message, SimTime extra_delay = 0);
    /// send() to every other node; returns the number scheduled.
    std::size_t broadcast(NodeId from, const MessagePtr& message, SimTime extra_delay = 0);

    /// Cuts every pair across the two sides. Throws std::invalid_argument
    /// when the sides overlap or name unknown nodes.
    void partition(const std::set<NodeId>& side_a, const std::set<NodeId>& side_b);
    /// Drops every active partition.
    void heal();
    bool partitioned() const { return !splits_.empty(); }
    /// Symmetric; false only across an active partition.
    bool reachable(NodeId a, NodeId b) const;

    std::uint32_t region(NodeId node) const { return region_of_[node]; }
    std::vector<NodeId> region_members(std::uint32_t region) const;

    /// Starts the ping, connectivity and keepalive ticks at the current
    /// time and performs bridge handshakes for firewalled nodes.
    void start();

    bool peer_alive(NodeId node, NodeId peer) const;
    std::vector<NodeId> alive_peers(NodeId node) const;
    /// Fraction of the peers alive at the start of the window that are
    /// alive now; 1.0 when none were.
    double connectivity_ratio(NodeId node) const;
    /// Set when the ratio falls below the threshold, cleared once the alive
    /// peer count is back above threshold times the count at the drop.
    bool connectivity_delay(NodeId node) const { return conn_delay_[node]; }
    std::set<std::uint32_t> region_coverage(NodeId node) const;
    /// min_regions > 1 and fewer regions reachable than that.
    bool region_delay(NodeId node) const;

    SimTime local_time(NodeId node) const;

    bool firewalled(NodeId node) const { return firewalled_[node]; }
    bool is_bridge(NodeId node) const { return bridge_flag_[node]; }
    /// Probes `node` from `bridge`; firewalled nodes open a tether instead.
    HandshakeResult bridge_handshake(NodeId node, NodeId bridge);
    /// Tries every bridge in turn; isolated when none is reachable.
    HandshakeResult connect_via_bridges(NodeId node);
    std::optional<NodeId> tether(NodeId node) const;
    bool isolated(NodeId node) const { return isolated_[node]; }
    /// Nodes currently tethered to `bridge`.
    std::vector<NodeId> tethered_to(NodeId bridge) const;

    const NetworkStats& stats() const { return stats_; }

private:
    struct Tether
    {
        NodeId bridge;
        SimTime last_keepalive;
    };

    SimTime latency();
    void deliver(NodeId from, NodeId to, const MessagePtr& message, SimTime delay, std::optional<NodeId> via);
    void log_traffic(std::string_view event, NodeId from, NodeId to, const Message& message, std::optional<NodeId> via);
    void tick();
    void keepalive_tick();

    NetworkConfig config_;
    EventLoop& loop_;
    RngStream rng_;
    EventLog& log_;
    Handler handler_;
    PeerHook peer_up_;
    TickHook tick_;

    std::vector<std::uint32_t> region_of_;
    std::vector<bool> firewalled_;
    std::vector<bool> bridge_flag_;
    std::vector<std::optional<Tether>> tethers_;
    std::vector<bool> isolated_;

    std::vector<std::vector<std::int8_t>> splits_;

    std::vector<SimTime> last_ack_;
    std::vector<std::vector<bool>> history_;
    std::size_t history_head_ = 0;
    std::vector<bool> conn_delay_;
    std::vector<std::size_t> conn_baseline_;
    bool started_ = false;

    NetworkStats stats_;
};

} // namespace pchain
