#pragma once

#include <pchain/netsim.hpp>

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace pchain {

struct StemParams
{
    std::size_t stem_length = 4;
    SimTime max_hop_delay = 200 * ms;
    /// Companion records sent alongside the real one on each hop.
    std::size_t batch_size = 4;
};

void check_params(const StemParams& params);

struct StemRoute
{
    std::uint64_t id = 0;
    NodeId origin = 0;
    std::vector<NodeId> hops;
    std::vector<SimTime> hop_delays;
    /// Too few candidates for the walk: the origin fluffs directly.
    bool fallback = false;

    NodeId fluff_node() const { return hops.empty() ? origin : hops.back(); }
    SimTime total_delay() const;
};

/// Seeded random walk over `candidates` that never revisits a node and
/// never returns to the origin. `reachable(a, b)` limits each step. Falls
/// back to a direct fluff when the walk cannot reach stem_length hops.
StemRoute plan_stem(NodeId origin,
                    std::span<const NodeId> candidates,
                    const StemParams& params,
                    RngStream& rng,
                    const std::function<bool(NodeId, NodeId)>& reachable = {});

/// One stem hop as seen on the wire. The payload is opaque to observers:
/// kind() is "stem" and ref() names only the route.
struct StemPacket : Message
{
    std::uint64_t route = 0;
    std::size_t hop = 0;
    MessagePtr payload;
    std::vector<MessagePtr> decoys;

    std::string kind() const override { return "stem"; }
    std::string ref() const override;
};

struct StemStats
{
    std::uint64_t routes = 0;
    std::uint64_t fallbacks = 0;
    std::uint64_t relay_hops = 0;
    std::uint64_t decoys_dropped = 0;
};

/// Runs stem routes over a Network. Stem packets must be passed to
/// handle(); the fluff hook receives the real payload at the last hop.
class StemRelay
{
public:
    using FluffHook = std::function<void(NodeId fluff_node, const MessagePtr& payload, const StemRoute& route)>;

    StemRelay(Network& net, StemParams params, RngStream rng);

    void on_fluff(FluffHook hook) { fluff_ = std::move(hook); }

    /// Plans a route for `payload` and sends the first hop, or fluffs at
    /// once for a zero-length or fallback route.
    const StemRoute& relay(NodeId origin, MessagePtr payload);

    /// True when `message` was a stem packet and has been consumed.
    bool handle(NodeId to, NodeId from, const MessagePtr& message);

    const StemParams& params() const { return params_; }
    const StemStats& stats() const { return stats_; }
    const std::map<std::uint64_t, StemRoute>& routes() const { return routes_; }

private:
    void forward(const StemRoute& route, std::size_t hop, MessagePtr payload, std::vector<MessagePtr> decoys);
    void fluff(const StemRoute& route, const MessagePtr& payload);

    Network& net_;
    StemParams params_;
    RngStream rng_;
    FluffHook fluff_;
    std::map<std::uint64_t, StemRoute> routes_;
    std::vector<MessagePtr> recent_;
    std::uint64_t next_id_ = 1;
    StemStats stats_;
};

enum class Adversary {
    /// Sees broadcast traffic of the named message kind and nothing else.
    fluff_only,
    /// Also sees stem packets and the fluff node's hand-off.
    full_visibility,
};

struct InferenceResult
{
    std::size_t guesses = 0;
    std::size_t correct = 0;
    double accuracy() const { return guesses == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(guesses); }
};

/// Replays an event log and guesses each transaction's origin. The
/// fluff-only adversary names the first node seen broadcasting
/// `broadcast_kind` for a ref; the full-visibility adversary follows the
/// route back to its first stem sender. `truth` maps ref to true origin.
InferenceResult origin_inference(std::span<const std::string> log_lines,
                                 const std::map<std::string, NodeId>& truth,
                                 Adversary adversary,
                                 std::string_view broadcast_kind = "proposal");

} // namespace pchain
