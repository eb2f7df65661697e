#include <pchain/privacy.hpp>

#include <json.hpp>

#include <algorithm>
#include <optional>
#include <set>
#include <stdexcept>

namespace pchain {

void check_params(const StemParams& p)
{
    if (p.max_hop_delay < 0)
        throw std::invalid_argument("max_hop_delay must be non-negative");
}

SimTime StemRoute::total_delay() const
{
    SimTime t = 0;
    for (auto d : hop_delays)
        t += d;
    return t;
}

StemRoute plan_stem(NodeId origin,
                    std::span<const NodeId> candidates,
                    const StemParams& params,
                    RngStream& rng,
                    const std::function<bool(NodeId, NodeId)>& reachable)
{
    check_params(params);
    StemRoute route;
    route.origin = origin;
    std::set<NodeId> visited{origin};
    NodeId at = origin;
    while (route.hops.size() < params.stem_length) {
        std::vector<NodeId> next;
        for (auto c : candidates)
            if (!visited.count(c) && (!reachable || reachable(at, c)))
                next.push_back(c);
        if (next.empty()) {
            route.hops.clear();
            route.hop_delays.clear();
            route.fallback = true;
            return route;
        }
        at = next[rng.uniform_int(0, next.size() - 1)];
        visited.insert(at);
        route.hops.push_back(at);
        route.hop_delays.push_back(static_cast<SimTime>(rng.uniform_int(0, static_cast<std::uint64_t>(params.max_hop_delay))));
    }
    return route;
}

std::string StemPacket::ref() const
{
    return "route-" + std::to_string(route);
}

StemRelay::StemRelay(Network& net, StemParams params, RngStream rng) : net_(net), params_(params), rng_(rng)
{
    check_params(params_);
}

const StemRoute& StemRelay::relay(NodeId origin, MessagePtr payload)
{
    std::vector<NodeId> candidates;
    for (NodeId i = 0; i < net_.size(); ++i)
        if (i != origin && !net_.firewalled(i))
            candidates.push_back(i);
    auto route = plan_stem(origin, candidates, params_, rng_, [this](NodeId a, NodeId b) { return net_.reachable(a, b); });
    route.id = next_id_++;
    ++stats_.routes;
    if (route.fallback)
        ++stats_.fallbacks;
    const auto& stored = routes_.emplace(route.id, std::move(route)).first->second;

    net_.log().append(JsonLine()
                          .field("t", net_.loop().now())
                          .field("ev", "stem_start")
                          .field("node", origin)
                          .field("route", stored.id)
                          .field("hops", static_cast<std::uint64_t>(stored.hops.size()))
                          .field("fallback", stored.fallback)
                          .str());

    std::vector<MessagePtr> decoys;
    if (!recent_.empty()) {
        const auto k = std::min(params_.batch_size, recent_.size());
        decoys = rng_.sample(std::span<const MessagePtr>(recent_), k);
    }
    recent_.push_back(payload);
    if (recent_.size() > 64)
        recent_.erase(recent_.begin());

    if (stored.hops.empty())
        fluff(stored, payload);
    else
        forward(stored, 0, std::move(payload), std::move(decoys));
    return stored;
}

void StemRelay::forward(const StemRoute& route, std::size_t hop, MessagePtr payload, std::vector<MessagePtr> decoys)
{
    auto packet = std::make_shared<StemPacket>();
    packet->route = route.id;
    packet->hop = hop;
    packet->payload = std::move(payload);
    packet->decoys = std::move(decoys);
    const NodeId from = hop == 0 ? route.origin : route.hops[hop - 1];
    net_.send(from, route.hops[hop], std::move(packet), route.hop_delays[hop]);
}

bool StemRelay::handle(NodeId to, NodeId, const MessagePtr& message)
{
    const auto* packet = dynamic_cast<const StemPacket*>(message.get());
    if (!packet)
        return false;
    auto it = routes_.find(packet->route);
    if (it == routes_.end() || packet->hop >= it->second.hops.size() || it->second.hops[packet->hop] != to)
        return true;
    ++stats_.relay_hops;
    const auto& route = it->second;
    if (packet->hop + 1 == route.hops.size()) {
        stats_.decoys_dropped += packet->decoys.size();
        fluff(route, packet->payload);
    } else {
        forward(route, packet->hop + 1, packet->payload, packet->decoys);
    }
    return true;
}

void StemRelay::fluff(const StemRoute& route, const MessagePtr& payload)
{
    net_.log().append(JsonLine()
                          .field("t", net_.loop().now())
                          .field("ev", "fluff")
                          .field("node", route.fluff_node())
                          .field("route", route.id)
                          .field("ref", payload->ref())
                          .str());
    if (fluff_)
        fluff_(route.fluff_node(), payload, route);
}

InferenceResult origin_inference(std::span<const std::string> lines,
                                 const std::map<std::string, NodeId>& truth,
                                 Adversary adversary,
                                 std::string_view broadcast_kind)
{
    std::map<std::string, NodeId> first_broadcaster;
    std::map<std::string, std::uint64_t> route_of_ref;
    std::map<std::uint64_t, NodeId> route_start;

    for (const auto& line : lines) {
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("ev"))
            continue;
        const auto ev = j["ev"].get<std::string>();
        if ((ev == "deliver" || ev == "drop_partition") && j.value("kind", "") == broadcast_kind && j.contains("ref")) {
            first_broadcaster.emplace(j["ref"].get<std::string>(), j["from"].get<NodeId>());
        } else if (adversary == Adversary::full_visibility) {
            if (ev == "fluff")
                route_of_ref.emplace(j["ref"].get<std::string>(), j["route"].get<std::uint64_t>());
            else if (ev == "stem_start")
                route_start.emplace(j["route"].get<std::uint64_t>(), j["node"].get<NodeId>());
        }
    }

    InferenceResult out;
    for (const auto& [ref, origin] : truth) {
        std::optional<NodeId> guess;
        if (adversary == Adversary::full_visibility) {
            auto r = route_of_ref.find(ref);
            if (r != route_of_ref.end()) {
                auto s = route_start.find(r->second);
                if (s != route_start.end())
                    guess = s->second;
            }
        }
        if (!guess) {
            auto b = first_broadcaster.find(ref);
            if (b != first_broadcaster.end())
                guess = b->second;
        }
        if (!guess)
            continue;
        ++out.guesses;
        if (*guess == origin)
            ++out.correct;
    }
    return out;
}

} // namespace pchain
