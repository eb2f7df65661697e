#include <pchain/netsim.hpp>

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace pchain {

std::uint64_t EventLoop::schedule(SimTime at, Action action)
{
    if (at < now_)
        throw std::logic_error("event scheduled in the past");
    const auto seq = next_sequence_++;
    queue_.push_back(Event{at, seq, std::move(action)});
    std::push_heap(queue_.begin(), queue_.end(), later);
    return seq;
}

void EventLoop::run_until(SimTime t_end)
{
    if (t_end < now_)
        throw std::logic_error("run_until target lies in the past");
    while (!queue_.empty() && queue_.front().at <= t_end) {
        std::pop_heap(queue_.begin(), queue_.end(), later);
        Event ev = std::move(queue_.back());
        queue_.pop_back();
        now_ = ev.at;
        ++executed_;
        ev.action();
    }
    now_ = t_end;
}

void EventLog::append(const std::string& line)
{
    ++count_;
    hasher_.update(line);
    hasher_.update(std::string_view("\n"));
    if (keep_)
        lines_.push_back(line);
    if (out_)
        *out_ << line << '\n';
}

void JsonLine::key(std::string_view k)
{
    if (text_.size() > 1)
        text_ += ',';
    text_ += '"';
    text_ += k;
    text_ += "\":";
}

JsonLine& JsonLine::field(std::string_view k, std::int64_t value)
{
    key(k);
    text_ += std::to_string(value);
    return *this;
}

JsonLine& JsonLine::field(std::string_view k, std::uint64_t value)
{
    key(k);
    text_ += std::to_string(value);
    return *this;
}

JsonLine& JsonLine::field(std::string_view k, bool value)
{
    key(k);
    text_ += value ? "true" : "false";
    return *this;
}

JsonLine& JsonLine::field(std::string_view k, std::string_view value)
{
    key(k);
    text_ += '"';
    for (char c : value) {
        switch (c) {
        case '"': text_ += "\\\""; break;
        case '\\': text_ += "\\\\"; break;
        case '\n': text_ += "\\n"; break;
        default:
            if (static_cast<unsigned char>(c) < 0x20) {
                char buf[8];
                std::snprintf(buf, sizeof buf, "\\u%04x", c);
                text_ += buf;
            } else {
                text_ += c;
            }
        }
    }
    text_ += '"';
    return *this;
}

std::string to_string(HandshakeResult result)
{
    switch (result) {
    case HandshakeResult::direct: return "direct";
    case HandshakeResult::bridged: return "bridged";
    case HandshakeResult::isolated: return "isolated";
    }
    return "?";
}

Network::Network(NetworkConfig config, EventLoop& loop, RngStream latency_rng, EventLog& log)
    : config_(std::move(config)), loop_(loop), rng_(latency_rng), log_(log)
{
    const auto n = config_.nodes;
    if (n == 0)
        throw std::invalid_argument("network needs at least one node");
    if (config_.regions == 0)
        throw std::invalid_argument("regions must be positive");
    if (config_.ping_interval <= 0 || config_.miss_limit <= 0 || config_.keepalive_interval <= 0)
        throw std::invalid_argument("liveness intervals must be positive");
    if (config_.connectivity_window < config_.ping_interval)
        throw std::invalid_argument("connectivity window shorter than the ping interval");
    if (config_.latency.base < 0 || config_.latency.jitter < 0)
        throw std::invalid_argument("latency must be non-negative");

    region_of_.resize(n);
    if (!config_.region_of.empty()) {
        if (config_.region_of.size() != n)
            throw std::invalid_argument("region_of must label every node");
        region_of_ = config_.region_of;
    } else {
        for (std::size_t i = 0; i < n; ++i)
            region_of_[i] = static_cast<std::uint32_t>(i % config_.regions);
    }
    if (!config_.clock_offset.empty() && config_.clock_offset.size() != n)
        throw std::invalid_argument("clock_offset must cover every node");

    firewalled_.assign(n, false);
    bridge_flag_.assign(n, false);
    for (auto f : config_.firewalled) {
        if (f >= n)
            throw std::invalid_argument("firewalled node out of range");
        firewalled_[f] = true;
    }
    for (auto b : config_.bridges) {
        if (b >= n)
            throw std::invalid_argument("bridge node out of range");
        if (firewalled_[b])
            throw std::invalid_argument("a bridge must be publicly reachable");
        bridge_flag_[b] = true;
    }
    tethers_.assign(n, std::nullopt);
    isolated_.assign(n, false);

    last_ack_.assign(n * n, 0);
    const auto slots = static_cast<std::size_t>(config_.connectivity_window / config_.ping_interval) + 1;
    history_.assign(slots, std::vector<bool>(n * n, true));
    conn_delay_.assign(n, false);
    conn_baseline_.assign(n, 0);
}

SimTime Network::latency()
{
    const auto j = config_.latency.jitter;
    SimTime d = config_.latency.base;
    if (j > 0)
        d += static_cast<SimTime>(rng_.uniform_int(0, static_cast<std::uint64_t>(2 * j))) - j;
    return d < 1 ? 1 : d;
}

void Network::log_traffic(std::string_view event, NodeId from, NodeId to, const Message& message, std::optional<NodeId> via)
{
    if (!config_.log_traffic)
        return;
    JsonLine line;
    line.field("t", loop_.now()).field("ev", event).field("from", from).field("to", to).field("kind", message.kind());
    const auto ref = message.ref();
    if (!ref.empty())
        line.field("ref", ref);
    if (via)
        line.field("via", *via);
    log_.append(line.str());
}

bool Network::send(NodeId from, NodeId to, MessagePtr message, SimTime extra_delay)
{
    if (from >= size() || to >= size())
        throw std::out_of_range("send: unknown node");
    ++stats_.sent;
    if (firewalled_[to]) {
        const auto& t = tethers_[to];
        if (!t) {
            ++stats_.dropped_firewall;
            log_traffic("drop_firewall", from, to, *message, std::nullopt);
            return false;
        }
        if (t->bridge != from) {
            if (!reachable(from, t->bridge) || !reachable(t->bridge, to)) {
                ++stats_.dropped_partition;
                log_traffic("drop_partition", from, to, *message, t->bridge);
                return false;
            }
            const auto delay = latency() + latency() + extra_delay;
            deliver(from, to, message, delay, t->bridge);
            return true;
        }
    }
    if (!reachable(from, to)) {
        ++stats_.dropped_partition;
        log_traffic("drop_partition", from, to, *message, std::nullopt);
        return false;
    }
    deliver(from, to, message, latency() + extra_delay, std::nullopt);
    return true;
}

void Network::deliver(NodeId from, NodeId to, const MessagePtr& message, SimTime delay, std::optional<NodeId> via)
{
    loop_.schedule_after(delay, [this, from, to, message, via] {
        const bool blocked = via ? (!reachable(from, *via) || !reachable(*via, to)) : !reachable(from, to);
        if (blocked) {
            ++stats_.dropped_partition;
            log_traffic("drop_partition", from, to, *message, via);
            return;
        }
        if (firewalled_[to] && (!tethers_[to] || tethers_[to]->bridge != (via ? *via : from))) {
            ++stats_.dropped_firewall;
            log_traffic("drop_firewall", from, to, *message, via);
            return;
        }
        ++stats_.delivered;
        if (via)
            ++stats_.via_bridge;
        log_traffic("deliver", from, to, *message, via);
        if (handler_)
            handler_(to, from, message);
    });
}

std::size_t Network::broadcast(NodeId from, const MessagePtr& message, SimTime extra_delay)
{
    std::size_t n = 0;
    for (NodeId to = 0; to < size(); ++to)
        if (to != from && send(from, to, message, extra_delay))
            ++n;
    return n;
}

void Network::partition(const std::set<NodeId>& side_a, const std::set<NodeId>& side_b)
{
    std::vector<std::int8_t> split(size(), 0);
    for (auto a : side_a) {
        if (a >= size())
            throw std::invalid_argument("partition names an unknown node");
        split[a] = 1;
    }
    for (auto b : side_b) {
        if (b >= size())
            throw std::invalid_argument("partition names an unknown node");
        if (split[b] == 1)
            throw std::invalid_argument("partition sides overlap");
        split[b] = 2;
    }
    splits_.push_back(std::move(split));
    log_.append(JsonLine()
                    .field("t", loop_.now())
                    .field("ev", "partition")
                    .field("side_a", static_cast<std::uint64_t>(side_a.size()))
                    .field("side_b", static_cast<std::uint64_t>(side_b.size()))
                    .str());
}

void Network::heal()
{
    splits_.clear();
    log_.append(JsonLine().field("t", loop_.now()).field("ev", "heal").str());
}

bool Network::reachable(NodeId a, NodeId b) const
{
    for (const auto& s : splits_)
        if (s[a] != 0 && s[b] != 0 && s[a] != s[b])
            return false;
    return true;
}

std::vector<NodeId> Network::region_members(std::uint32_t r) const
{
    std::vector<NodeId> out;
    for (NodeId i = 0; i < size(); ++i)
        if (region_of_[i] == r)
            out.push_back(i);
    return out;
}

void Network::start()
{
    if (started_)
        throw std::logic_error("network already started");
    started_ = true;
    const auto now = loop_.now();
    std::fill(last_ack_.begin(), last_ack_.end(), now);
    for (NodeId i = 0; i < size(); ++i)
        if (firewalled_[i])
            connect_via_bridges(i);
    loop_.schedule_after(config_.ping_interval, [this] { tick(); });
    if (!config_.firewalled.empty())
        loop_.schedule_after(config_.keepalive_interval, [this] { keepalive_tick(); });
}

bool Network::peer_alive(NodeId node, NodeId peer) const
{
    if (node == peer)
        return true;
    const auto horizon = loop_.now() - config_.miss_limit * config_.ping_interval;
    return last_ack_[node * size() + peer] > horizon;
}

std::vector<NodeId> Network::alive_peers(NodeId node) const
{
    std::vector<NodeId> out;
    for (NodeId p = 0; p < size(); ++p)
        if (p != node && peer_alive(node, p))
            out.push_back(p);
    return out;
}

double Network::connectivity_ratio(NodeId node) const
{
    const auto n = size();
    const auto& base = history_[(history_head_ + 1) % history_.size()];
    std::size_t known = 0, still = 0;
    for (NodeId p = 0; p < n; ++p) {
        if (p == node || !base[node * n + p])
            continue;
        ++known;
        if (peer_alive(node, p))
            ++still;
    }
    return known == 0 ? 1.0 : static_cast<double>(still) / static_cast<double>(known);
}

std::set<std::uint32_t> Network::region_coverage(NodeId node) const
{
    std::set<std::uint32_t> out{region_of_[node]};
    for (NodeId p = 0; p < size(); ++p)
        if (p != node && peer_alive(node, p))
            out.insert(region_of_[p]);
    return out;
}

bool Network::region_delay(NodeId node) const
{
    return config_.min_regions > 1 && region_coverage(node).size() < config_.min_regions;
}

SimTime Network::local_time(NodeId node) const
{
    return loop_.now() + (config_.clock_offset.empty() ? 0 : config_.clock_offset[node]);
}

void Network::tick()
{
    const auto n = size();
    const auto now = loop_.now();
    std::vector<std::pair<NodeId, NodeId>> came_up;
    for (NodeId a = 0; a < n; ++a) {
        for (NodeId b = 0; b < n; ++b) {
            if (a == b || !reachable(a, b))
                continue;
            if (!peer_alive(a, b))
                came_up.emplace_back(a, b);
            last_ack_[a * n + b] = now;
        }
    }

    history_head_ = (history_head_ + 1) % history_.size();
    auto& slot = history_[history_head_];
    for (NodeId a = 0; a < n; ++a) {
        std::size_t alive = 0;
        for (NodeId b = 0; b < n; ++b) {
            const bool up = a == b || peer_alive(a, b);
            slot[a * n + b] = up;
            if (a != b && up)
                ++alive;
        }
        if (!conn_delay_[a]) {
            const auto ratio = connectivity_ratio(a);
            if (ratio < config_.connectivity_threshold) {
                conn_delay_[a] = true;
                std::size_t known = 0;
                const auto& base = history_[(history_head_ + 1) % history_.size()];
                for (NodeId b = 0; b < n; ++b)
                    if (b != a && base[a * n + b])
                        ++known;
                conn_baseline_[a] = known;
                log_.append(JsonLine()
                                .field("t", now)
                                .field("ev", "connectivity_delay")
                                .field("node", a)
                                .field("alive", static_cast<std::uint64_t>(alive))
                                .field("baseline", static_cast<std::uint64_t>(known))
                                .str());
            }
        } else if (static_cast<double>(alive) >= config_.connectivity_threshold * static_cast<double>(conn_baseline_[a]) &&
                   connectivity_ratio(a) >= config_.connectivity_threshold) {
            conn_delay_[a] = false;
            log_.append(JsonLine().field("t", now).field("ev", "connectivity_resume").field("node", a).str());
        }
    }

    if (peer_up_)
        for (auto [a, b] : came_up)
            peer_up_(a, b);
    if (tick_)
        tick_();
    loop_.schedule_after(config_.ping_interval, [this] { tick(); });
}

HandshakeResult Network::bridge_handshake(NodeId node, NodeId bridge)
{
    if (node >= size() || bridge >= size())
        throw std::out_of_range("bridge_handshake: unknown node");
    HandshakeResult result;
    if (!reachable(node, bridge)) {
        result = HandshakeResult::isolated;
    } else if (!firewalled_[node]) {
        result = HandshakeResult::direct;
    } else {
        tethers_[node] = Tether{bridge, loop_.now()};
        isolated_[node] = false;
        result = HandshakeResult::bridged;
    }
    log_.append(JsonLine()
                    .field("t", loop_.now())
                    .field("ev", "handshake")
                    .field("node", node)
                    .field("bridge", bridge)
                    .field("result", to_string(result))
                    .str());
    return result;
}

HandshakeResult Network::connect_via_bridges(NodeId node)
{
    if (!firewalled_[node])
        return HandshakeResult::direct;
    for (auto b : config_.bridges) {
        if (b == node)
            continue;
        if (bridge_handshake(node, b) == HandshakeResult::bridged)
            return HandshakeResult::bridged;
    }
    tethers_[node].reset();
    isolated_[node] = true;
    log_.append(JsonLine().field("t", loop_.now()).field("ev", "isolated").field("node", node).str());
    return HandshakeResult::isolated;
}

std::optional<NodeId> Network::tether(NodeId node) const
{
    if (!tethers_[node])
        return std::nullopt;
    return tethers_[node]->bridge;
}

std::vector<NodeId> Network::tethered_to(NodeId bridge) const
{
    std::vector<NodeId> out;
    for (NodeId i = 0; i < size(); ++i)
        if (tethers_[i] && tethers_[i]->bridge == bridge)
            out.push_back(i);
    return out;
}

void Network::keepalive_tick()
{
    const auto now = loop_.now();
    for (NodeId i = 0; i < size(); ++i) {
        if (!firewalled_[i])
            continue;
        auto& t = tethers_[i];
        if (!t) {
            connect_via_bridges(i);
            continue;
        }
        if (reachable(i, t->bridge)) {
            t->last_keepalive = now;
        } else if (now - t->last_keepalive > 3 * config_.keepalive_interval) {
            log_.append(JsonLine()
                            .field("t", now)
                            .field("ev", "tether_dead")
                            .field("node", i)
                            .field("bridge", t->bridge)
                            .str());
            t.reset();
            connect_via_bridges(i);
        }
    }
    loop_.schedule_after(config_.keepalive_interval, [this] { keepalive_tick(); });
}

} // namespace pchain
