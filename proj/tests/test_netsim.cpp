#include <doctest.h>

#include <pchain/netsim.hpp>

#include <json.hpp>

#include <numeric>

using namespace pchain;

namespace {

struct Ping : Message
{
    int n = 0;
    explicit Ping(int v) : n(v) {}
    std::string kind() const override { return "ping"; }
    std::string ref() const override { return std::to_string(n); }
};

struct Harness
{
    EventLoop loop;
    EventLog log;
    Network net;
    std::vector<std::tuple<SimTime, NodeId, NodeId, int>> received;

    explicit Harness(NetworkConfig cfg, std::uint64_t seed = 1)
        : net((log.keep_lines(true), std::move(cfg)), loop, RngStream(seed), log)
    {
        net.set_handler([this](NodeId to, NodeId from, const MessagePtr& m) {
            received.emplace_back(loop.now(), to, from, static_cast<const Ping&>(*m).n);
        });
    }
};

NetworkConfig config(std::size_t n)
{
    NetworkConfig c;
    c.nodes = n;
    return c;
}

std::set<NodeId> range(NodeId lo, NodeId hi)
{
    std::set<NodeId> s;
    for (NodeId i = lo; i < hi; ++i)
        s.insert(i);
    return s;
}

} // namespace

TEST_CASE("event loop ordering")
{
    EventLoop loop;
    std::vector<int> order;

    SUBCASE("no events leaves the clock at the target")
    {
        loop.run_until(100);
        CHECK(loop.now() == 100);
        CHECK(loop.executed() == 0);
    }

    SUBCASE("equal times run in scheduling order")
    {
        for (int i = 0; i < 10; ++i)
            loop.schedule(50, [&order, i] { order.push_back(i); });
        loop.schedule(10, [&order] { order.push_back(-1); });
        loop.run_until(50);
        std::vector<int> expected{-1, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
        CHECK(order == expected);
    }

    SUBCASE("events beyond the target wait")
    {
        loop.schedule(200, [&order] { order.push_back(1); });
        loop.run_until(100);
        CHECK(order.empty());
        CHECK(loop.pending() == 1);
        loop.run_until(200);
        CHECK(order.size() == 1);
    }

    SUBCASE("scheduling into the past is a logic error")
    {
        loop.run_until(100);
        CHECK_THROWS_AS(loop.schedule(99, [] {}), std::logic_error);
        CHECK_THROWS_AS(loop.run_until(50), std::logic_error);
    }

    SUBCASE("events scheduled by events never run before their cause")
    {
        SimTime cause = -1, effect = -1;
        loop.schedule(5, [&] {
            cause = loop.now();
            loop.schedule_after(0, [&] { effect = loop.now(); });
        });
        loop.run_until(10);
        CHECK(cause == 5);
        CHECK(effect == 5);
    }
}

TEST_CASE("json line escaping and key order")
{
    auto s = JsonLine().field("b", 1).field("a", "x\"y").field("c", true).str();
    CHECK(s == R"({"b":1,"a":"x\"y","c":true})");
    auto j = nlohmann::json::parse(JsonLine().field("k", std::string_view("\x01\n")).str());
    CHECK(j["k"] == "\x01\n");
}

TEST_CASE("latency stays within base plus or minus jitter")
{
    Harness h(config(2));
    for (int i = 0; i < 200; ++i)
        h.net.send(0, 1, std::make_shared<Ping>(i));
    h.loop.run_until(1000);
    REQUIRE(h.received.size() == 200);
    for (auto [t, to, from, n] : h.received) {
        CHECK(t >= 5);
        CHECK(t <= 15);
    }
}

TEST_CASE("partitions drop traffic until heal and never replay it")
{
    Harness h(config(6));
    h.net.partition(range(0, 3), range(3, 6));
    CHECK_FALSE(h.net.reachable(0, 4));
    CHECK_FALSE(h.net.reachable(4, 0));
    CHECK(h.net.reachable(0, 2));
    CHECK(h.net.reachable(4, 5));

    CHECK_FALSE(h.net.send(0, 4, std::make_shared<Ping>(1)));
    CHECK(h.net.send(0, 1, std::make_shared<Ping>(2)));
    h.loop.run_until(100);
    h.net.heal();
    h.loop.run_until(1000);
    REQUIRE(h.received.size() == 1);
    CHECK(std::get<3>(h.received[0]) == 2);

    CHECK(h.net.send(0, 4, std::make_shared<Ping>(3)));
    h.loop.run_until(2000);
    CHECK(h.received.size() == 2);
    CHECK(h.net.stats().dropped_partition == 1);
}

TEST_CASE("messages in flight when a partition starts are dropped")
{
    Harness h(config(4));
    h.net.send(0, 3, std::make_shared<Ping>(1));
    h.net.partition({0, 1}, {2, 3});
    h.loop.run_until(100);
    CHECK(h.received.empty());
}

TEST_CASE("partition input errors")
{
    Harness h(config(4));
    CHECK_THROWS_AS(h.net.partition({0, 1}, {1, 2}), std::invalid_argument);
    CHECK_THROWS_AS(h.net.partition({0}, {9}), std::invalid_argument);
}

TEST_CASE("no cross-partition delivery appears in the log")
{
    Harness h(config(10), 7);
    RngStream rng(3);
    h.net.start();
    const auto a = range(0, 4), b = range(4, 10);
    for (int i = 0; i < 400; ++i) {
        const auto at = static_cast<SimTime>(rng.uniform_int(0, 5000));
        const auto from = static_cast<NodeId>(rng.uniform_int(0, 9));
        const auto to = static_cast<NodeId>(rng.uniform_int(0, 9));
        if (from != to)
            h.loop.schedule(at, [&h, from, to, i] { h.net.send(from, to, std::make_shared<Ping>(i)); });
    }
    h.loop.schedule(1000, [&] { h.net.partition(a, b); });
    h.loop.schedule(3000, [&] { h.net.heal(); });
    h.loop.run_until(6000);

    bool split = false;
    int during = 0;
    for (const auto& line : h.log.lines()) {
        auto j = nlohmann::json::parse(line);
        if (j["ev"] == "partition")
            split = true;
        if (j["ev"] == "heal")
            split = false;
        if (split && j["ev"] == "deliver") {
            const NodeId from = j["from"], to = j["to"];
            CHECK(a.count(from) == a.count(to));
            ++during;
        }
    }
    CHECK(during > 0);
}

TEST_CASE("connectivity ratio on a 60/40 split")
{
    auto cfg = config(20);
    Harness h(cfg);
    h.net.start();
    h.loop.run_until(6 * seconds);
    for (NodeId i = 0; i < 20; ++i) {
        CHECK(h.net.connectivity_ratio(i) == 1.0);
        CHECK_FALSE(h.net.connectivity_delay(i));
    }

    const auto minority = range(0, 8), majority = range(8, 20);
    h.net.partition(minority, majority);
    h.loop.run_until(10 * seconds);
    CHECK(h.net.connectivity_ratio(0) == doctest::Approx(7.0 / 19.0));
    CHECK(h.net.connectivity_ratio(10) == doctest::Approx(11.0 / 19.0));
    for (auto i : minority)
        CHECK(h.net.connectivity_delay(i));
    for (auto i : majority)
        CHECK_FALSE(h.net.connectivity_delay(i));

    // The flag is sticky after the window has moved past the drop.
    h.loop.run_until(20 * seconds);
    CHECK(h.net.connectivity_delay(0));

    h.net.heal();
    h.loop.run_until(22 * seconds);
    for (NodeId i = 0; i < 20; ++i)
        CHECK_FALSE(h.net.connectivity_delay(i));
    h.loop.run_until(30 * seconds);
    for (NodeId i = 0; i < 20; ++i)
        CHECK(h.net.connectivity_ratio(i) == 1.0);
}

TEST_CASE("peers are declared dead only after three missed pings")
{
    Harness h(config(4));
    h.net.start();
    h.loop.run_until(5 * seconds);
    h.net.partition({0}, {1, 2, 3});
    h.loop.run_until(7 * seconds);
    CHECK(h.net.peer_alive(0, 1));
    h.loop.run_until(8 * seconds);
    CHECK_FALSE(h.net.peer_alive(0, 1));
    CHECK_FALSE(h.net.peer_alive(1, 0));
    CHECK(h.net.peer_alive(1, 2));
}

TEST_CASE("peer-up hook fires on reconnection")
{
    Harness h(config(4));
    std::vector<std::pair<NodeId, NodeId>> ups;
    h.net.on_peer_up([&](NodeId a, NodeId b) { ups.emplace_back(a, b); });
    h.net.start();
    h.loop.run_until(2 * seconds);
    CHECK(ups.empty());
    h.net.partition({0, 1}, {2, 3});
    h.loop.run_until(10 * seconds);
    h.net.heal();
    h.loop.run_until(11 * seconds);
    CHECK(ups.size() == 8);
}

TEST_CASE("region coverage")
{
    auto cfg = config(20);
    cfg.regions = 4;
    cfg.min_regions = 3;

    SUBCASE("all regions reachable")
    {
        Harness h(cfg);
        h.net.start();
        h.loop.run_until(2 * seconds);
        CHECK(h.net.region_coverage(0).size() == 4);
        CHECK_FALSE(h.net.region_delay(0));
    }

    SUBCASE("localized cut isolates one region")
    {
        Harness h(cfg);
        h.net.start();
        h.loop.run_until(2 * seconds);
        auto inside = h.net.region_members(2);
        std::set<NodeId> in(inside.begin(), inside.end()), out;
        for (NodeId i = 0; i < 20; ++i)
            if (!in.count(i))
                out.insert(i);
        h.net.partition(in, out);
        h.loop.run_until(6 * seconds);
        for (auto i : in) {
            CHECK(h.net.region_coverage(i) == std::set<std::uint32_t>{2});
            CHECK(h.net.region_delay(i));
        }
        CHECK(h.net.region_coverage(0).size() == 3);
        CHECK_FALSE(h.net.region_delay(0));
    }

    SUBCASE("min_regions 1 disables the rule")
    {
        cfg.min_regions = 1;
        Harness h(cfg);
        h.net.start();
        h.net.partition({0}, range(1, 20));
        h.loop.run_until(6 * seconds);
        CHECK_FALSE(h.net.region_delay(0));
    }
}

TEST_CASE("bridge handshake")
{
    auto cfg = config(6);
    cfg.firewalled = {4, 5};
    cfg.bridges = {0, 1};

    SUBCASE("public node is direct, firewalled node is bridged")
    {
        Harness h(cfg);
        CHECK(h.net.bridge_handshake(3, 0) == HandshakeResult::direct);
        h.net.start();
        CHECK(h.net.tether(4) == NodeId{0});
        CHECK(h.net.tether(5) == NodeId{0});
        CHECK(h.net.tethered_to(0) == std::vector<NodeId>{4, 5});
        CHECK_FALSE(h.net.tether(3).has_value());
    }

    SUBCASE("pushes reach a firewalled node only over its tether")
    {
        Harness h(cfg);
        h.net.start();
        CHECK(h.net.send(2, 4, std::make_shared<Ping>(1)));
        CHECK(h.net.send(0, 4, std::make_shared<Ping>(2)));
        h.loop.run_until(100);
        REQUIRE(h.received.size() == 2);
        CHECK(h.net.stats().via_bridge == 1);

        for (const auto& line : h.log.lines()) {
            auto j = nlohmann::json::parse(line);
            if (j["ev"] != "deliver" || j["to"] != 4)
                continue;
            const NodeId from = j["from"];
            CHECK((from == 0 || (j.contains("via") && j["via"] == 0)));
        }
    }

    SUBCASE("no bridge reachable leaves the node isolated")
    {
        Harness h(cfg);
        h.net.partition({4}, {0, 1, 2, 3, 5});
        h.net.start();
        CHECK(h.net.isolated(4));
        CHECK_FALSE(h.net.send(2, 4, std::make_shared<Ping>(1)));
        CHECK(h.net.stats().dropped_firewall == 1);
    }

    SUBCASE("dead keepalive triggers a re-handshake to another bridge")
    {
        cfg.keepalive_interval = 1 * seconds;
        Harness h(cfg);
        h.net.start();
        REQUIRE(h.net.tether(4) == NodeId{0});
        h.net.partition({0}, {1, 2, 3, 4, 5});
        h.loop.run_until(3 * seconds);
        CHECK(h.net.tether(4) == NodeId{0});
        h.loop.run_until(5 * seconds);
        CHECK(h.net.tether(4) == NodeId{1});
        h.net.send(2, 4, std::make_shared<Ping>(9));
        h.loop.run_until(6 * seconds);
        CHECK(h.received.size() == 1);
    }
}

TEST_CASE("clock offsets shift local time only")
{
    auto cfg = config(3);
    cfg.clock_offset = {0, 250, -400};
    Harness h(cfg);
    h.loop.run_until(1000);
    CHECK(h.net.local_time(0) == 1000);
    CHECK(h.net.local_time(1) == 1250);
    CHECK(h.net.local_time(2) == 600);
}

TEST_CASE("identical seeds give identical logs")
{
    auto run = [](std::uint64_t seed) {
        auto cfg = config(8);
        cfg.firewalled = {7};
        cfg.bridges = {0};
        Harness h(cfg, seed);
        h.net.start();
        RngStream rng(seed);
        for (int i = 0; i < 100; ++i) {
            const auto from = static_cast<NodeId>(rng.uniform_int(0, 7));
            h.net.broadcast(from, std::make_shared<Ping>(i), static_cast<SimTime>(rng.uniform_int(0, 500)));
        }
        h.loop.schedule(300, [&] { h.net.partition({0, 1, 2}, {3, 4, 5, 6, 7}); });
        h.loop.schedule(4000, [&] { h.net.heal(); });
        h.loop.run_until(8000);
        return std::make_pair(h.log.lines(), h.log.digest());
    };
    auto a = run(11), b = run(11), c = run(12);
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
    CHECK_FALSE(a.second == c.second);
}

TEST_CASE("network config validation")
{
    EventLoop loop;
    EventLog log;
    CHECK_THROWS_AS(Network(config(0), loop, RngStream(1), log), std::invalid_argument);
    auto c = config(3);
    c.firewalled = {1};
    c.bridges = {1};
    CHECK_THROWS_AS(Network(c, loop, RngStream(1), log), std::invalid_argument);
    c = config(3);
    c.region_of = {0, 1};
    CHECK_THROWS_AS(Network(c, loop, RngStream(1), log), std::invalid_argument);
}
