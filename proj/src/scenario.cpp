#include <pchain/protocol.hpp>
#include <pchain/scenario.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace pchain {

using nlohmann::json;

std::string to_string(Behavior behavior)
{
    switch (behavior) {
    case Behavior::honest: return "honest";
    case Behavior::false_accept: return "false_accept";
    case Behavior::false_reject_fabricated_evidence: return "false_reject_fabricated_evidence";
    case Behavior::double_spender: return "double_spender";
    case Behavior::compensation_fraud: return "compensation_fraud";
    case Behavior::sybil_spawner: return "sybil_spawner";
    }
    return "unknown";
}

Behavior behavior_from_string(std::string_view text)
{
    for (auto b : {Behavior::honest, Behavior::false_accept, Behavior::false_reject_fabricated_evidence,
                   Behavior::double_spender, Behavior::compensation_fraud, Behavior::sybil_spawner})
        if (to_string(b) == text)
            return b;
    throw ScenarioError("unknown behavior '" + std::string(text) + "'");
}

bool processes_honestly(Behavior behavior)
{
    return behavior == Behavior::honest || behavior == Behavior::double_spender ||
           behavior == Behavior::compensation_fraud;
}

namespace {

/// Object reader that rejects unknown keys and reports type errors with a path.
class Fields
{
public:
    Fields(const json& j, std::string where, std::initializer_list<std::string_view> keys)
        : j_(j), where_(std::move(where))
    {
        if (!j.is_object())
            throw ScenarioError(where_ + ": expected an object");
        for (const auto& [k, v] : j.items())
            if (std::find(keys.begin(), keys.end(), k) == keys.end())
                throw ScenarioError(where_ + ": unknown key '" + k + "'");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    template <class T>
    T get(const std::string& key, T fallback) const
    {
        if (!j_.contains(key))
            return fallback;
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ScenarioError(where_ + "." + key + ": wrong type");
        }
    }

    template <class T>
    T require(const std::string& key) const
    {
        if (!j_.contains(key))
            throw ScenarioError(where_ + ": missing '" + key + "'");
        return get<T>(key, T{});
    }

    SimTime millis(const std::string& key, SimTime fallback) const
    {
        const auto v = get<double>(key, static_cast<double>(fallback));
        if (v < 0)
            throw ScenarioError(where_ + "." + key + ": must be non-negative");
        return static_cast<SimTime>(std::llround(v));
    }

    SimTime secs(const std::string& key, SimTime fallback) const
    {
        const auto v = get<double>(key, static_cast<double>(fallback) / 1000.0);
        if (v < 0)
            throw ScenarioError(where_ + "." + key + ": must be non-negative");
        return static_cast<SimTime>(std::llround(v * 1000.0));
    }

    const json& at(const std::string& key) const { return j_.at(key); }
    const std::string& where() const { return where_; }

private:
    const json& j_;
    std::string where_;
};

WitnessMode witness_mode(const std::string& text, const std::string& where)
{
    if (text == "selected")
        return WitnessMode::selected;
    if (text == "corrupt_only")
        return WitnessMode::corrupt_only;
    if (text == "all")
        return WitnessMode::all;
    throw ScenarioError(where + ": unknown witness mode '" + text + "'");
}

SenderPool sender_pool(const std::string& text, const std::string& where)
{
    if (text == "honest")
        return SenderPool::honest;
    if (text == "corrupt")
        return SenderPool::corrupt;
    if (text == "all")
        return SenderPool::all;
    throw ScenarioError(where + ": unknown sender pool '" + text + "'");
}

void check_node(std::int64_t id, std::size_t n, const std::string& where)
{
    if (id < 0 || static_cast<std::size_t>(id) >= n)
        throw ScenarioError(where + ": node " + std::to_string(id) + " does not exist");
}

std::vector<NodeId> node_list(const json& j, std::size_t n, const std::string& where)
{
    if (!j.is_array())
        throw ScenarioError(where + ": expected a list of node ids");
    std::vector<NodeId> out;
    for (const auto& v : j) {
        if (!v.is_number_integer())
            throw ScenarioError(where + ": expected a list of node ids");
        check_node(v.get<std::int64_t>(), n, where);
        out.push_back(v.get<NodeId>());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

void parse_network(Scenario& s, const json& j)
{
    Fields f(j, "network",
             {"nodes", "regions", "latency_ms", "jitter_ms", "ping_interval_ms", "miss_limit", "connectivity_window_ms",
              "connectivity_threshold", "min_regions", "firewalled", "bridges", "keepalive_interval_ms", "clock_skew_ms",
              "connectivity_rule"});
    auto& c = s.network;
    const auto nodes = f.require<std::int64_t>("nodes");
    if (nodes < 2)
        throw ScenarioError("network.nodes: need at least 2 nodes");
    c.nodes = static_cast<std::size_t>(nodes);
    c.regions = f.get<std::size_t>("regions", c.regions);
    if (c.regions == 0)
        throw ScenarioError("network.regions: must be positive");
    c.latency.base = f.millis("latency_ms", c.latency.base);
    c.latency.jitter = f.millis("jitter_ms", c.latency.jitter);
    c.ping_interval = f.millis("ping_interval_ms", c.ping_interval);
    if (c.ping_interval <= 0)
        throw ScenarioError("network.ping_interval_ms: must be positive");
    c.miss_limit = f.get<int>("miss_limit", c.miss_limit);
    c.connectivity_window = f.millis("connectivity_window_ms", c.connectivity_window);
    c.connectivity_threshold = f.get<double>("connectivity_threshold", c.connectivity_threshold);
    c.min_regions = f.get<std::size_t>("min_regions", c.min_regions);
    if (f.has("firewalled"))
        c.firewalled = node_list(f.at("firewalled"), c.nodes, "network.firewalled");
    if (f.has("bridges"))
        c.bridges = node_list(f.at("bridges"), c.nodes, "network.bridges");
    for (auto b : c.bridges)
        if (std::count(c.firewalled.begin(), c.firewalled.end(), b))
            throw ScenarioError("network: node " + std::to_string(b) + " is both firewalled and a bridge");
    c.keepalive_interval = f.millis("keepalive_interval_ms", c.keepalive_interval);
    s.clock_skew = f.millis("clock_skew_ms", 0);
    s.connectivity_rule = f.get<bool>("connectivity_rule", true);
}

void parse_consensus(Scenario& s, const json& j)
{
    Fields f(j, "consensus",
             {"waiting_period_ms", "recipient_spend_delay_ms", "slash_fraction", "min_acceptances", "community_k",
              "witness_pool_size", "witness_stake", "expiry_s", "corrupt_witness_count"});
    auto& c = s.consensus;
    c.waiting_period = f.millis("waiting_period_ms", c.waiting_period);
    c.recipient_spend_delay = f.millis("recipient_spend_delay_ms", c.recipient_spend_delay);
    c.slash_fraction = f.get<double>("slash_fraction", c.slash_fraction);
    c.min_acceptances = f.get<std::size_t>("min_acceptances", c.min_acceptances);
    c.community_k = f.get<std::size_t>("community_k", c.community_k);
    c.witness_pool_size = f.get<std::size_t>("witness_pool_size", c.witness_pool_size);
    c.witness_stake = f.get<std::uint64_t>("witness_stake", c.witness_stake);
    s.expiry = f.secs("expiry_s", s.expiry);
    s.corrupt_witness_count = f.get<std::size_t>("corrupt_witness_count", s.corrupt_witness_count);
    try {
        check_params(c);
    } catch (const std::invalid_argument& e) {
        throw ScenarioError(std::string("consensus: ") + e.what());
    }
    if (s.expiry <= c.waiting_period)
        throw ScenarioError("consensus.expiry_s: must exceed the waiting period");
}

void parse_ledger(Scenario& s, const json& j)
{
    Fields f(j, "ledger", {"require_fresh_receiver", "fee_rate_ppm", "fee_cap", "fee_payer", "genesis_per_wallet"});
    s.ledger.require_fresh_receiver = f.get<bool>("require_fresh_receiver", true);
    s.ledger.fees.rate_ppm = f.get<std::uint64_t>("fee_rate_ppm", s.ledger.fees.rate_ppm);
    s.ledger.fees.cap = f.get<std::uint64_t>("fee_cap", s.ledger.fees.cap);
    const auto payer = f.get<std::string>("fee_payer", "sender");
    if (payer == "sender")
        s.ledger.fees.payer = FeePayer::sender;
    else if (payer == "receiver")
        s.ledger.fees.payer = FeePayer::receiver;
    else
        throw ScenarioError("ledger.fee_payer: expected sender or receiver");
    s.genesis_per_wallet = f.get<std::uint64_t>("genesis_per_wallet", s.genesis_per_wallet);
}

void parse_compensation(Scenario& s, const json& j)
{
    Fields f(j, "compensation",
             {"enabled", "day_length_s", "daily_amount", "min_transactors", "bridge_daily_amount", "min_served"});
    auto& p = s.compensation;
    s.compensation_enabled = f.get<bool>("enabled", true);
    p.day_length = f.secs("day_length_s", p.day_length);
    if (p.day_length <= 0)
        throw ScenarioError("compensation.day_length_s: must be positive");
    p.daily_amount = f.get<std::uint64_t>("daily_amount", p.daily_amount);
    p.min_transactors = f.get<std::size_t>("min_transactors", p.min_transactors);
    p.bridge_daily_amount = f.get<std::uint64_t>("bridge_daily_amount", p.bridge_daily_amount);
    p.min_served = f.get<std::size_t>("min_served", p.min_served);
}

void parse_privacy(Scenario& s, const json& j)
{
    Fields f(j, "privacy", {"stem_length", "max_hop_delay_ms", "batch_size"});
    s.stem.stem_length = f.get<std::size_t>("stem_length", s.stem.stem_length);
    s.stem.max_hop_delay = f.millis("max_hop_delay_ms", s.stem.max_hop_delay);
    s.stem.batch_size = f.get<std::size_t>("batch_size", s.stem.batch_size);
}

void parse_population(Scenario& s, const json& j)
{
    const auto n = s.network.nodes;
    s.behaviors.assign(n, Behavior::honest);
    if (!j.is_array())
        throw ScenarioError("population: expected a list");
    std::vector<bool> assigned(n, false);
    std::vector<std::pair<Behavior, std::size_t>> counted;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto where = "population[" + std::to_string(i) + "]";
        Fields f(j[i], where, {"behavior", "count", "nodes"});
        const auto b = behavior_from_string(f.require<std::string>("behavior"));
        if (f.has("nodes")) {
            for (auto id : node_list(f.at("nodes"), n, where + ".nodes")) {
                if (assigned[id])
                    throw ScenarioError(where + ": node " + std::to_string(id) + " assigned twice");
                assigned[id] = true;
                s.behaviors[id] = b;
            }
        } else {
            counted.emplace_back(b, f.require<std::size_t>("count"));
        }
    }
    // Counted behaviors fill the highest unassigned indices.
    std::size_t next = n;
    for (const auto& [b, count] : counted) {
        for (std::size_t c = 0; c < count; ++c) {
            while (next > 0 && assigned[next - 1])
                --next;
            if (next == 0)
                throw ScenarioError("population: more behaviors than nodes");
            --next;
            assigned[next] = true;
            s.behaviors[next] = b;
        }
    }
    if (std::none_of(s.behaviors.begin(), s.behaviors.end(), [](Behavior b) { return b == Behavior::honest; }))
        throw ScenarioError("population: at least one node must be honest");
}

void parse_workload(Scenario& s, const json& j)
{
    const auto n = s.network.nodes;
    if (!j.is_array())
        throw ScenarioError("workload: expected a list");
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto where = "workload[" + std::to_string(i) + "]";
        if (!j[i].is_object() || !j[i].contains("type"))
            throw ScenarioError(where + ": missing 'type'");
        const auto type = j[i]["type"].is_string() ? j[i]["type"].get<std::string>() : "";
        if (type == "transfers") {
            Fields f(j[i], where,
                     {"type", "count", "start_s", "interval_ms", "amount", "senders", "submit", "stem", "witnesses"});
            TransferWorkload w;
            w.count = f.require<std::size_t>("count");
            w.start = f.secs("start_s", 0);
            w.interval = f.millis("interval_ms", w.interval);
            w.amount = f.get<std::uint64_t>("amount", w.amount);
            w.senders = sender_pool(f.get<std::string>("senders", "honest"), where);
            if (f.has("submit") && f.at("submit").is_number_integer()) {
                check_node(f.at("submit").get<std::int64_t>(), n, where + ".submit");
                w.submit = std::to_string(f.at("submit").get<std::int64_t>());
            } else {
                w.submit = f.get<std::string>("submit", "sender");
                if (w.submit != "sender" && w.submit != "random" && w.submit != "firewalled")
                    throw ScenarioError(where + ".submit: expected sender, random, firewalled or a node id");
                if (w.submit == "firewalled" && s.network.firewalled.empty())
                    throw ScenarioError(where + ".submit: no firewalled nodes");
            }
            w.stem = f.get<bool>("stem", false);
            w.witnesses = witness_mode(f.get<std::string>("witnesses", "selected"), where);
            s.transfers.push_back(w);
        } else if (type == "wash") {
            Fields f(j[i], where, {"type", "count", "accounts", "start_s", "interval_ms", "amount"});
            WashWorkload w;
            w.count = f.require<std::size_t>("count");
            w.accounts = f.get<std::size_t>("accounts", w.accounts);
            if (w.accounts < 2)
                throw ScenarioError(where + ".accounts: need at least 2");
            w.start = f.secs("start_s", 0);
            w.interval = f.millis("interval_ms", w.interval);
            w.amount = f.get<std::uint64_t>("amount", w.amount);
            s.wash.push_back(w);
        } else if (type == "invalid_flood") {
            Fields f(j[i], where, {"type", "count", "start_s", "interval_ms", "kinds", "origin", "witnesses"});
            InvalidFlood w;
            w.count = f.require<std::size_t>("count");
            w.start = f.secs("start_s", 0);
            w.interval = f.millis("interval_ms", w.interval);
            w.kinds = f.get<std::vector<std::string>>("kinds", w.kinds);
            static const std::set<std::string> known{"overdraw", "double_spend", "bad_signature", "receiver_reuse",
                                                     "sequence_gap"};
            if (w.kinds.empty())
                throw ScenarioError(where + ".kinds: must not be empty");
            for (const auto& k : w.kinds)
                if (!known.count(k))
                    throw ScenarioError(where + ".kinds: unknown kind '" + k + "'");
            w.origin = f.get<std::string>("origin", w.origin);
            if (w.origin != "corrupt" && w.origin != "honest")
                throw ScenarioError(where + ".origin: expected corrupt or honest");
            w.witnesses = witness_mode(f.get<std::string>("witnesses", "corrupt_only"), where);
            s.floods.push_back(w);
        } else {
            throw ScenarioError(where + ": unknown workload type '" + type + "'");
        }
    }
}

std::vector<NodeId> parse_side(const json& j, const Scenario& s, const std::string& where)
{
    const auto n = s.network.nodes;
    Fields f(j, where, {"fraction", "nodes", "region"});
    std::vector<NodeId> side;
    if (f.has("nodes")) {
        side = node_list(f.at("nodes"), n, where + ".nodes");
    } else if (f.has("fraction")) {
        const auto frac = f.get<double>("fraction", 0);
        if (frac <= 0 || frac >= 1)
            throw ScenarioError(where + ".fraction: must lie strictly between 0 and 1");
        const auto count = static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));
        for (NodeId i = 0; i < count; ++i)
            side.push_back(i);
    } else if (f.has("region")) {
        const auto r = f.get<std::size_t>("region", 0);
        if (r >= s.network.regions)
            throw ScenarioError(where + ".region: no such region");
        for (NodeId i = 0; i < n; ++i)
            if (i % s.network.regions == r)
                side.push_back(i);
    } else {
        throw ScenarioError(where + ": expected fraction, nodes or region");
    }
    if (side.empty() || side.size() >= n)
        throw ScenarioError(where + ": a partition needs nodes on both sides");
    return side;
}

void parse_attacks(Scenario& s, const json& j)
{
    const auto n = s.network.nodes;
    if (!j.is_array())
        throw ScenarioError("attacks: expected a list");
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto where = "attacks[" + std::to_string(i) + "]";
        if (!j[i].is_object() || !j[i].contains("type"))
            throw ScenarioError(where + ": missing 'type'");
        const auto type = j[i]["type"].is_string() ? j[i]["type"].get<std::string>() : "";
        if (type == "double_spend") {
            Fields f(j[i], where, {"type", "at_s", "attacker", "submit", "gap_ms", "amount", "witnesses"});
            DoubleSpendAttack a;
            a.at = f.secs("at_s", 0);
            const auto attacker = f.require<std::int64_t>("attacker");
            check_node(attacker, n, where + ".attacker");
            a.attacker = static_cast<NodeId>(attacker);
            a.submit_a = a.submit_b = a.attacker;
            if (f.has("submit")) {
                auto pair = f.get<std::vector<std::int64_t>>("submit", {});
                if (pair.size() != 2)
                    throw ScenarioError(where + ".submit: expected two node ids");
                check_node(pair[0], n, where + ".submit");
                check_node(pair[1], n, where + ".submit");
                a.submit_a = static_cast<NodeId>(pair[0]);
                a.submit_b = static_cast<NodeId>(pair[1]);
            }
            a.gap = f.millis("gap_ms", 0);
            a.amount = f.get<std::uint64_t>("amount", 0);
            a.witnesses = witness_mode(f.get<std::string>("witnesses", "selected"), where);
            s.double_spends.push_back(a);
        } else if (type == "partition") {
            Fields f(j[i], where, {"type", "start_s", "end_s", "side_a"});
            PartitionPlan p;
            p.start = f.secs("start_s", 0);
            p.end = f.secs("end_s", 0);
            if (p.end <= p.start)
                throw ScenarioError(where + ": end_s must be after start_s");
            if (!f.has("side_a"))
                throw ScenarioError(where + ": missing 'side_a'");
            p.side_a = parse_side(f.at("side_a"), s, where + ".side_a");
            for (const auto& q : s.partitions)
                if (p.start < q.end && q.start < p.end)
                    throw ScenarioError(where + ": partitions must not overlap in time");
            s.partitions.push_back(p);
        } else if (type == "partition_double_spend") {
            Fields f(j[i], where, {"type", "at_s", "attacker", "partition"});
            PartitionDoubleSpend a;
            a.at = f.secs("at_s", 0);
            const auto attacker = f.require<std::int64_t>("attacker");
            check_node(attacker, n, where + ".attacker");
            a.attacker = static_cast<NodeId>(attacker);
            a.partition = f.get<std::size_t>("partition", 0);
            s.partition_double_spends.push_back(a);
        } else {
            throw ScenarioError(where + ": unknown attack type '" + type + "'");
        }
    }
    for (const auto& a : s.partition_double_spends) {
        if (a.partition >= s.partitions.size())
            throw ScenarioError("attacks: partition_double_spend refers to a missing partition");
        const auto& p = s.partitions[a.partition];
        if (a.at < p.start || a.at >= p.end)
            throw ScenarioError("attacks: partition_double_spend must happen during its partition");
    }
}

void parse_assertions(Scenario& s, const json& j)
{
    if (!j.is_array())
        throw ScenarioError("assertions: expected a list");
    static const std::set<std::string> ops{"==", "!=", "<", "<=", ">", ">="};
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto where = "assertions[" + std::to_string(i) + "]";
        Fields f(j[i], where, {"metric", "op", "value"});
        Assertion a;
        a.metric = f.require<std::string>("metric");
        a.op = f.require<std::string>("op");
        if (!ops.count(a.op))
            throw ScenarioError(where + ".op: unknown operator '" + a.op + "'");
        a.value = f.require<double>("value");
        s.assertions.push_back(a);
    }
}

} // namespace

Scenario parse_scenario(const json& description)
{
    Fields f(description, "scenario",
             {"name", "seed", "duration_s", "network", "consensus", "ledger", "compensation", "privacy", "population",
              "log_level", "workload", "attacks", "assertions", "description"});
    Scenario s;
    s.source = description;
    s.name = f.require<std::string>("name");
    s.seed = f.get<std::uint64_t>("seed", s.seed);
    s.duration = f.secs("duration_s", s.duration);
    if (s.duration <= 0)
        throw ScenarioError("scenario.duration_s: must be positive");
    if (!f.has("network"))
        throw ScenarioError("scenario: missing 'network'");
    parse_network(s, f.at("network"));
    if (f.has("consensus"))
        parse_consensus(s, f.at("consensus"));
    if (f.has("ledger"))
        parse_ledger(s, f.at("ledger"));
    if (f.has("compensation"))
        parse_compensation(s, f.at("compensation"));
    if (f.has("privacy"))
        parse_privacy(s, f.at("privacy"));
    if (f.has("population"))
        parse_population(s, f.at("population"));
    else
        s.behaviors.assign(s.network.nodes, Behavior::honest);
    const auto level = f.get<std::string>("log_level", "full");
    if (level == "full")
        s.log_level = LogLevel::full;
    else if (level == "decisions")
        s.log_level = LogLevel::decisions;
    else
        throw ScenarioError("scenario.log_level: expected full or decisions");
    if (f.has("workload"))
        parse_workload(s, f.at("workload"));
    if (f.has("attacks"))
        parse_attacks(s, f.at("attacks"));
    if (f.has("assertions"))
        parse_assertions(s, f.at("assertions"));
    return s;
}

Scenario load_scenario(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ScenarioError("cannot open scenario file " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded())
        throw ScenarioError("scenario file " + path.string() + " is not valid JSON");
    return parse_scenario(j);
}

std::string config_hash(const Scenario& scenario)
{
    const auto text = scenario.source.dump();
    return hash_bytes(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size())).hex().substr(0, 16);
}

std::vector<AssertionResult> evaluate(const std::vector<Assertion>& assertions,
                                      const std::map<std::string, double>& metrics)
{
    std::vector<AssertionResult> out;
    for (const auto& a : assertions) {
        AssertionResult r{a, std::nullopt, false};
        if (auto it = metrics.find(a.metric); it != metrics.end()) {
            const double v = it->second;
            r.actual = v;
            if (a.op == "==")
                r.passed = v == a.value;
            else if (a.op == "!=")
                r.passed = v != a.value;
            else if (a.op == "<")
                r.passed = v < a.value;
            else if (a.op == "<=")
                r.passed = v <= a.value;
            else if (a.op == ">")
                r.passed = v > a.value;
            else if (a.op == ">=")
                r.passed = v >= a.value;
        }
        out.push_back(r);
    }
    return out;
}

json ScenarioReport::to_json() const
{
    json j;
    j["name"] = name;
    j["version"] = std::string(pchain_version);
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    j["passed"] = passed;
    j["log_digest"] = log_digest.hex();
    j["log_lines"] = log_lines;
    j["decisions_digest"] = decisions_digest.hex();
    j["decisions"] = decisions.size();
    json m = json::object();
    for (const auto& [k, v] : metrics)
        m[k] = v;
    j["metrics"] = m;
    json as = json::array();
    for (const auto& r : assertions) {
        json a;
        a["metric"] = r.assertion.metric;
        a["op"] = r.assertion.op;
        a["expected"] = r.assertion.value;
        a["actual"] = r.actual ? json(*r.actual) : json(nullptr);
        a["passed"] = r.passed;
        as.push_back(a);
    }
    j["assertions"] = as;
    return j;
}

std::string ScenarioReport::metrics_csv() const
{
    std::ostringstream out;
    out << "# version=" << pchain_version << " seed=" << seed << " config_hash=" << config_hash << "\n";
    out << "metric,value\n";
    out << std::setprecision(12);
    for (const auto& [k, v] : metrics)
        out << k << ',' << v << '\n';
    return out.str();
}

namespace {

class Driver
{
public:
    Driver(const Scenario& scenario, World& world, std::uint64_t seed)
        : s_(scenario), world_(world), seed_(seed), rng_(RngStream::derive(seed, "workload"))
    {
        const auto n = world.size();
        for (NodeId i = 0; i < n; ++i)
            add_wallet(generate_keypair(RngStream::derive(seed, "wallet", i).next_u64()), i);
        std::size_t wash_index = 0;
        for (const auto& w : s_.wash) {
            std::vector<std::size_t> group;
            for (std::size_t a = 0; a < w.accounts; ++a) {
                group.push_back(wallets_.size());
                const auto home = world.honest_nodes()[(wash_index + a) % world.honest_nodes().size()];
                add_wallet(generate_keypair(RngStream::derive(seed, "wash", wash_index * 1000 + a).next_u64()), home);
            }
            wash_groups_.push_back(group);
            ++wash_index;
        }
        for (NodeId i = 0; i < n; ++i)
            for (const auto& w : wallets_)
                world.node(i).ledger().add_genesis(w.id, s_.genesis_per_wallet);
    }

    void schedule()
    {
        auto& loop = world_.loop();
        for (std::size_t p = 0; p < s_.partitions.size(); ++p) {
            const auto& plan = s_.partitions[p];
            loop.schedule(plan.start, [this, p] {
                const auto& side_a = s_.partitions[p].side_a;
                std::set<NodeId> a(side_a.begin(), side_a.end()), b;
                for (NodeId i = 0; i < world_.size(); ++i)
                    if (!a.count(i))
                        b.insert(i);
                world_.net().partition(a, b);
            });
            loop.schedule(plan.end, [this] { world_.net().heal(); });
        }
        for (std::size_t w = 0; w < s_.transfers.size(); ++w) {
            const auto& t = s_.transfers[w];
            for (std::size_t i = 0; i < t.count; ++i)
                loop.schedule(t.start + static_cast<SimTime>(i) * t.interval, [this, w] { transfer(w); });
        }
        for (std::size_t w = 0; w < s_.wash.size(); ++w) {
            const auto& t = s_.wash[w];
            for (std::size_t i = 0; i < t.count; ++i)
                loop.schedule(t.start + static_cast<SimTime>(i) * t.interval, [this, w, i] { wash(w, i); });
        }
        for (std::size_t w = 0; w < s_.floods.size(); ++w) {
            const auto& t = s_.floods[w];
            for (std::size_t i = 0; i < t.count; ++i)
                loop.schedule(t.start + static_cast<SimTime>(i) * t.interval, [this, w, i] { flood(w, i); });
        }
        for (std::size_t a = 0; a < s_.double_spends.size(); ++a)
            loop.schedule(s_.double_spends[a].at, [this, a] { double_spend(a); });
        for (std::size_t a = 0; a < s_.partition_double_spends.size(); ++a)
            loop.schedule(s_.partition_double_spends[a].at, [this, a] { partition_double_spend(a); });

        if (s_.compensation_enabled) {
            const auto len = s_.compensation.day_length;
            const auto margin = 2 * s_.consensus.waiting_period + 1 * seconds;
            for (std::uint64_t d = 0; static_cast<SimTime>(d + 1) * len <= s_.duration; ++d) {
                const auto end = static_cast<SimTime>(d + 1) * len;
                loop.schedule(end - 1 * seconds, [this, d] {
                    for (NodeId i = 0; i < world_.size(); ++i)
                        world_.node(i).send_tether_receipt(d);
                });
                loop.schedule(end + margin, [this, d] {
                    for (NodeId i = 0; i < world_.size(); ++i)
                        world_.node(i).issue_compensation(d);
                });
            }
        }
    }

    std::map<std::string, double> metrics() const;

private:
    struct Wallet
    {
        KeyPair key;
        AccountId id;
        NodeId home = 0;
        std::optional<Digest> last;
        SimTime last_at = 0;
    };

    struct Label
    {
        std::string kind;
        std::string detail;
        int group = -1;
        NodeId submit = 0;
        SimTime at = 0;
        bool stem = false;
    };

    void add_wallet(KeyPair key, NodeId home)
    {
        Wallet w;
        w.id = account_id(key.public_key);
        w.key = std::move(key);
        w.home = home;
        wallet_of_.emplace(w.id, wallets_.size());
        offenders_seen_.push_back(false);
        wallets_.push_back(std::move(w));
    }

    const KeyPair& fresh_receiver()
    {
        receivers_.push_back(generate_keypair(RngStream::derive(seed_, "receiver", receivers_.size()).next_u64()));
        return receivers_.back();
    }

    Node& view(NodeId submit)
    {
        if (world_.node(submit).honest_processing())
            return world_.node(submit);
        return world_.node(world_.honest_nodes().front());
    }

    SimTime view_now(const Node& v) { return world_.net().local_time(v.id()); }

    bool busy(const Wallet& w, const Node& v) const
    {
        if (!w.last || v.decided(*w.last))
            return false;
        const auto window = s_.expiry + s_.consensus.waiting_period + 1 * seconds;
        return world_.loop().now() < w.last_at + window;
    }

    std::pair<std::uint64_t, Digest> next_slot(const Ledger& ledger, const AccountId& sender) const
    {
        const auto* chain = ledger.chain(sender);
        Digest prev;
        if (chain && !chain->outgoing.empty())
            prev = chain->outgoing.back();
        return {ledger.chain_length(sender) + 1, prev};
    }

    TransactionRecord transfer_from(Wallet& w, const Ledger& ledger, const KeyPair& receiver, std::uint64_t amount)
    {
        auto [seq, prev] = next_slot(ledger, w.id);
        return make_transfer(w.key, receiver, amount, seq, prev);
    }

    void submit(NodeId node, const TransactionRecord& rec, WitnessMode mode, bool stem, Label label)
    {
        label.submit = node;
        label.at = world_.loop().now();
        label.stem = stem;
        if (labels_.emplace(rec.tx_id, label).second)
            order_.push_back(rec.tx_id);
        world_.node(node).submit(rec, mode, stem);
    }

    std::vector<std::size_t> pool(SenderPool p) const
    {
        std::vector<std::size_t> out;
        for (NodeId i = 0; i < world_.size(); ++i) {
            const bool honest = s_.behaviors[i] == Behavior::honest;
            if (p == SenderPool::all || (p == SenderPool::honest) == honest)
                out.push_back(i);
        }
        return out;
    }

    NodeId submit_node(const TransferWorkload& t, const Wallet& w)
    {
        if (t.submit == "sender")
            return w.home;
        if (t.submit == "random")
            return static_cast<NodeId>(rng_.uniform_int(0, world_.size() - 1));
        if (t.submit == "firewalled") {
            const auto& fw = s_.network.firewalled;
            return fw[rng_.uniform_int(0, fw.size() - 1)];
        }
        return static_cast<NodeId>(std::stoul(t.submit));
    }

    void transfer(std::size_t index)
    {
        const auto& t = s_.transfers[index];
        const auto candidates = pool(t.senders);
        auto& cursor = cursors_[index];
        for (std::size_t attempt = 0; attempt < candidates.size(); ++attempt) {
            auto& w = wallets_[candidates[(cursor + attempt) % candidates.size()]];
            const auto node = submit_node(t, w);
            auto& v = view(node);
            if (busy(w, v))
                continue;
            if (v.ledger().spendable(w.id, view_now(v)) < v.ledger().required_balance(t.amount))
                continue;
            const auto rec = transfer_from(w, v.ledger(), fresh_receiver(), t.amount);
            w.last = rec.tx_id;
            w.last_at = world_.loop().now();
            cursor = (cursor + attempt + 1) % candidates.size();
            submit(node, rec, t.witnesses, t.stem, {"valid", "transfer"});
            return;
        }
        ++skipped_;
    }

    void wash(std::size_t index, std::size_t i)
    {
        const auto& t = s_.wash[index];
        const auto& group = wash_groups_[index];
        auto& w = wallets_[group[i % group.size()]];
        const auto& to = wallets_[group[(i + 1) % group.size()]];
        auto& v = view(w.home);
        if (busy(w, v) || v.ledger().spendable(w.id, view_now(v)) < v.ledger().required_balance(t.amount)) {
            ++skipped_;
            return;
        }
        const auto rec = transfer_from(w, v.ledger(), to.key, t.amount);
        w.last = rec.tx_id;
        w.last_at = world_.loop().now();
        submit(w.home, rec, WitnessMode::selected, false, {"valid", "wash"});
    }

    void flood(std::size_t index, std::size_t i)
    {
        const auto& t = s_.floods[index];
        std::vector<NodeId> origins;
        for (NodeId n = 0; n < world_.size(); ++n) {
            const bool honest = s_.behaviors[n] == Behavior::honest;
            if ((t.origin == "honest") == honest)
                origins.push_back(n);
        }
        if (origins.empty()) {
            ++skipped_;
            return;
        }
        const auto origin = origins[i % origins.size()];
        auto& w = wallets_[origin];
        const auto& ledger = world_.node(world_.honest_nodes().front()).ledger();
        auto kind = t.kinds[i % t.kinds.size()];

        std::optional<TransactionRecord> rec;
        if (kind == "double_spend") {
            std::vector<const TransactionRecord*> settled;
            for (const auto& tx : ledger.append_order()) {
                const auto* r = ledger.find(tx);
                auto it = wallet_of_.find(r->sender);
                if (it != wallet_of_.end() && it->second < world_.size() &&
                    std::find(origins.begin(), origins.end(), static_cast<NodeId>(it->second)) != origins.end())
                    settled.push_back(r);
            }
            if (!settled.empty()) {
                const auto* prior = settled[rng_.uniform_int(0, settled.size() - 1)];
                const auto& owner = wallets_[wallet_of_.at(prior->sender)];
                rec = make_transfer(owner.key, fresh_receiver(), prior->amount, prior->sender_seq, prior->prev_sender_hash);
            } else {
                kind = "overdraw";
            }
        } else if (kind == "receiver_reuse") {
            std::vector<std::size_t> credited;
            for (std::size_t r = 0; r < receivers_.size(); ++r)
                if (ledger.spawned(account_id(receivers_[r].public_key)))
                    credited.push_back(r);
            if (!credited.empty() && ledger.config().require_fresh_receiver) {
                const auto& receiver = receivers_[credited[rng_.uniform_int(0, credited.size() - 1)]];
                rec = transfer_from(w, ledger, receiver, 1 + i % 97);
            } else {
                kind = "overdraw";
            }
        } else if (kind == "bad_signature") {
            rec = transfer_from(w, ledger, fresh_receiver(), 1);
            rec->sender_sig.bytes[0] ^= 0x01;
        } else if (kind == "sequence_gap") {
            auto [seq, prev] = next_slot(ledger, w.id);
            const std::string tag = "gap-" + std::to_string(i);
            const auto fake_prev = hash_bytes(std::span(reinterpret_cast<const std::uint8_t*>(tag.data()), tag.size()));
            rec = make_transfer(w.key, fresh_receiver(), 1, seq + 1, fake_prev);
        }
        if (!rec)
            rec = transfer_from(w, ledger, fresh_receiver(), ledger.balance(w.id) + 1);
        submit(origin, *rec, t.witnesses, false, {"invalid", kind});
    }

    void double_spend(std::size_t index)
    {
        const auto& a = s_.double_spends[index];
        auto& w = wallets_[a.attacker];
        auto& v = view(a.submit_a);
        const auto amount = a.amount ? a.amount : v.ledger().balance(w.id) * 6 / 10;
        auto [seq, prev] = next_slot(v.ledger(), w.id);
        const auto first = make_transfer(w.key, fresh_receiver(), amount, seq, prev);
        const auto second = make_transfer(w.key, fresh_receiver(), amount, seq, prev);
        offenders_seen_[a.attacker] = true;
        const int group = groups_++;
        submit(a.submit_a, first, a.witnesses, false, {"conflict", "double_spend", group});
        world_.loop().schedule_after(a.gap, [this, a, second, group] {
            submit(a.submit_b, second, a.witnesses, false, {"conflict", "double_spend", group});
        });
    }

    void partition_double_spend(std::size_t index)
    {
        const auto& a = s_.partition_double_spends[index];
        const auto& side_a = s_.partitions[a.partition].side_a;
        auto in_a = [&](NodeId n) { return std::binary_search(side_a.begin(), side_a.end(), n); };
        std::optional<NodeId> node_a, node_b;
        if (in_a(a.attacker) && world_.node(a.attacker).honest_processing())
            node_a = a.attacker;
        for (NodeId n = 0; n < world_.size(); ++n) {
            if (!world_.node(n).honest_processing())
                continue;
            if (in_a(n) && !node_a)
                node_a = n;
            if (!in_a(n) && !node_b)
                node_b = n;
        }
        if (!node_a || !node_b) {
            ++skipped_;
            return;
        }
        auto& w = wallets_[a.attacker];
        auto& v = world_.node(*node_a);
        const auto amount = v.ledger().balance(w.id) * 6 / 10;
        auto [seq, prev] = next_slot(v.ledger(), w.id);
        const auto first = make_transfer(w.key, fresh_receiver(), amount, seq, prev);
        const auto second = make_transfer(w.key, fresh_receiver(), amount, seq, prev);
        offenders_seen_[a.attacker] = true;
        const int group = groups_++;
        submit(*node_a, first, WitnessMode::selected, false, {"conflict", "partition_double_spend", group});
        submit(*node_b, second, WitnessMode::selected, false, {"conflict", "partition_double_spend", group});
    }

    const Scenario& s_;
    World& world_;
    std::uint64_t seed_;
    RngStream rng_;
    std::vector<Wallet> wallets_;
    std::map<AccountId, std::size_t> wallet_of_;
    std::vector<bool> offenders_seen_;
    std::vector<std::vector<std::size_t>> wash_groups_;
    std::vector<KeyPair> receivers_;
    std::map<std::size_t, std::size_t> cursors_;
    std::map<Digest, Label> labels_;
    std::vector<Digest> order_;
    int groups_ = 0;
    std::size_t skipped_ = 0;
};

std::map<std::string, double> Driver::metrics() const
{
    std::map<std::string, double> m;
    auto& world = world_;
    const auto& obs = world.observations();
    const auto n = world.size();
    const auto& honest = world.honest_nodes();
    std::set<NodeId> honest_set(honest.begin(), honest.end());

    m["nodes"] = static_cast<double>(n);
    m["honest_nodes"] = static_cast<double>(honest.size());
    m["corrupt_nodes"] = static_cast<double>(world.corrupt_nodes().size());
    m["workload_skipped"] = static_cast<double>(skipped_);

    // Outcomes per transaction at honest nodes.
    std::map<Digest, std::map<NodeId, const WorldObservations::Decision*>> by_tx;
    for (const auto& d : obs.decisions)
        if (honest_set.count(d.node))
            by_tx[d.tx][d.node] = &d;
    auto count_outcome = [&](const Digest& tx, std::string_view outcome) {
        std::size_t c = 0;
        if (auto it = by_tx.find(tx); it != by_tx.end())
            for (const auto& [node, d] : it->second)
                c += d->outcome == outcome;
        return c;
    };

    std::size_t submitted = 0, accepted = 0, accepted_all = 0, rejected = 0, unresolved = 0;
    std::size_t valid_submitted = 0, valid_accepted_all = 0, invalid_submitted = 0, invalid_accepted = 0;
    std::size_t conflict_accepted = 0, stem_txs = 0, fluff_at_origin = 0;
    std::map<int, std::size_t> group_accepted, group_accepted_pre_heal;
    std::map<int, std::map<NodeId, std::size_t>> group_same_node;
    SimTime first_heal = time_never;
    for (const auto& p : s_.partitions)
        first_heal = std::min(first_heal, p.end);

    for (const auto& tx : order_) {
        const auto& label = labels_.at(tx);
        ++submitted;
        const auto acc = count_outcome(tx, "accepted");
        const auto rej = count_outcome(tx, "rejected");
        accepted += acc > 0;
        accepted_all += acc == honest.size();
        rejected += acc == 0 && rej > 0;
        unresolved += acc + rej < honest.size();
        if (label.kind == "valid") {
            ++valid_submitted;
            valid_accepted_all += acc == honest.size();
        } else if (label.kind == "invalid") {
            ++invalid_submitted;
            invalid_accepted += acc > 0;
        } else if (label.kind == "conflict") {
            conflict_accepted += acc > 0;
            if (acc > 0)
                ++group_accepted[label.group];
            bool pre_heal = false;
            if (auto it = by_tx.find(tx); it != by_tx.end()) {
                for (const auto& [node, d] : it->second) {
                    if (d->outcome != "accepted")
                        continue;
                    ++group_same_node[label.group][node];
                    pre_heal |= d->t < first_heal;
                }
            }
            if (pre_heal)
                ++group_accepted_pre_heal[label.group];
        }
        if (label.stem) {
            ++stem_txs;
            auto o = obs.origin.find(tx);
            auto f = obs.fluff_node.find(tx);
            if (o != obs.origin.end() && f != obs.fluff_node.end() && o->second == f->second)
                ++fluff_at_origin;
        }
    }
    m["submitted"] = static_cast<double>(submitted);
    m["accepted"] = static_cast<double>(accepted);
    m["accepted_all"] = static_cast<double>(accepted_all);
    m["rejected"] = static_cast<double>(rejected);
    m["unresolved"] = static_cast<double>(unresolved);
    m["valid_submitted"] = static_cast<double>(valid_submitted);
    m["valid_accepted_all"] = static_cast<double>(valid_accepted_all);
    m["invalid_submitted"] = static_cast<double>(invalid_submitted);
    m["invalid_accepted"] = static_cast<double>(invalid_accepted);
    m["conflict_groups"] = static_cast<double>(groups_);
    m["conflict_accepted"] = static_cast<double>(conflict_accepted);

    std::size_t dual = 0, dual_pre_heal = 0, dual_same_node = 0;
    for (const auto& [g, c] : group_accepted)
        dual += c >= 2;
    for (const auto& [g, c] : group_accepted_pre_heal)
        dual_pre_heal += c >= 2;
    for (const auto& [g, per_node] : group_same_node)
        for (const auto& [node, c] : per_node)
            if (c >= 2) {
                ++dual_same_node;
                break;
            }
    m["dual_accepted_pairs"] = static_cast<double>(dual);
    m["dual_accepted_pre_heal"] = static_cast<double>(dual_pre_heal);
    m["dual_accepted_same_node"] = static_cast<double>(dual_same_node);

    // Penalties.
    std::size_t post_partition = 0, sender_fraud = 0, falsification = 0;
    for (const auto& p : obs.penalties) {
        post_partition += p.offense == Offense::post_partition_double_spend;
        sender_fraud += p.offense == Offense::sender_fraud;
        falsification += p.offense == Offense::witness_falsification;
    }
    m["post_partition_detections"] = static_cast<double>(post_partition);
    m["sender_fraud_penalties"] = static_cast<double>(sender_fraud);
    m["witness_falsification_penalties"] = static_cast<double>(falsification);

    std::size_t offenders = 0, offenders_banned_all = 0;
    double offender_balance_max = 0;
    for (std::size_t i = 0; i < offenders_seen_.size(); ++i) {
        if (!offenders_seen_[i])
            continue;
        ++offenders;
        const auto& id = wallets_[i].id;
        bool all = true;
        for (auto h : honest) {
            all &= world.node(h).banned().count(id) != 0;
            offender_balance_max =
                std::max(offender_balance_max, static_cast<double>(world.node(h).ledger().balance(id)));
        }
        offenders_banned_all += all;
    }
    m["offenders"] = static_cast<double>(offenders);
    m["offenders_banned_all"] = static_cast<double>(offenders_banned_all);
    m["offender_balance_max"] = offender_balance_max;

    // Partition windows. Acceptances of transactions first seen once the
    // failure detector has had time to notice the split.
    if (!s_.partitions.empty()) {
        const auto& p = s_.partitions.front();
        const auto detect = static_cast<SimTime>(s_.network.miss_limit) * s_.network.ping_interval;
        const std::set<NodeId> side_a(p.side_a.begin(), p.side_a.end());
        std::size_t a_any = 0, a_new = 0, a_detected = 0, b_any = 0;
        for (const auto& d : obs.decisions) {
            if (!honest_set.count(d.node) || d.outcome != "accepted" || d.t < p.start || d.t >= p.end)
                continue;
            const bool in_a = side_a.count(d.node) != 0;
            (in_a ? a_any : b_any) += 1;
            if (in_a && d.t >= p.start + detect)
                ++a_detected;
            auto seen = obs.first_seen.find({d.node, d.tx});
            if (in_a && seen != obs.first_seen.end() && seen->second >= p.start + detect)
                ++a_new;
        }
        m["side_a_accepted_during_split"] = static_cast<double>(a_any);
        m["side_a_new_accepted_during_split"] = static_cast<double>(a_new);
        m["side_a_accepted_after_detection"] = static_cast<double>(a_detected);
        m["side_b_accepted_during_split"] = static_cast<double>(b_any);
    }

    // Blacklists.
    std::size_t byzantine = 0, byzantine_blacklisted_all = 0, honest_blacklisted = 0;
    for (NodeId i = 0; i < n; ++i) {
        const auto& acct = world.node(i).account();
        if (s_.behaviors[i] == Behavior::honest) {
            for (auto h : honest)
                if (world.node(h).blacklisted(acct)) {
                    ++honest_blacklisted;
                    break;
                }
        } else if (!processes_honestly(s_.behaviors[i])) {
            ++byzantine;
            bool all = true;
            for (auto h : honest)
                all &= world.node(h).blacklisted(acct);
            byzantine_blacklisted_all += all;
        }
    }
    m["byzantine_nodes"] = static_cast<double>(byzantine);
    m["byzantine_blacklisted_all"] = static_cast<double>(byzantine_blacklisted_all);
    m["honest_blacklisted"] = static_cast<double>(honest_blacklisted);

    // Compensation.
    std::map<Digest, std::pair<std::size_t, std::size_t>> comp;
    for (const auto& d : obs.compensation_decisions)
        if (honest_set.count(d.node))
            (d.accepted ? comp[d.id].first : comp[d.id].second) += 1;
    std::size_t c_accepted = 0, c_rejected = 0, honest_c_rejected = 0, fraud_accepted = 0, bridge_accepted = 0;
    std::set<NodeId> fraud_issuers;
    for (const auto& c : obs.compensation_issued) {
        const auto [acc, rej] = comp[c.id];
        c_accepted += acc == honest.size();
        c_rejected += rej == honest.size();
        if (c.fraudulent) {
            fraud_accepted += acc > 0;
            fraud_issuers.insert(c.issuer);
        } else {
            honest_c_rejected += rej > 0;
            bridge_accepted += c.kind == CompensationKind::bridge && acc == honest.size();
        }
    }
    std::size_t fraud_blacklisted = 0;
    for (auto f : fraud_issuers) {
        bool all = true;
        for (auto h : honest)
            all &= world.node(h).blacklisted(world.node(f).account());
        fraud_blacklisted += all;
    }
    m["compensation_issued"] = static_cast<double>(obs.compensation_issued.size());
    m["compensation_accepted"] = static_cast<double>(c_accepted);
    m["compensation_rejected"] = static_cast<double>(c_rejected);
    m["honest_compensation_rejected"] = static_cast<double>(honest_c_rejected);
    m["fraud_compensation_issued"] = static_cast<double>(fraud_issuers.size());
    m["fraud_compensation_accepted"] = static_cast<double>(fraud_accepted);
    m["fraud_issuers_blacklisted"] = static_cast<double>(fraud_blacklisted);
    m["bridge_compensation_accepted"] = static_cast<double>(bridge_accepted);
    m["not_eligible"] = static_cast<double>(obs.not_eligible);
    m["max_transactors"] = static_cast<double>(obs.max_transactors);

    // Ledgers.
    bool conservation = true;
    std::uint64_t minted = 0;
    for (NodeId i = 0; i < n; ++i) {
        conservation &= world.node(i).ledger().conservation_holds();
        minted = std::max(minted, world.node(i).ledger().minted_total());
    }
    m["conservation_ok"] = conservation ? 1 : 0;
    m["minted_max"] = static_cast<double>(minted);
    m["consensus_unavailable"] = static_cast<double>(obs.consensus_unavailable);

    // Network.
    const auto& st = world.net().stats();
    m["messages_sent"] = static_cast<double>(st.sent);
    m["messages_delivered"] = static_cast<double>(st.delivered);
    m["dropped_partition"] = static_cast<double>(st.dropped_partition);
    m["dropped_firewall"] = static_cast<double>(st.dropped_firewall);
    m["via_bridge"] = static_cast<double>(st.via_bridge);

    const auto& lines = world.log().lines();
    if (!s_.network.firewalled.empty()) {
        std::size_t submitted_fw = 0, accepted_fw = 0;
        for (const auto& tx : order_) {
            const auto& label = labels_.at(tx);
            if (!world.net().firewalled(label.submit))
                continue;
            ++submitted_fw;
            accepted_fw += count_outcome(tx, "accepted") == honest.size();
        }
        m["firewalled_submitted"] = static_cast<double>(submitted_fw);
        m["firewalled_accepted_all"] = static_cast<double>(accepted_fw);
        if (s_.log_level == LogLevel::full) {
            std::size_t violations = 0;
            for (const auto& line : lines) {
                auto j = json::parse(line, nullptr, false);
                if (j.is_discarded() || j.value("ev", "") != "deliver" || j.contains("via"))
                    continue;
                // Inbound traffic to a firewalled node must come from a bridge.
                const auto from = j["from"].get<NodeId>();
                const auto to = j["to"].get<NodeId>();
                if (world.net().firewalled(to) && !world.net().is_bridge(from))
                    ++violations;
            }
            m["firewall_violations"] = static_cast<double>(violations);
        }
    }

    // Stem routing and origin inference.
    const auto& rs = world.relay().stats();
    m["stem_routes"] = static_cast<double>(rs.routes);
    m["stem_fallbacks"] = static_cast<double>(rs.fallbacks);
    m["stem_fluff_at_origin"] = static_cast<double>(fluff_at_origin);
    if (stem_txs > 0 && s_.log_level == LogLevel::full) {
        std::map<std::string, NodeId> truth;
        for (const auto& tx : order_)
            if (labels_.at(tx).stem)
                truth[short_ref(tx)] = labels_.at(tx).submit;
        const auto fluff = origin_inference(lines, truth, Adversary::fluff_only);
        const auto full = origin_inference(lines, truth, Adversary::full_visibility);
        m["inference_accuracy_fluff_only"] = fluff.accuracy();
        m["inference_accuracy_full"] = full.accuracy();
    }

    m["events_executed"] = static_cast<double>(world.loop().executed());
    m["log_lines"] = static_cast<double>(world.log().size());
    return m;
}

} // namespace

ScenarioReport run_scenario(const Scenario& scenario, const RunOptions& options)
{
    const auto seed = options.seed.value_or(scenario.seed);
    const auto skew = options.clock_skew.value_or(scenario.clock_skew);
    const bool keep = options.keep_log || scenario.log_level == LogLevel::full;

    World world(scenario, seed, skew, keep, options.log_out);
    world.log().append(JsonLine()
                           .field("t", std::int64_t{0})
                           .field("ev", "scenario")
                           .field("name", scenario.name)
                           .field("version", std::string(pchain_version))
                           .field("seed", seed)
                           .field("config_hash", config_hash(scenario))
                           .str());
    Driver driver(scenario, world, seed);
    world.start();
    driver.schedule();
    world.loop().run_until(scenario.duration);

    ScenarioReport report;
    report.name = scenario.name;
    report.seed = seed;
    report.config_hash = config_hash(scenario);
    report.metrics = driver.metrics();
    report.assertions = evaluate(scenario.assertions, report.metrics);
    report.passed = std::all_of(report.assertions.begin(), report.assertions.end(),
                                [](const AssertionResult& r) { return r.passed; });
    report.log_digest = world.log().digest();
    report.log_lines = world.log().size();
    Hasher h;
    for (const auto& d : world.observations().decisions) {
        report.decisions.push_back({d.t, d.node, d.tx, d.outcome});
        h.update(std::to_string(d.t) + ' ' + std::to_string(d.node) + ' ' + d.tx.hex() + ' ' + d.outcome + '\n');
    }
    report.decisions_digest = h.finish();
    if (options.keep_log) {
        const auto& lines = world.log().lines();
        report.log.assign(lines.begin(), lines.end());
    }
    return report;
}

} // namespace pchain
