#pragma once

#include <pchain/consensus.hpp>
#include <pchain/incentives.hpp>
#include <pchain/netsim.hpp>
#include <pchain/privacy.hpp>

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pchain {

inline constexpr std::string_view pchain_version = "0.1.0";

/// Malformed or inconsistent scenario description.
class ScenarioError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

enum class Behavior {
    honest,
    false_accept,
    false_reject_fabricated_evidence,
    double_spender,
    compensation_fraud,
    sybil_spawner,
};

std::string to_string(Behavior behavior);
Behavior behavior_from_string(std::string_view text);

/// Runs the full validation and decision logic. Byzantine reporters
/// (false_accept, false_reject_fabricated_evidence, sybil_spawner) skip it.
bool processes_honestly(Behavior behavior);

enum class WitnessMode {
    /// The initiator's fluid-communities selection.
    selected,
    /// Random corrupt nodes chosen by a corrupt initiator.
    corrupt_only,
    /// Every node.
    all,
};

enum class SenderPool { honest, corrupt, all };

struct TransferWorkload
{
    std::size_t count = 0;
    SimTime start = 0;
    SimTime interval = 100 * ms;
    std::uint64_t amount = 100;
    SenderPool senders = SenderPool::honest;
    /// "sender" (the wallet's home node), "random", "firewalled" or a node id.
    std::string submit = "sender";
    bool stem = false;
    WitnessMode witnesses = WitnessMode::selected;
};

/// Transfers bouncing between a small fixed set of accounts.
struct WashWorkload
{
    std::size_t count = 0;
    std::size_t accounts = 2;
    SimTime start = 0;
    SimTime interval = 1 * seconds;
    std::uint64_t amount = 10;
};

/// Transactions that are invalid against the honest ledger when created.
struct InvalidFlood
{
    std::size_t count = 0;
    SimTime start = 0;
    SimTime interval = 20 * ms;
    /// Any of overdraw, double_spend, bad_signature, receiver_reuse, sequence_gap.
    std::vector<std::string> kinds{"overdraw"};
    /// Which nodes originate the flood: "corrupt" or "honest".
    std::string origin = "corrupt";
    WitnessMode witnesses = WitnessMode::corrupt_only;
};

struct DoubleSpendAttack
{
    SimTime at = 0;
    /// Node whose wallet signs both spends.
    NodeId attacker = 0;
    NodeId submit_a = 0;
    NodeId submit_b = 0;
    SimTime gap = 0;
    /// Zero means 60% of the wallet's balance.
    std::uint64_t amount = 0;
    WitnessMode witnesses = WitnessMode::selected;
};

struct PartitionPlan
{
    SimTime start = 0;
    SimTime end = 0;
    std::vector<NodeId> side_a;
};

/// One spend submitted on each side of a partition.
struct PartitionDoubleSpend
{
    SimTime at = 0;
    NodeId attacker = 0;
    std::size_t partition = 0;
};

struct Assertion
{
    std::string metric;
    std::string op;
    double value = 0;
};

enum class LogLevel { full, decisions };

struct Scenario
{
    std::string name;
    std::uint64_t seed = 1;
    SimTime duration = 60 * seconds;

    NetworkConfig network;
    /// The 50% connectivity-drop rule.
    bool connectivity_rule = true;
    /// Maximum absolute local clock offset; offsets are drawn per node.
    SimTime clock_skew = 0;

    ConsensusParams consensus;
    LedgerConfig ledger;
    bool compensation_enabled = false;
    CompensationPolicy compensation;
    StemParams stem;
    SimTime expiry = 30 * seconds;
    std::size_t corrupt_witness_count = 10;

    std::vector<Behavior> behaviors;
    std::uint64_t genesis_per_wallet = 100'000;
    LogLevel log_level = LogLevel::full;

    std::vector<TransferWorkload> transfers;
    std::vector<WashWorkload> wash;
    std::vector<InvalidFlood> floods;
    std::vector<DoubleSpendAttack> double_spends;
    std::vector<PartitionPlan> partitions;
    std::vector<PartitionDoubleSpend> partition_double_spends;

    std::vector<Assertion> assertions;

    /// The parsed description, for the config hash.
    nlohmann::json source;
};

/// Throws ScenarioError on unknown keys, bad values or references to
/// nodes that do not exist.
Scenario parse_scenario(const nlohmann::json& description);
Scenario load_scenario(const std::filesystem::path& path);

/// Short hex digest of the canonical description.
std::string config_hash(const Scenario& scenario);

struct AssertionResult
{
    Assertion assertion;
    std::optional<double> actual;
    bool passed = false;
};

std::vector<AssertionResult> evaluate(const std::vector<Assertion>& assertions,
                                      const std::map<std::string, double>& metrics);

struct DecisionRecord
{
    SimTime t = 0;
    NodeId node = 0;
    Digest tx;
    std::string outcome;
};

struct ScenarioReport
{
    std::string name;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::map<std::string, double> metrics;
    std::vector<AssertionResult> assertions;
    bool passed = true;
    Digest log_digest;
    std::uint64_t log_lines = 0;
    std::vector<DecisionRecord> decisions;
    Digest decisions_digest;
    /// Event log lines when RunOptions::keep_log was set.
    std::vector<std::string> log;

    nlohmann::json to_json() const;
    /// "metric,value" rows under a commented replay header.
    std::string metrics_csv() const;
};

struct RunOptions
{
    std::optional<std::uint64_t> seed;
    bool keep_log = false;
    std::ostream* log_out = nullptr;
    /// Overrides the scenario's clock skew.
    std::optional<SimTime> clock_skew;
};

ScenarioReport run_scenario(const Scenario& scenario, const RunOptions& options = {});

} // namespace pchain
