#pragma once

#include <pchain/scenario.hpp>

#include <deque>
#include <map>
#include <memory>
#include <set>
#include <vector>

namespace pchain {

std::string short_ref(const Digest& tx_id);

struct ProposalMessage : Message
{
    TransactionRecord record;
    std::set<AccountId> witness_set;
    NodeId initiator = 0;

    std::string kind() const override { return "proposal"; }
    std::string ref() const override { return short_ref(record.tx_id); }
};

/// Unrelayed submission carried along a stem.
struct SubmissionMessage : Message
{
    TransactionRecord record;
    WitnessMode witnesses = WitnessMode::selected;

    std::string kind() const override { return "submission"; }
    std::string ref() const override { return short_ref(record.tx_id); }
};

struct ReportMessage : Message
{
    WitnessReport report;

    std::string kind() const override { return "report"; }
    std::string ref() const override { return short_ref(report.tx_id); }
};

/// An accepted record with the acceptances that carried it.
struct Certificate
{
    TransactionRecord record;
    std::set<AccountId> witness_set;
    std::vector<WitnessReport> acceptances;
    SimTime accepted_at = 0;
};

struct SyncMessage : Message
{
    std::vector<std::shared_ptr<const Certificate>> certificates;

    std::string kind() const override { return "sync"; }
};

struct CompensationMessage : Message
{
    CompensationRecord record;

    std::string kind() const override { return "compensation"; }
    std::string ref() const override { return short_ref(compensation_id(record)); }
};

struct ReceiptMessage : Message
{
    TetherReceipt receipt;

    std::string kind() const override { return "tether_receipt"; }
};

class World;

/// One protocol participant: validator, witness, initiator and tallier.
class Node
{
public:
    Node(World& world, NodeId id, Behavior behavior, KeyPair key, const LedgerConfig& ledger_config);

    NodeId id() const { return id_; }
    Behavior behavior() const { return behavior_; }
    const AccountId& account() const { return account_; }
    bool honest_processing() const { return processes_honestly(behavior_); }

    const Ledger& ledger() const { return ledger_; }
    Ledger& ledger() { return ledger_; }
    const BanList& banned() const { return banned_; }
    const WitnessRegistry& registry() const { return registry_; }
    WitnessRegistry& registry() { return registry_; }
    bool blacklisted(const AccountId& node) const { return registry_.is_blacklisted(node); }

    /// Submits a record at this node, through the stem when `stem` is set.
    void submit(const TransactionRecord& record, WitnessMode witnesses, bool stem);
    /// Selects witnesses and broadcasts the proposal.
    void initiate(const TransactionRecord& record, WitnessMode witnesses);

    void receive(NodeId from, const MessagePtr& message);
    void on_tick();
    void on_peer_up(NodeId peer);

    void send_tether_receipt(std::uint64_t day);
    void issue_compensation(std::uint64_t day);

    /// True while a partition defense holds back new acceptances.
    bool deferring() const;
    bool undecided(const Digest& tx_id) const { return pending_.count(tx_id) != 0 || deferred_ids_.count(tx_id) != 0; }
    bool decided(const Digest& tx_id) const { return decided_.count(tx_id) != 0; }
    std::size_t pending_count() const { return pending_.size(); }

private:
    struct Pending
    {
        TransactionRecord record;
        std::set<AccountId> witness_set;
        SimTime seen = 0;
        SimTime seen_local = 0;
        std::optional<InvalidityEvidence> settled_contrary;
        std::optional<TransactionRecord> pending_conflict;
        std::vector<ClassifiedReport> reports;
        std::vector<WitnessReport> acceptances;
        bool own_acceptance = false;
        bool selected = false;
    };

    void process_proposal(const ProposalMessage& proposal);
    void process_report(const WitnessReport& report);
    void process_sync(const SyncMessage& sync);
    /// Late report on a decided transaction: checked for falsification only.
    void audit_report(const WitnessReport& report);
    void process_compensation(const CompensationRecord& record);
    void decide_compensation(const CompensationRecord& record);

    void broadcast_report(WitnessReport report);
    WitnessReport fabricate_rejection(const TransactionRecord& record) const;
    void punish_sender(const TransactionRecord& record, const InvalidityEvidence& evidence, Offense offense);
    void punish_witness(const WitnessReport& report);
    void try_decide(const Digest& tx_id);
    void finalize(const Digest& tx_id, std::string outcome, bool via_sync = false);
    void replay_deferred();
    std::vector<NodeId> available_witnesses() const;
    SimTime local_now() const;

    World& world_;
    NodeId id_;
    Behavior behavior_;
    KeyPair key_;
    AccountId account_;
    RngStream select_rng_;

    Ledger ledger_;
    BanList banned_;
    WitnessRegistry registry_;
    WitnessJournal journal_;
    PaidSet paid_;
    std::map<AccountId, NodeStatus> statuses_;

    std::map<Digest, Pending> pending_;
    std::vector<TransactionRecord> pending_records_;
    std::map<Digest, std::vector<WitnessReport>> early_reports_;
    std::map<Digest, std::string> decided_;
    std::map<Digest, Pending> closed_;
    std::vector<std::shared_ptr<const Certificate>> certificates_;
    std::set<Digest> compensation_seen_;

    std::deque<std::pair<NodeId, MessagePtr>> deferred_;
    std::set<Digest> deferred_ids_;
    bool flagged_ = false;
    SimTime resume_at_ = 0;
};

/// Observations the scenario runner turns into metrics.
struct WorldObservations
{
    struct Decision
    {
        SimTime t = 0;
        NodeId node = 0;
        Digest tx;
        std::string outcome;
        bool via_sync = false;
    };
    struct CompensationIssue
    {
        NodeId issuer = 0;
        Digest id;
        std::uint64_t day = 0;
        CompensationKind kind = CompensationKind::witness;
        bool fraudulent = false;
    };
    struct CompensationDecision
    {
        NodeId node = 0;
        Digest id;
        bool accepted = false;
        std::string reason;
    };
    struct Penalty
    {
        SimTime t = 0;
        NodeId node = 0;
        Offense offense = Offense::sender_fraud;
        AccountId offender;
    };

    std::vector<Decision> decisions;
    std::map<std::pair<NodeId, Digest>, SimTime> first_seen;
    std::vector<CompensationIssue> compensation_issued;
    std::vector<CompensationDecision> compensation_decisions;
    std::vector<Penalty> penalties;
    std::size_t not_eligible = 0;
    std::size_t max_transactors = 0;
    std::size_t consensus_unavailable = 0;
    std::map<Digest, NodeId> origin;
    std::map<Digest, NodeId> fluff_node;
};

/// Network, nodes and shared plumbing for one scenario run.
class World
{
public:
    World(const Scenario& scenario, std::uint64_t seed, SimTime clock_skew, bool keep_log, std::ostream* log_out);
    World(const World&) = delete;
    World& operator=(const World&) = delete;

    const Scenario& scenario() const { return scenario_; }
    std::uint64_t seed() const { return seed_; }
    EventLoop& loop() { return loop_; }
    EventLog& log() { return log_; }
    Network& net() { return *net_; }
    StemRelay& relay() { return *relay_; }
    Node& node(NodeId id) { return *nodes_.at(id); }
    const Node& node(NodeId id) const { return *nodes_.at(id); }
    std::size_t size() const { return nodes_.size(); }
    const std::vector<NodeId>& corrupt_nodes() const { return corrupt_; }
    const std::vector<NodeId>& honest_nodes() const { return honest_; }
    std::optional<NodeId> node_of(const AccountId& account) const;

    /// Protocol log line; `full_only` lines are skipped at decisions level.
    void record(const JsonLine& line, bool full_only = false);

    WorldObservations& observations() { return obs_; }
    const WorldObservations& observations() const { return obs_; }

    void start();

private:
    const Scenario& scenario_;
    std::uint64_t seed_;
    EventLoop loop_;
    EventLog log_;
    std::unique_ptr<Network> net_;
    std::unique_ptr<StemRelay> relay_;
    std::vector<std::unique_ptr<Node>> nodes_;
    std::vector<NodeId> corrupt_;
    std::vector<NodeId> honest_;
    std::map<AccountId, NodeId> node_of_;
    WorldObservations obs_;
};

} // namespace pchain
