#pragma once

#include <pchain/graphnet.hpp>
#include <pchain/ledger.hpp>
#include <pchain/rng.hpp>

#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

namespace pchain {

enum class ReportKind { acceptance, rejection };

std::string to_string(ReportKind kind);

/// A witness's signed verdict on a proposed record.
struct WitnessReport
{
    ReportKind kind = ReportKind::acceptance;
    Digest tx_id;
    TransactionRecord proposed;
    /// Acceptance: the records that funded the sender, as seen by the witness.
    std::vector<TransactionRecord> support;
    /// Rejection: proof that the proposal is invalid.
    std::optional<InvalidityEvidence> evidence;
    AccountId witness;
    Signature witness_sig;
};

Bytes report_bytes(const WitnessReport& report);
void encode(ByteWriter& w, const WitnessReport& report);
WitnessReport decode_report(ByteReader& r);

/// Signs the report's canonical bytes with `witness` and fills witness and
/// witness_sig.
void sign_report(WitnessReport& report, const KeyPair& witness);

/// Signature present, made by report.witness, and tx_id consistent with
/// the proposed record.
bool report_signature_valid(const WitnessReport& report);

struct ConsensusParams
{
    /// Upper bound on the available witnesses considered for selection;
    /// zero means all of them.
    std::size_t witness_pool_size = 0;
    /// Zero means ceil(2/3 of the selected set).
    std::size_t min_acceptances = 0;
    SimTime waiting_period = 2 * seconds;
    SimTime recipient_spend_delay = 5 * seconds;
    double slash_fraction = 1.0;
    /// Zero means ceil(sqrt(available)).
    std::size_t community_k = 0;
    /// Registration deposit forfeited on witness falsification.
    std::uint64_t witness_stake = 100;
};

/// Throws std::invalid_argument on a slash fraction outside [0,1] or a
/// positive min_acceptances above a positive pool size.
void check_params(const ConsensusParams& params);

/// Acceptances needed for a witness set of the given size.
std::size_t quorum(std::size_t witness_set_size, const ConsensusParams& params);

struct NodeStatus
{
    AccountId node;
    bool witness_eligible = true;
    bool blacklisted = false;
    bool available_witness = false;
    std::uint64_t stake = 0;
};

/// Senders refused for a proven offense, with the proof.
using BanList = std::map<AccountId, PriorOffense>;

class ConsensusUnavailable : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Builds the localized random network from one selection vector per
/// available node, runs fluid communities with k and returns the largest
/// community as indices into `available`, sorted. Throws
/// ConsensusUnavailable with fewer than two available nodes.
std::vector<std::size_t> select_witness_indices(std::size_t available, std::size_t k, RngStream& rng);

/// Same over node ids; the result is sorted.
std::vector<NodeIndex> select_witnesses(std::span<const NodeIndex> available, std::size_t k, RngStream& rng);

/// What a witness knows besides its ledger.
struct WitnessView
{
    /// Proposals already seen and not yet settled, in arrival order.
    std::span<const TransactionRecord> pending;
    const BanList* banned = nullptr;
    SimTime now = time_never;
};

/// Local verdict on a proposal: ledger validation, then a conflict with an
/// earlier pending proposal, then the ban list.
Validation local_verdict(const Ledger& ledger, const TransactionRecord& proposed, const WitnessView& view);

/// Wraps local_verdict into a signed acceptance or rejection.
WitnessReport witness_validate(const KeyPair& witness,
                               const Ledger& ledger,
                               const TransactionRecord& proposed,
                               const WitnessView& view = {});

enum class ReportVerdict { valid, falsified };

struct ReportCheck
{
    ReportVerdict verdict = ReportVerdict::valid;
    /// The falsification is provable against state the verifier held
    /// before it first saw the proposal, so the witness is penalized.
    bool penalize = false;
};

struct VerifyContext
{
    /// Verifier's local time when it first saw the proposal.
    SimTime seen_at = time_never;
    /// Slack allowed on the recipient spend gate between nodes.
    SimTime spend_gate_tolerance = 0;
    /// Verdict the verifier reached against its settled ledger when it
    /// first saw the proposal.
    std::optional<InvalidityEvidence> settled_contrary;
    /// An earlier conflicting proposal the verifier is holding.
    std::optional<TransactionRecord> pending_conflict;
};

/// Checks the witness signature, then the content. A rejection is valid iff
/// its evidence proves the proposal invalid. An acceptance is falsified iff
/// the verifier holds contrary evidence.
ReportCheck verify_report(const WitnessReport& report, const Ledger& local, const VerifyContext& context = {});

struct ClassifiedReport
{
    AccountId witness;
    ReportKind kind = ReportKind::acceptance;
    Digest tx_id;
    ReportVerdict verdict = ReportVerdict::valid;
};

struct Deduplicated
{
    std::vector<ClassifiedReport> reports;
    /// Witnesses that sent both kinds for one transaction.
    std::set<AccountId> equivocators;
};

/// Last report per (witness, tx) wins; a witness that sent both kinds for
/// one transaction keeps its last report, marked falsified.
Deduplicated deduplicate(std::span<const ClassifiedReport> reports);

enum class Outcome { pending, accepted, rejected };

std::string to_string(Outcome outcome);

/// Rejected iff some valid rejection exists. Accepted iff the waiting
/// period has elapsed, no valid rejection exists and valid acceptances from
/// members of `witness_set` reach `min_acceptances`. Otherwise pending.
Outcome tally(const Digest& tx_id,
              std::span<const ClassifiedReport> reports,
              const std::set<AccountId>& witness_set,
              std::size_t min_acceptances,
              bool waiting_elapsed);

enum class Offense { sender_fraud, witness_falsification, post_partition_double_spend };

std::string to_string(Offense offense);

struct Misbehaviour
{
    Offense offense = Offense::sender_fraud;
    AccountId offender;
    /// Sender offenses: the offending record and the evidence against it.
    std::optional<PriorOffense> fraud;
    /// Witness falsification: the report judged falsified.
    std::optional<WitnessReport> report;
};

struct PenaltyTargets
{
    Ledger& ledger;
    std::map<AccountId, NodeStatus>& statuses;
    BanList& banned;
};

struct PenaltyResult
{
    std::uint64_t slashed = 0;
    std::uint64_t stake_forfeited = 0;
};

/// Applies the penalty for a proven offense. Throws std::logic_error when
/// the proof does not hold up: sender offenses need evidence that proves
/// the record invalid (a double spend for post-partition), witness
/// falsification needs a report genuinely signed by the offender.
PenaltyResult apply_penalty(PenaltyTargets targets,
                            const Misbehaviour& misbehaviour,
                            const ConsensusParams& params,
                            SimTime now = 0);

/// Inclusive: spendable once now >= accepted_at + recipient_spend_delay.
bool recipient_spend_gate(SimTime accepted_at, SimTime now, const ConsensusParams& params);

} // namespace pchain
