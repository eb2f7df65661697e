#pragma once

#include <pchain/fees.hpp>
#include <pchain/ledger.hpp>

#include <map>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

namespace pchain {

/// A transaction plus the witness's signature over its tx_id (sigW). The
/// sender and receiver signatures travel inside the record.
struct WitnessedRecord
{
    TransactionRecord record;
    Signature witness_sig;
};

WitnessedRecord sign_witnessed(const KeyPair& witness, const TransactionRecord& record);
bool witnessed_valid(const WitnessedRecord& w, const AccountId& witness);

/// Signed by a firewalled node to acknowledge a bridge that carried its
/// traffic on a given day.
struct TetherReceipt
{
    AccountId node;
    AccountId bridge;
    std::uint64_t day_index = 0;
    Signature node_sig;
};

TetherReceipt make_tether_receipt(const KeyPair& node, const AccountId& bridge, std::uint64_t day_index);
bool tether_receipt_valid(const TetherReceipt& receipt);

enum class CompensationKind { witness, bridge };

struct CompensationRecord
{
    CompensationKind kind = CompensationKind::witness;
    AccountId witness;
    std::uint64_t day_index = 0;
    std::uint64_t amount = 0;
    std::vector<WitnessedRecord> attached;
    std::vector<TetherReceipt> served;
    Signature witness_sig;
};

Bytes compensation_bytes(const CompensationRecord& record);
Digest compensation_id(const CompensationRecord& record);
void sign_compensation(CompensationRecord& record, const KeyPair& witness);
void encode(ByteWriter& w, const CompensationRecord& record);
CompensationRecord decode_compensation(ByteReader& r);

struct CompensationPolicy
{
    std::uint64_t daily_amount = 50;
    std::size_t min_transactors = 10;
    std::uint64_t bridge_daily_amount = 20;
    std::size_t min_served = 1;
    SimTime day_length = 86'400 * seconds;
};

std::uint64_t day_index(SimTime t, const CompensationPolicy& policy);

/// Distinct accounts appearing as sender or receiver.
std::set<AccountId> distinct_transactors(std::span<const WitnessedRecord> records);

/// A witness's own log of what it witnessed and served, per day.
class WitnessJournal
{
public:
    /// Duplicate tx_ids within a day are ignored.
    void record(std::uint64_t day, WitnessedRecord witnessed);
    void record_served(std::uint64_t day, TetherReceipt receipt);

    std::span<const WitnessedRecord> witnessed(std::uint64_t day) const;
    std::span<const TetherReceipt> served(std::uint64_t day) const;
    std::size_t transactor_count(std::uint64_t day) const;

    bool issued(std::uint64_t day, CompensationKind kind) const { return issued_.count({day, kind}) != 0; }
    void mark_issued(std::uint64_t day, CompensationKind kind) { issued_.insert({day, kind}); }

private:
    std::map<std::uint64_t, std::vector<WitnessedRecord>> witnessed_;
    std::map<std::uint64_t, std::vector<TetherReceipt>> served_;
    std::set<std::pair<std::uint64_t, CompensationKind>> issued_;
};

struct NotEligible
{
    enum class Reason { too_few_transactors, already_issued };
    Reason reason = Reason::too_few_transactors;
    std::size_t count = 0;
    std::size_t required = 0;
};

using Issuance = std::variant<CompensationRecord, NotEligible>;

/// Once per (witness, day, kind). Eligible iff the distinct transactors
/// witnessed that day (distinct tethered nodes for a bridge) reach the
/// policy minimum. Marks the day issued on success.
Issuance issue_compensation(const KeyPair& witness,
                            WitnessJournal& journal,
                            std::uint64_t day,
                            const CompensationPolicy& policy,
                            CompensationKind kind = CompensationKind::witness);

class WitnessRegistry
{
public:
    explicit WitnessRegistry(std::uint64_t idle_days = 7) : idle_days_(idle_days) {}

    /// False for a blacklisted node. Re-registering refreshes activity.
    bool register_witness(const AccountId& node, std::uint64_t stake, std::uint64_t day);
    /// Removes the node for good and returns its forfeited stake.
    std::uint64_t blacklist(const AccountId& node);
    void record_activity(const AccountId& node, std::uint64_t day);
    /// Drops nodes idle for at least idle_days; returns them.
    std::vector<AccountId> prune_idle(std::uint64_t day);

    bool is_available(const AccountId& node) const { return entries_.count(node) != 0; }
    bool is_blacklisted(const AccountId& node) const { return blacklisted_.count(node) != 0; }
    std::uint64_t stake(const AccountId& node) const;
    std::vector<AccountId> available() const;
    std::size_t blacklist_size() const { return blacklisted_.size(); }

private:
    struct Entry
    {
        std::uint64_t stake = 0;
        std::uint64_t registered_day = 0;
        std::uint64_t last_active_day = 0;
    };

    std::uint64_t idle_days_;
    std::map<AccountId, Entry> entries_;
    std::set<AccountId> blacklisted_;
};

enum class CompensationVerdict { accept, reject };

/// (issuer, day, kind) triples already paid out.
using PaidSet = std::set<std::tuple<AccountId, std::uint64_t, CompensationKind>>;

struct CompensationCheck
{
    CompensationVerdict verdict = CompensationVerdict::accept;
    std::string reason;
};

/// Accept iff the issuer's signature verifies, the issuer is not
/// blacklisted, the amount is the standard one, no compensation was already
/// paid for (issuer, day, kind), and the attachments hold up: for witness
/// compensation every attached record carries valid sender, receiver and
/// witness signatures, matches the local ledger, and the distinct
/// transactors reach the minimum; for bridge compensation every receipt is
/// signed by its node for this bridge and day, and distinct nodes reach the
/// minimum.
CompensationCheck validate_compensation(const CompensationRecord& record,
                                        const Ledger& ledger,
                                        const WitnessRegistry& registry,
                                        const CompensationPolicy& policy,
                                        const PaidSet* already_paid = nullptr);

} // namespace pchain
