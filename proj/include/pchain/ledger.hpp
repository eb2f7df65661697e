#pragma once

#include <pchain/crypto.hpp>
#include <pchain/fees.hpp>
#include <pchain/time.hpp>

#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace pchain {

/// A dual-signed transfer. Ordering lives in the record itself: sender_seq
/// is the record's position in the sender's outgoing chain and
/// prev_sender_hash links to the tx_id of the sender's previous outgoing
/// record (all zeros for sender_seq == 1).
struct TransactionRecord
{
    Digest tx_id;
    AccountId sender;
    AccountId receiver;
    std::uint64_t amount = 0;
    std::uint64_t sender_seq = 0;
    Digest prev_sender_hash;
    Signature sender_sig;
    Signature receiver_sig;

    bool operator==(const TransactionRecord&) const = default;
};

/// Field-order-fixed encoding of every field except tx_id and the two
/// signatures. Both parties sign exactly these bytes; tx_id is their hash.
Bytes canonical_bytes(const TransactionRecord& record);
Digest compute_tx_id(const TransactionRecord& record);

/// Full encoding including tx_id and signatures.
void encode(ByteWriter& w, const TransactionRecord& record);
TransactionRecord decode_record(ByteReader& r);
Bytes encode_record(const TransactionRecord& record);
TransactionRecord decode_record(std::span<const std::uint8_t> bytes);

/// Builds a record, fills tx_id and signs it with both keys.
TransactionRecord make_transfer(const KeyPair& sender,
                                const KeyPair& receiver,
                                std::uint64_t amount,
                                std::uint64_t sender_seq,
                                const Digest& prev_sender_hash);

/// tx_id matches the canonical bytes and both signatures verify, with
/// signers equal to sender and receiver.
bool signatures_valid(const TransactionRecord& record);

enum class EvidenceKind {
    double_spend,
    overdraw,
    bad_signature,
    stale_sequence,
    receiver_reuse,
    immature_funds,
    banned_sender,
    malformed,
};

std::string to_string(EvidenceKind kind);

struct PriorOffense;

/// Self-contained proof that a proposed record is invalid.
struct InvalidityEvidence
{
    EvidenceKind kind = EvidenceKind::malformed;
    std::optional<TransactionRecord> conflicting_record;
    std::vector<TransactionRecord> ledger_excerpt;
    /// For banned_sender: the earlier offense that got the sender banned.
    std::shared_ptr<const PriorOffense> prior;
};

struct PriorOffense
{
    TransactionRecord record;
    InvalidityEvidence evidence;
};

void encode(ByteWriter& w, const InvalidityEvidence& evidence);
InvalidityEvidence decode_evidence(ByteReader& r);

struct Valid
{
};

using Validation = std::variant<Valid, InvalidityEvidence>;

inline bool is_valid(const Validation& v) { return std::holds_alternative<Valid>(v); }

/// Raised when a caller tries to append a record that does not validate.
/// This is a programming error in the caller, not a protocol event.
class LedgerConsistencyError : public std::logic_error
{
public:
    using std::logic_error::logic_error;
};

struct ChainEntry
{
    enum class Kind { genesis, transfer_in, transfer_out, mint, slash };

    Kind kind;
    /// Change in balance magnitude (credited, debited or slashed amount),
    /// excluding any fee.
    std::uint64_t amount = 0;
    std::uint64_t fee = 0;
    /// tx_id for transfers; a compensation id for mints; zero otherwise.
    Digest reference;
    SimTime at = 0;
};

struct AccountChain
{
    AccountId account;
    std::vector<ChainEntry> entries;
    /// tx_ids of outgoing records, index i holds sender_seq i + 1.
    std::vector<Digest> outgoing;
    std::uint64_t balance = 0;
    /// Local time at which the account's most recent credit was accepted.
    SimTime last_credit_at = 0;
};

struct LedgerConfig
{
    FeePolicy fees;
    /// Account spawning: a receiver must never have been credited before.
    bool require_fresh_receiver = true;
    /// Credited funds become spendable this long after acceptance.
    SimTime recipient_spend_delay = 0;
};

/// The parallel-chains store: one chain per account plus supply counters.
class Ledger
{
public:
    explicit Ledger(LedgerConfig config = {});

    const LedgerConfig& config() const { return config_; }

    /// Genesis credit, exempt from the dual-signature rule. Throws
    /// std::invalid_argument if the account already exists.
    void add_genesis(const AccountId& account, std::uint64_t amount, SimTime at = 0);

    /// Full validation as a witness would do it. `now` is the validator's
    /// local time and only matters for the recipient spend delay.
    Validation validate(const TransactionRecord& record, SimTime now = time_never) const;

    /// Appends an accepted record. Idempotent on a known tx_id. Throws
    /// LedgerConsistencyError if the record does not validate.
    void append(const TransactionRecord& record, SimTime accepted_at = 0);

    /// Stored record sharing (sender, sender_seq) with `proposed` but with a
    /// different tx_id.
    std::optional<InvalidityEvidence> extract_double_spend_evidence(const TransactionRecord& proposed) const;

    /// Credit with no matching debit.
    void mint(const AccountId& account, std::uint64_t amount, const Digest& reference, SimTime at = 0);

    /// Removes floor(balance * fraction) from the account. Returns the
    /// amount removed.
    std::uint64_t slash(const AccountId& account, double fraction, SimTime at = 0);

    std::uint64_t balance(const AccountId& account) const;
    /// Balance that may be spent at local time `now`.
    std::uint64_t spendable(const AccountId& account, SimTime now) const;
    /// Amount a sender must hold to send `amount`.
    std::uint64_t required_balance(std::uint64_t amount) const;

    bool contains(const Digest& tx_id) const { return records_.count(tx_id) != 0; }
    const TransactionRecord* find(const Digest& tx_id) const;
    const TransactionRecord* find_by_sender_seq(const AccountId& sender, std::uint64_t seq) const;
    const AccountChain* chain(const AccountId& account) const;
    std::uint64_t chain_length(const AccountId& sender) const;
    bool spawned(const AccountId& account) const { return spawned_.count(account) != 0; }
    /// Record that first credited `account`, if it was credited by a transfer.
    const TransactionRecord* crediting_record(const AccountId& account) const;

    std::size_t account_count() const { return chains_.size(); }
    std::size_t record_count() const { return records_.size(); }

    std::uint64_t genesis_total() const { return genesis_total_; }
    std::uint64_t fees_collected() const { return fees_collected_; }
    std::uint64_t minted_total() const { return minted_total_; }
    std::uint64_t slashed_total() const { return slashed_total_; }
    std::uint64_t total_balances() const;

    /// sum(balances) + fees + slashed - minted == genesis
    bool conservation_holds() const;

    /// Records in append order.
    const std::vector<Digest>& append_order() const { return append_order_; }

    /// Line-delimited dump: one hex-encoded entry per line, in the order
    /// the entries were applied.
    void dump(std::ostream& out) const;
    static Ledger load(std::istream& in, LedgerConfig config = {});

private:
    AccountChain& chain_for(const AccountId& account);
    std::vector<TransactionRecord> balance_excerpt(const AccountId& account) const;

    struct LogLine
    {
        std::uint8_t tag;
        Bytes body;
    };

    LedgerConfig config_;
    std::map<AccountId, AccountChain> chains_;
    std::set<AccountId> spawned_;
    std::map<Digest, TransactionRecord> records_;
    std::map<AccountId, Digest> credited_by_;
    std::vector<Digest> append_order_;
    std::vector<LogLine> log_;
    std::uint64_t genesis_total_ = 0;
    std::uint64_t fees_collected_ = 0;
    std::uint64_t minted_total_ = 0;
    std::uint64_t slashed_total_ = 0;
};

/// Whether `evidence` proves `proposed` invalid. Signed material in the
/// evidence is checked on its own; claims that cannot be proven by
/// signatures alone (balance, sequence gaps, spend delay) are cross-checked
/// against `local`. `seen_at` is the local time the verifier first saw the
/// proposal.
bool evidence_proves_invalid(const TransactionRecord& proposed,
                             const InvalidityEvidence& evidence,
                             const Ledger& local,
                             SimTime seen_at = time_never,
                             SimTime spend_gate_tolerance = 0);

} // namespace pchain
