#include <pchain/incentives.hpp>

#include <algorithm>

namespace pchain {

namespace {

constexpr std::string_view witnessed_domain = "pchain.witnessed.v1";
constexpr std::string_view tether_domain = "pchain.tether.v1";
constexpr std::string_view compensation_domain = "pchain.compensation.v1";

Bytes witnessed_bytes(const Digest& tx_id)
{
    ByteWriter w;
    w.str(witnessed_domain);
    w.raw(tx_id.bytes);
    return std::move(w).take();
}

Bytes tether_bytes(const AccountId& node, const AccountId& bridge, std::uint64_t day)
{
    ByteWriter w;
    w.str(tether_domain);
    w.raw(node.digest.bytes);
    w.raw(bridge.digest.bytes);
    w.u64(day);
    return std::move(w).take();
}

void write_body(ByteWriter& w, const CompensationRecord& c)
{
    w.u8(c.kind == CompensationKind::witness ? 0 : 1);
    w.raw(c.witness.digest.bytes);
    w.u64(c.day_index);
    w.u64(c.amount);
    w.u32(static_cast<std::uint32_t>(c.attached.size()));
    for (const auto& a : c.attached) {
        encode(w, a.record);
        encode(w, a.witness_sig);
    }
    w.u32(static_cast<std::uint32_t>(c.served.size()));
    for (const auto& s : c.served) {
        w.raw(s.node.digest.bytes);
        w.raw(s.bridge.digest.bytes);
        w.u64(s.day_index);
        encode(w, s.node_sig);
    }
}

CompensationCheck reject(std::string reason)
{
    return {CompensationVerdict::reject, std::move(reason)};
}

} // namespace

WitnessedRecord sign_witnessed(const KeyPair& witness, const TransactionRecord& record)
{
    return {record, sign(witness.secret_key, witnessed_bytes(record.tx_id))};
}

bool witnessed_valid(const WitnessedRecord& w, const AccountId& witness)
{
    return w.witness_sig.signer == witness && verify_embedded(witnessed_bytes(w.record.tx_id), w.witness_sig) &&
           signatures_valid(w.record);
}

TetherReceipt make_tether_receipt(const KeyPair& node, const AccountId& bridge, std::uint64_t day_index)
{
    TetherReceipt r;
    r.node = account_id(node.public_key);
    r.bridge = bridge;
    r.day_index = day_index;
    r.node_sig = sign(node.secret_key, tether_bytes(r.node, bridge, day_index));
    return r;
}

bool tether_receipt_valid(const TetherReceipt& r)
{
    return r.node_sig.signer == r.node && verify_embedded(tether_bytes(r.node, r.bridge, r.day_index), r.node_sig);
}

Bytes compensation_bytes(const CompensationRecord& record)
{
    ByteWriter w;
    w.str(compensation_domain);
    write_body(w, record);
    return std::move(w).take();
}

Digest compensation_id(const CompensationRecord& record)
{
    return hash_bytes(compensation_bytes(record));
}

void sign_compensation(CompensationRecord& record, const KeyPair& witness)
{
    record.witness = account_id(witness.public_key);
    record.witness_sig = sign(witness.secret_key, compensation_bytes(record));
}

void encode(ByteWriter& w, const CompensationRecord& record)
{
    write_body(w, record);
    encode(w, record.witness_sig);
}

CompensationRecord decode_compensation(ByteReader& r)
{
    CompensationRecord c;
    auto kind = r.u8();
    if (kind > 1)
        throw DecodeError("bad compensation kind");
    c.kind = kind == 0 ? CompensationKind::witness : CompensationKind::bridge;
    r.raw(c.witness.digest.bytes);
    c.day_index = r.u64();
    c.amount = r.u64();
    auto n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        WitnessedRecord a;
        a.record = decode_record(r);
        a.witness_sig = decode_signature(r);
        c.attached.push_back(std::move(a));
    }
    auto m = r.u32();
    for (std::uint32_t i = 0; i < m; ++i) {
        TetherReceipt s;
        r.raw(s.node.digest.bytes);
        r.raw(s.bridge.digest.bytes);
        s.day_index = r.u64();
        s.node_sig = decode_signature(r);
        c.served.push_back(std::move(s));
    }
    c.witness_sig = decode_signature(r);
    return c;
}

std::uint64_t day_index(SimTime t, const CompensationPolicy& policy)
{
    if (policy.day_length <= 0)
        throw std::invalid_argument("day_length must be positive");
    return t <= 0 ? 0 : static_cast<std::uint64_t>(t / policy.day_length);
}

std::set<AccountId> distinct_transactors(std::span<const WitnessedRecord> records)
{
    std::set<AccountId> out;
    for (const auto& w : records) {
        out.insert(w.record.sender);
        out.insert(w.record.receiver);
    }
    return out;
}

void WitnessJournal::record(std::uint64_t day, WitnessedRecord witnessed)
{
    auto& list = witnessed_[day];
    for (const auto& w : list)
        if (w.record.tx_id == witnessed.record.tx_id)
            return;
    list.push_back(std::move(witnessed));
}

void WitnessJournal::record_served(std::uint64_t day, TetherReceipt receipt)
{
    auto& list = served_[day];
    for (const auto& r : list)
        if (r.node == receipt.node)
            return;
    list.push_back(std::move(receipt));
}

std::span<const WitnessedRecord> WitnessJournal::witnessed(std::uint64_t day) const
{
    auto it = witnessed_.find(day);
    if (it == witnessed_.end())
        return {};
    return it->second;
}

std::span<const TetherReceipt> WitnessJournal::served(std::uint64_t day) const
{
    auto it = served_.find(day);
    if (it == served_.end())
        return {};
    return it->second;
}

std::size_t WitnessJournal::transactor_count(std::uint64_t day) const
{
    return distinct_transactors(witnessed(day)).size();
}

Issuance issue_compensation(const KeyPair& witness,
                            WitnessJournal& journal,
                            std::uint64_t day,
                            const CompensationPolicy& policy,
                            CompensationKind kind)
{
    if (journal.issued(day, kind))
        return NotEligible{NotEligible::Reason::already_issued, 0, 0};

    CompensationRecord c;
    c.kind = kind;
    c.day_index = day;
    if (kind == CompensationKind::witness) {
        const auto count = journal.transactor_count(day);
        if (count < policy.min_transactors)
            return NotEligible{NotEligible::Reason::too_few_transactors, count, policy.min_transactors};
        c.amount = policy.daily_amount;
        auto w = journal.witnessed(day);
        c.attached.assign(w.begin(), w.end());
    } else {
        auto s = journal.served(day);
        if (s.size() < policy.min_served)
            return NotEligible{NotEligible::Reason::too_few_transactors, s.size(), policy.min_served};
        c.amount = policy.bridge_daily_amount;
        c.served.assign(s.begin(), s.end());
    }
    sign_compensation(c, witness);
    journal.mark_issued(day, kind);
    return c;
}

bool WitnessRegistry::register_witness(const AccountId& node, std::uint64_t stake, std::uint64_t day)
{
    if (is_blacklisted(node))
        return false;
    auto& e = entries_[node];
    if (e.stake == 0) {
        e.stake = stake;
        e.registered_day = day;
    }
    e.last_active_day = std::max(e.last_active_day, day);
    return true;
}

std::uint64_t WitnessRegistry::blacklist(const AccountId& node)
{
    blacklisted_.insert(node);
    auto it = entries_.find(node);
    if (it == entries_.end())
        return 0;
    auto stake = it->second.stake;
    entries_.erase(it);
    return stake;
}

void WitnessRegistry::record_activity(const AccountId& node, std::uint64_t day)
{
    auto it = entries_.find(node);
    if (it != entries_.end())
        it->second.last_active_day = std::max(it->second.last_active_day, day);
}

std::vector<AccountId> WitnessRegistry::prune_idle(std::uint64_t day)
{
    std::vector<AccountId> removed;
    for (auto it = entries_.begin(); it != entries_.end();) {
        if (day >= it->second.last_active_day + idle_days_) {
            removed.push_back(it->first);
            it = entries_.erase(it);
        } else {
            ++it;
        }
    }
    return removed;
}

std::uint64_t WitnessRegistry::stake(const AccountId& node) const
{
    auto it = entries_.find(node);
    return it == entries_.end() ? 0 : it->second.stake;
}

std::vector<AccountId> WitnessRegistry::available() const
{
    std::vector<AccountId> out;
    out.reserve(entries_.size());
    for (const auto& [id, e] : entries_)
        out.push_back(id);
    return out;
}

CompensationCheck validate_compensation(const CompensationRecord& c,
                                        const Ledger& ledger,
                                        const WitnessRegistry& registry,
                                        const CompensationPolicy& policy,
                                        const PaidSet* already_paid)
{
    if (c.witness_sig.signer != c.witness || !verify_embedded(compensation_bytes(c), c.witness_sig))
        return reject("issuer signature invalid");
    if (registry.is_blacklisted(c.witness))
        return reject("issuer blacklisted");
    if (already_paid && already_paid->count({c.witness, c.day_index, c.kind}))
        return reject("already compensated for this day");

    if (c.kind == CompensationKind::bridge) {
        if (c.amount != policy.bridge_daily_amount)
            return reject("amount differs from the standard bridge amount");
        std::set<AccountId> nodes;
        for (const auto& s : c.served) {
            if (s.bridge != c.witness || s.day_index != c.day_index || !tether_receipt_valid(s))
                return reject("invalid tether receipt");
            nodes.insert(s.node);
        }
        if (nodes.size() < policy.min_served)
            return reject("too few tethered nodes served");
        return {};
    }

    if (c.amount != policy.daily_amount)
        return reject("amount differs from the standard daily amount");
    std::set<Digest> ids;
    for (const auto& a : c.attached) {
        if (!ids.insert(a.record.tx_id).second)
            return reject("duplicate attached record");
        if (!witnessed_valid(a, c.witness))
            return reject("attached record signatures invalid");
        const auto* stored = ledger.find(a.record.tx_id);
        if (!stored || !(*stored == a.record))
            return reject("attached record not in ledger");
    }
    if (distinct_transactors(c.attached).size() < policy.min_transactors)
        return reject("too few distinct transactors");
    return {};
}

} // namespace pchain
