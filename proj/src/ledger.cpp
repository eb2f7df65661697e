#include <pchain/ledger.hpp>

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

namespace pchain {

namespace {

constexpr std::string_view tx_domain = "pchain.tx.v1";

enum LogTag : std::uint8_t {
    tag_genesis = 1,
    tag_transfer = 2,
    tag_mint = 3,
    tag_slash = 4,
};

void write_account(ByteWriter& w, const AccountId& a)
{
    w.raw(a.digest.bytes);
}

AccountId read_account(ByteReader& r)
{
    AccountId a;
    r.raw(a.digest.bytes);
    return a;
}

void write_digest(ByteWriter& w, const Digest& d)
{
    w.raw(d.bytes);
}

Digest read_digest(ByteReader& r)
{
    Digest d;
    r.raw(d.bytes);
    return d;
}

std::uint64_t receiver_fee(std::uint64_t amount, const FeePolicy& fees)
{
    return fees.payer == FeePayer::receiver ? compute_fee(amount, fees) : 0;
}

std::uint64_t sender_fee(std::uint64_t amount, const FeePolicy& fees)
{
    return fees.payer == FeePayer::sender ? compute_fee(amount, fees) : 0;
}

bool is_malformed(const TransactionRecord& r)
{
    return r.amount == 0 || r.sender == r.receiver || r.sender_seq == 0;
}

} // namespace

Bytes canonical_bytes(const TransactionRecord& record)
{
    ByteWriter w;
    w.str(tx_domain);
    write_account(w, record.sender);
    write_account(w, record.receiver);
    w.u64(record.amount);
    w.u64(record.sender_seq);
    write_digest(w, record.prev_sender_hash);
    return std::move(w).take();
}

Digest compute_tx_id(const TransactionRecord& record)
{
    return hash_bytes(canonical_bytes(record));
}

void encode(ByteWriter& w, const TransactionRecord& record)
{
    write_digest(w, record.tx_id);
    w.blob(canonical_bytes(record));
    encode(w, record.sender_sig);
    encode(w, record.receiver_sig);
}

TransactionRecord decode_record(ByteReader& r)
{
    TransactionRecord rec;
    rec.tx_id = read_digest(r);
    auto body = r.blob();
    ByteReader br(body);
    if (br.str() != tx_domain)
        throw DecodeError("unknown record domain");
    rec.sender = read_account(br);
    rec.receiver = read_account(br);
    rec.amount = br.u64();
    rec.sender_seq = br.u64();
    rec.prev_sender_hash = read_digest(br);
    br.expect_done();
    rec.sender_sig = decode_signature(r);
    rec.receiver_sig = decode_signature(r);
    return rec;
}

Bytes encode_record(const TransactionRecord& record)
{
    ByteWriter w;
    encode(w, record);
    return std::move(w).take();
}

TransactionRecord decode_record(std::span<const std::uint8_t> bytes)
{
    ByteReader r(bytes);
    auto rec = decode_record(r);
    r.expect_done();
    return rec;
}

TransactionRecord make_transfer(const KeyPair& sender,
                                const KeyPair& receiver,
                                std::uint64_t amount,
                                std::uint64_t sender_seq,
                                const Digest& prev_sender_hash)
{
    TransactionRecord rec;
    rec.sender = account_id(sender.public_key);
    rec.receiver = account_id(receiver.public_key);
    rec.amount = amount;
    rec.sender_seq = sender_seq;
    rec.prev_sender_hash = prev_sender_hash;
    auto body = canonical_bytes(rec);
    rec.tx_id = hash_bytes(body);
    rec.sender_sig = sign(sender.secret_key, body);
    rec.receiver_sig = sign(receiver.secret_key, body);
    return rec;
}

bool signatures_valid(const TransactionRecord& record)
{
    auto body = canonical_bytes(record);
    if (hash_bytes(body) != record.tx_id)
        return false;
    if (record.sender_sig.signer != record.sender || record.receiver_sig.signer != record.receiver)
        return false;
    return verify_embedded(body, record.sender_sig) && verify_embedded(body, record.receiver_sig);
}

std::string to_string(EvidenceKind kind)
{
    switch (kind) {
    case EvidenceKind::double_spend: return "double_spend";
    case EvidenceKind::overdraw: return "overdraw";
    case EvidenceKind::bad_signature: return "bad_signature";
    case EvidenceKind::stale_sequence: return "stale_sequence";
    case EvidenceKind::receiver_reuse: return "receiver_reuse";
    case EvidenceKind::immature_funds: return "immature_funds";
    case EvidenceKind::banned_sender: return "banned_sender";
    case EvidenceKind::malformed: return "malformed";
    }
    return "unknown";
}

void encode(ByteWriter& w, const InvalidityEvidence& evidence)
{
    w.u8(static_cast<std::uint8_t>(evidence.kind));
    w.u8(evidence.conflicting_record ? 1 : 0);
    if (evidence.conflicting_record)
        encode(w, *evidence.conflicting_record);
    w.u32(static_cast<std::uint32_t>(evidence.ledger_excerpt.size()));
    for (const auto& r : evidence.ledger_excerpt)
        encode(w, r);
    w.u8(evidence.prior ? 1 : 0);
    if (evidence.prior) {
        encode(w, evidence.prior->record);
        encode(w, evidence.prior->evidence);
    }
}

InvalidityEvidence decode_evidence(ByteReader& r)
{
    InvalidityEvidence ev;
    auto kind = r.u8();
    if (kind > static_cast<std::uint8_t>(EvidenceKind::malformed))
        throw DecodeError("unknown evidence kind");
    ev.kind = static_cast<EvidenceKind>(kind);
    if (r.u8())
        ev.conflicting_record = decode_record(r);
    auto n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i)
        ev.ledger_excerpt.push_back(decode_record(r));
    if (r.u8()) {
        auto prior = std::make_shared<PriorOffense>();
        prior->record = decode_record(r);
        prior->evidence = decode_evidence(r);
        ev.prior = std::move(prior);
    }
    return ev;
}

Ledger::Ledger(LedgerConfig config) : config_(config) {}

AccountChain& Ledger::chain_for(const AccountId& account)
{
    auto [it, inserted] = chains_.try_emplace(account);
    if (inserted)
        it->second.account = account;
    return it->second;
}

void Ledger::add_genesis(const AccountId& account, std::uint64_t amount, SimTime at)
{
    if (chains_.count(account))
        throw std::invalid_argument("genesis account already exists: " + account.hex());
    auto& c = chain_for(account);
    c.entries.push_back({ChainEntry::Kind::genesis, amount, 0, {}, at});
    c.balance += amount;
    c.last_credit_at = at;
    spawned_.insert(account);
    genesis_total_ += amount;

    ByteWriter w;
    write_account(w, account);
    w.u64(amount);
    w.u64(static_cast<std::uint64_t>(at));
    log_.push_back({tag_genesis, std::move(w).take()});
}

std::uint64_t Ledger::required_balance(std::uint64_t amount) const
{
    return amount + sender_fee(amount, config_.fees);
}

std::vector<TransactionRecord> Ledger::balance_excerpt(const AccountId& account) const
{
    std::vector<TransactionRecord> out;
    if (auto* credit = crediting_record(account))
        out.push_back(*credit);
    if (auto* c = chain(account)) {
        for (const auto& e : c->entries) {
            if (e.kind == ChainEntry::Kind::transfer_in && (out.empty() || out.front().tx_id != e.reference))
                out.push_back(records_.at(e.reference));
            else if (e.kind == ChainEntry::Kind::transfer_out)
                out.push_back(records_.at(e.reference));
        }
    }
    return out;
}

Validation Ledger::validate(const TransactionRecord& record, SimTime now) const
{
    if (is_malformed(record))
        return InvalidityEvidence{EvidenceKind::malformed, {}, {}, {}};
    if (!signatures_valid(record))
        return InvalidityEvidence{EvidenceKind::bad_signature, {}, {}, {}};

    if (auto* existing = find_by_sender_seq(record.sender, record.sender_seq)) {
        if (existing->tx_id != record.tx_id)
            return InvalidityEvidence{EvidenceKind::double_spend, *existing, {}, {}};
        return InvalidityEvidence{EvidenceKind::stale_sequence, *existing, {}, {}};
    }

    const auto len = chain_length(record.sender);
    const auto* c = chain(record.sender);
    std::vector<TransactionRecord> last;
    if (len > 0)
        last.push_back(records_.at(c->outgoing.back()));
    if (record.sender_seq != len + 1)
        return InvalidityEvidence{EvidenceKind::stale_sequence, {}, last, {}};
    const Digest expected_prev = len > 0 ? c->outgoing.back() : Digest{};
    if (record.prev_sender_hash != expected_prev)
        return InvalidityEvidence{EvidenceKind::stale_sequence, {}, last, {}};

    if (config_.require_fresh_receiver && spawned(record.receiver)) {
        std::optional<TransactionRecord> prior;
        if (auto* credit = crediting_record(record.receiver))
            prior = *credit;
        return InvalidityEvidence{EvidenceKind::receiver_reuse, prior, {}, {}};
    }

    const auto required = required_balance(record.amount);
    if (balance(record.sender) < required)
        return InvalidityEvidence{EvidenceKind::overdraw, {}, balance_excerpt(record.sender), {}};
    if (spendable(record.sender, now) < required)
        return InvalidityEvidence{EvidenceKind::immature_funds, {}, balance_excerpt(record.sender), {}};
    return Valid{};
}

void Ledger::append(const TransactionRecord& record, SimTime accepted_at)
{
    if (contains(record.tx_id))
        return;
    auto v = validate(record, time_never);
    if (auto* ev = std::get_if<InvalidityEvidence>(&v))
        throw LedgerConsistencyError("append of invalid record " + record.tx_id.hex() + ": " + to_string(ev->kind));

    const auto fee_s = sender_fee(record.amount, config_.fees);
    const auto fee_r = receiver_fee(record.amount, config_.fees);

    auto& s = chain_for(record.sender);
    s.outgoing.push_back(record.tx_id);
    s.entries.push_back({ChainEntry::Kind::transfer_out, record.amount, fee_s, record.tx_id, accepted_at});
    s.balance -= record.amount + fee_s;

    auto& r = chain_for(record.receiver);
    r.entries.push_back({ChainEntry::Kind::transfer_in, record.amount - fee_r, fee_r, record.tx_id, accepted_at});
    r.balance += record.amount - fee_r;
    r.last_credit_at = accepted_at;
    spawned_.insert(record.receiver);
    credited_by_.try_emplace(record.receiver, record.tx_id);

    fees_collected_ += fee_s + fee_r;
    records_.emplace(record.tx_id, record);
    append_order_.push_back(record.tx_id);

    ByteWriter w;
    encode(w, record);
    w.u64(static_cast<std::uint64_t>(accepted_at));
    log_.push_back({tag_transfer, std::move(w).take()});
}

std::optional<InvalidityEvidence> Ledger::extract_double_spend_evidence(const TransactionRecord& proposed) const
{
    auto* existing = find_by_sender_seq(proposed.sender, proposed.sender_seq);
    if (!existing || existing->tx_id == proposed.tx_id)
        return std::nullopt;
    return InvalidityEvidence{EvidenceKind::double_spend, *existing, {}, {}};
}

void Ledger::mint(const AccountId& account, std::uint64_t amount, const Digest& reference, SimTime at)
{
    auto& c = chain_for(account);
    c.entries.push_back({ChainEntry::Kind::mint, amount, 0, reference, at});
    c.balance += amount;
    c.last_credit_at = at;
    spawned_.insert(account);
    minted_total_ += amount;

    ByteWriter w;
    write_account(w, account);
    w.u64(amount);
    write_digest(w, reference);
    w.u64(static_cast<std::uint64_t>(at));
    log_.push_back({tag_mint, std::move(w).take()});
}

std::uint64_t Ledger::slash(const AccountId& account, double fraction, SimTime at)
{
    auto it = chains_.find(account);
    if (it == chains_.end())
        return 0;
    fraction = std::clamp(fraction, 0.0, 1.0);
    auto& c = it->second;
    auto amount = static_cast<std::uint64_t>(std::floor(static_cast<long double>(c.balance) * fraction));
    amount = std::min(amount, c.balance);
    c.entries.push_back({ChainEntry::Kind::slash, amount, 0, {}, at});
    c.balance -= amount;
    slashed_total_ += amount;

    ByteWriter w;
    write_account(w, account);
    w.u64(amount);
    w.u64(static_cast<std::uint64_t>(at));
    log_.push_back({tag_slash, std::move(w).take()});
    return amount;
}

std::uint64_t Ledger::balance(const AccountId& account) const
{
    auto* c = chain(account);
    return c ? c->balance : 0;
}

std::uint64_t Ledger::spendable(const AccountId& account, SimTime now) const
{
    auto* c = chain(account);
    if (!c)
        return 0;
    if (config_.recipient_spend_delay <= 0 || now == time_never)
        return c->balance;
    std::uint64_t locked = 0;
    for (const auto& e : c->entries) {
        bool credit = e.kind == ChainEntry::Kind::transfer_in || e.kind == ChainEntry::Kind::mint;
        if (credit && now < e.at + config_.recipient_spend_delay)
            locked += e.amount;
    }
    return locked >= c->balance ? 0 : c->balance - locked;
}

const TransactionRecord* Ledger::find(const Digest& tx_id) const
{
    auto it = records_.find(tx_id);
    return it == records_.end() ? nullptr : &it->second;
}

const TransactionRecord* Ledger::find_by_sender_seq(const AccountId& sender, std::uint64_t seq) const
{
    auto* c = chain(sender);
    if (!c || seq == 0 || seq > c->outgoing.size())
        return nullptr;
    return find(c->outgoing[seq - 1]);
}

const AccountChain* Ledger::chain(const AccountId& account) const
{
    auto it = chains_.find(account);
    return it == chains_.end() ? nullptr : &it->second;
}

std::uint64_t Ledger::chain_length(const AccountId& sender) const
{
    auto* c = chain(sender);
    return c ? c->outgoing.size() : 0;
}

const TransactionRecord* Ledger::crediting_record(const AccountId& account) const
{
    auto it = credited_by_.find(account);
    return it == credited_by_.end() ? nullptr : find(it->second);
}

std::uint64_t Ledger::total_balances() const
{
    std::uint64_t sum = 0;
    for (const auto& [_, c] : chains_)
        sum += c.balance;
    return sum;
}

bool Ledger::conservation_holds() const
{
    return total_balances() + fees_collected_ + slashed_total_ == genesis_total_ + minted_total_;
}

void Ledger::dump(std::ostream& out) const
{
    for (const auto& line : log_) {
        Bytes b;
        b.reserve(line.body.size() + 1);
        b.push_back(line.tag);
        b.insert(b.end(), line.body.begin(), line.body.end());
        out << to_hex(b) << '\n';
    }
}

Ledger Ledger::load(std::istream& in, LedgerConfig config)
{
    Ledger ledger(config);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        auto raw = from_hex(line);
        if (raw.empty())
            throw DecodeError("empty ledger line");
        ByteReader r(std::span<const std::uint8_t>(raw).subspan(1));
        switch (raw[0]) {
        case tag_genesis: {
            auto a = read_account(r);
            auto amount = r.u64();
            auto at = static_cast<SimTime>(r.u64());
            ledger.add_genesis(a, amount, at);
            break;
        }
        case tag_transfer: {
            auto rec = decode_record(r);
            auto at = static_cast<SimTime>(r.u64());
            ledger.append(rec, at);
            break;
        }
        case tag_mint: {
            auto a = read_account(r);
            auto amount = r.u64();
            auto ref = read_digest(r);
            auto at = static_cast<SimTime>(r.u64());
            ledger.mint(a, amount, ref, at);
            break;
        }
        case tag_slash: {
            auto a = read_account(r);
            auto amount = r.u64();
            auto at = static_cast<SimTime>(r.u64());
            auto& c = ledger.chain_for(a);
            if (amount > c.balance)
                throw DecodeError("slash exceeds balance");
            c.entries.push_back({ChainEntry::Kind::slash, amount, 0, {}, at});
            c.balance -= amount;
            ledger.slashed_total_ += amount;
            ByteWriter w;
            write_account(w, a);
            w.u64(amount);
            w.u64(static_cast<std::uint64_t>(at));
            ledger.log_.push_back({tag_slash, std::move(w).take()});
            break;
        }
        default:
            throw DecodeError("unknown ledger line tag");
        }
        r.expect_done();
    }
    return ledger;
}

namespace {

bool prove_overdraw(const TransactionRecord& p, const InvalidityEvidence& ev, const Ledger& local)
{
    const auto& fees = local.config().fees;
    const auto required = local.required_balance(p.amount);

    std::map<std::uint64_t, const TransactionRecord*> debits;
    std::map<Digest, const TransactionRecord*> credits;
    for (const auto& r : ev.ledger_excerpt) {
        if (!signatures_valid(r))
            return false;
        if (r.sender == p.sender && r.sender_seq < p.sender_seq)
            debits.emplace(r.sender_seq, &r);
        if (r.receiver == p.sender)
            credits.emplace(r.tx_id, &r);
    }
    // The outgoing chain before the proposal must be complete and linked.
    if (debits.size() != p.sender_seq - 1)
        return false;
    Digest prev{};
    for (const auto& [seq, r] : debits) {
        if (r->prev_sender_hash != prev)
            return false;
        prev = r->tx_id;
    }
    if (p.prev_sender_hash != prev)
        return false;

    // Unsigned adjustments (genesis, mint, slash) are taken from the local view.
    __int128 computed = 0;
    if (auto* c = local.chain(p.sender)) {
        for (const auto& e : c->entries) {
            if (e.kind == ChainEntry::Kind::genesis || e.kind == ChainEntry::Kind::mint)
                computed += e.amount;
            else if (e.kind == ChainEntry::Kind::slash)
                computed -= e.amount;
        }
    }
    for (const auto& [_, r] : credits)
        computed += r->amount - receiver_fee(r->amount, fees);
    for (const auto& [_, r] : debits)
        computed -= r->amount + sender_fee(r->amount, fees);
    if (computed >= static_cast<__int128>(required))
        return false;

    // A verifier that already holds the same chain prefix can overrule an
    // excerpt that omits credits.
    if (local.chain_length(p.sender) == p.sender_seq - 1 && local.balance(p.sender) >= required)
        return false;
    return true;
}

} // namespace

bool evidence_proves_invalid(const TransactionRecord& p,
                             const InvalidityEvidence& ev,
                             const Ledger& local,
                             SimTime seen_at,
                             SimTime spend_gate_tolerance)
{
    switch (ev.kind) {
    case EvidenceKind::malformed:
        return is_malformed(p);
    case EvidenceKind::bad_signature:
        return !signatures_valid(p);
    case EvidenceKind::double_spend: {
        const auto& c = ev.conflicting_record;
        return c && c->sender == p.sender && c->sender_seq == p.sender_seq && c->tx_id != p.tx_id && signatures_valid(*c);
    }
    case EvidenceKind::stale_sequence: {
        auto advanced = [&](const TransactionRecord& r) {
            return r.sender == p.sender && r.sender_seq >= p.sender_seq && r.tx_id != p.tx_id && signatures_valid(r);
        };
        if (ev.conflicting_record && advanced(*ev.conflicting_record))
            return true;
        if (std::any_of(ev.ledger_excerpt.begin(), ev.ledger_excerpt.end(), advanced))
            return true;
        if (local.contains(p.tx_id))
            return false;
        auto v = local.validate(p, time_never);
        auto* local_ev = std::get_if<InvalidityEvidence>(&v);
        return local_ev && (local_ev->kind == EvidenceKind::stale_sequence || local_ev->kind == EvidenceKind::double_spend);
    }
    case EvidenceKind::receiver_reuse: {
        const auto& c = ev.conflicting_record;
        if (c && c->receiver == p.receiver && c->tx_id != p.tx_id && signatures_valid(*c))
            return true;
        if (!local.config().require_fresh_receiver || !local.spawned(p.receiver))
            return false;
        auto* credit = local.crediting_record(p.receiver);
        return !credit || credit->tx_id != p.tx_id;
    }
    case EvidenceKind::overdraw:
        return prove_overdraw(p, ev, local);
    case EvidenceKind::immature_funds: {
        if (local.contains(p.tx_id))
            return false;
        const auto required = local.required_balance(p.amount);
        const SimTime at = seen_at == time_never ? time_never : seen_at - spend_gate_tolerance;
        return local.spendable(p.sender, at) < required || local.balance(p.sender) < required;
    }
    case EvidenceKind::banned_sender: {
        const auto& prior = ev.prior;
        if (!prior || prior->record.sender != p.sender || prior->record.tx_id == p.tx_id)
            return false;
        const auto k = prior->evidence.kind;
        if (k != EvidenceKind::double_spend && k != EvidenceKind::overdraw)
            return false;
        return evidence_proves_invalid(prior->record, prior->evidence, local);
    }
    }
    return false;
}

} // namespace pchain
