#include <pchain/consensus.hpp>

#include <pchain/fluid.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pchain {

namespace {

constexpr std::string_view report_domain = "pchain.report.v1";

void write_report_body(ByteWriter& w, const WitnessReport& r)
{
    w.u8(r.kind == ReportKind::acceptance ? 0 : 1);
    w.raw(r.tx_id.bytes);
    encode(w, r.proposed);
    w.u32(static_cast<std::uint32_t>(r.support.size()));
    for (const auto& s : r.support)
        encode(w, s);
    w.u8(r.evidence ? 1 : 0);
    if (r.evidence)
        encode(w, *r.evidence);
    w.raw(r.witness.digest.bytes);
}

constexpr int max_selection_draws = 64;

bool connected(const Graph& g)
{
    const auto n = g.node_count();
    std::vector<bool> seen(n, false);
    std::vector<NodeIndex> stack{0};
    seen[0] = true;
    std::size_t count = 1;
    while (!stack.empty()) {
        auto v = stack.back();
        stack.pop_back();
        for (auto w : g.neighbors(v))
            if (!seen[w]) {
                seen[w] = true;
                ++count;
                stack.push_back(w);
            }
    }
    return count == n;
}

bool same_slot(const TransactionRecord& a, const TransactionRecord& b)
{
    return a.sender == b.sender && a.sender_seq == b.sender_seq && a.tx_id != b.tx_id;
}

} // namespace

std::string to_string(ReportKind kind)
{
    return kind == ReportKind::acceptance ? "acceptance" : "rejection";
}

std::string to_string(Outcome outcome)
{
    switch (outcome) {
    case Outcome::pending:
        return "pending";
    case Outcome::accepted:
        return "accepted";
    case Outcome::rejected:
        return "rejected";
    }
    return "?";
}

std::string to_string(Offense offense)
{
    switch (offense) {
    case Offense::sender_fraud:
        return "sender_fraud";
    case Offense::witness_falsification:
        return "witness_falsification";
    case Offense::post_partition_double_spend:
        return "post_partition_double_spend";
    }
    return "?";
}

Bytes report_bytes(const WitnessReport& report)
{
    ByteWriter w;
    w.str(report_domain);
    write_report_body(w, report);
    return std::move(w).take();
}

void encode(ByteWriter& w, const WitnessReport& report)
{
    write_report_body(w, report);
    encode(w, report.witness_sig);
}

WitnessReport decode_report(ByteReader& r)
{
    WitnessReport out;
    auto kind = r.u8();
    if (kind > 1)
        throw DecodeError("bad report kind");
    out.kind = kind == 0 ? ReportKind::acceptance : ReportKind::rejection;
    r.raw(out.tx_id.bytes);
    out.proposed = decode_record(r);
    auto n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i)
        out.support.push_back(decode_record(r));
    if (r.u8())
        out.evidence = decode_evidence(r);
    r.raw(out.witness.digest.bytes);
    out.witness_sig = decode_signature(r);
    return out;
}

void sign_report(WitnessReport& report, const KeyPair& witness)
{
    report.witness = account_id(witness.public_key);
    report.witness_sig = sign(witness.secret_key, report_bytes(report));
}

bool report_signature_valid(const WitnessReport& report)
{
    if (report.witness_sig.signer != report.witness)
        return false;
    if (report.tx_id != report.proposed.tx_id)
        return false;
    return verify_embedded(report_bytes(report), report.witness_sig);
}

void check_params(const ConsensusParams& params)
{
    if (!(params.slash_fraction >= 0.0 && params.slash_fraction <= 1.0))
        throw std::invalid_argument("slash_fraction must lie in [0,1]");
    if (params.witness_pool_size > 0 && params.min_acceptances > params.witness_pool_size)
        throw std::invalid_argument("min_acceptances exceeds witness_pool_size");
    if (params.waiting_period < 0 || params.recipient_spend_delay < 0)
        throw std::invalid_argument("negative consensus delay");
}

std::size_t quorum(std::size_t witness_set_size, const ConsensusParams& params)
{
    if (params.min_acceptances > 0)
        return params.min_acceptances;
    return (2 * witness_set_size + 2) / 3;
}

std::vector<std::size_t> select_witness_indices(std::size_t available, std::size_t k, RngStream& rng)
{
    if (available < 2)
        throw ConsensusUnavailable("witness selection needs at least two available nodes");
    if (k == 0)
        k = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(available))));
    k = std::clamp<std::size_t>(k, 1, available);

    std::vector<NodeIndex> all(available);
    std::iota(all.begin(), all.end(), NodeIndex{0});
    // Fluid communities assumes a connected graph, so redraw the localized
    // network until it is; the last draw is used if that never happens.
    Graph g(available);
    for (int attempt = 0; attempt < max_selection_draws; ++attempt) {
        std::vector<SelectionVector> selections;
        selections.reserve(available);
        for (auto owner : all)
            selections.push_back(local_selection(owner, all, rng));
        g = assemble_from_selections(available, selections);
        if (connected(g))
            break;
    }
    auto assignment = detect_communities(g, k, rng);
    auto members = largest_community(assignment);
    return {members.begin(), members.end()};
}

std::vector<NodeIndex> select_witnesses(std::span<const NodeIndex> available, std::size_t k, RngStream& rng)
{
    std::vector<NodeIndex> out;
    for (auto i : select_witness_indices(available.size(), k, rng))
        out.push_back(available[i]);
    std::sort(out.begin(), out.end());
    return out;
}

Validation local_verdict(const Ledger& ledger, const TransactionRecord& proposed, const WitnessView& view)
{
    auto v = ledger.validate(proposed, view.now);
    if (!is_valid(v))
        return v;
    for (const auto& p : view.pending)
        if (same_slot(p, proposed) && signatures_valid(p))
            return InvalidityEvidence{EvidenceKind::double_spend, p, {}, {}};
    if (view.banned) {
        auto it = view.banned->find(proposed.sender);
        if (it != view.banned->end())
            return InvalidityEvidence{EvidenceKind::banned_sender, {}, {}, std::make_shared<const PriorOffense>(it->second)};
    }
    return Valid{};
}

WitnessReport witness_validate(const KeyPair& witness,
                               const Ledger& ledger,
                               const TransactionRecord& proposed,
                               const WitnessView& view)
{
    WitnessReport report;
    report.tx_id = proposed.tx_id;
    report.proposed = proposed;
    auto v = local_verdict(ledger, proposed, view);
    if (auto* ev = std::get_if<InvalidityEvidence>(&v)) {
        report.kind = ReportKind::rejection;
        report.evidence = *ev;
    } else {
        report.kind = ReportKind::acceptance;
        if (auto* credit = ledger.crediting_record(proposed.sender))
            report.support.push_back(*credit);
    }
    sign_report(report, witness);
    return report;
}

ReportCheck verify_report(const WitnessReport& report, const Ledger& local, const VerifyContext& ctx)
{
    // Unsigned or misattributed reports cannot be pinned on anyone.
    if (!report_signature_valid(report))
        return {ReportVerdict::falsified, false};

    const auto& p = report.proposed;
    if (report.kind == ReportKind::rejection) {
        if (!report.evidence)
            return {ReportVerdict::falsified, true};
        if (evidence_proves_invalid(p, *report.evidence, local, ctx.seen_at, ctx.spend_gate_tolerance))
            return {ReportVerdict::valid, false};
        // Sequence and spend-gate claims depend on the witness's view, so
        // failing them is not proof of bad faith.
        const auto k = report.evidence->kind;
        const bool view_dependent = k == EvidenceKind::stale_sequence || k == EvidenceKind::immature_funds;
        return {ReportVerdict::falsified, !view_dependent};
    }

    if (local.contains(p.tx_id))
        return {ReportVerdict::valid, false};
    if (!signatures_valid(p))
        return {ReportVerdict::falsified, true};
    if (ctx.settled_contrary) {
        switch (ctx.settled_contrary->kind) {
        case EvidenceKind::stale_sequence:
            break;
        case EvidenceKind::immature_funds:
            if (evidence_proves_invalid(p, *ctx.settled_contrary, local, ctx.seen_at, ctx.spend_gate_tolerance))
                return {ReportVerdict::falsified, false};
            break;
        default:
            return {ReportVerdict::falsified, true};
        }
    }
    if (local.extract_double_spend_evidence(p))
        return {ReportVerdict::falsified, false};
    if (ctx.pending_conflict && same_slot(*ctx.pending_conflict, p))
        return {ReportVerdict::falsified, false};
    return {ReportVerdict::valid, false};
}

Deduplicated deduplicate(std::span<const ClassifiedReport> reports)
{
    Deduplicated out;
    std::map<std::pair<AccountId, Digest>, std::size_t> slot;
    std::set<std::pair<AccountId, Digest>> mixed;
    for (const auto& r : reports) {
        auto key = std::make_pair(r.witness, r.tx_id);
        auto it = slot.find(key);
        if (it == slot.end()) {
            slot.emplace(key, out.reports.size());
            out.reports.push_back(r);
            continue;
        }
        if (out.reports[it->second].kind != r.kind)
            mixed.insert(key);
        out.reports[it->second] = r;
    }
    for (auto& r : out.reports) {
        if (mixed.count({r.witness, r.tx_id})) {
            r.verdict = ReportVerdict::falsified;
            out.equivocators.insert(r.witness);
        }
    }
    return out;
}

Outcome tally(const Digest& tx_id,
              std::span<const ClassifiedReport> reports,
              const std::set<AccountId>& witness_set,
              std::size_t min_acceptances,
              bool waiting_elapsed)
{
    std::set<AccountId> accepting;
    for (const auto& r : reports) {
        if (r.tx_id != tx_id || r.verdict != ReportVerdict::valid)
            continue;
        if (r.kind == ReportKind::rejection)
            return Outcome::rejected;
        if (witness_set.count(r.witness))
            accepting.insert(r.witness);
    }
    if (waiting_elapsed && min_acceptances > 0 && accepting.size() >= min_acceptances)
        return Outcome::accepted;
    return Outcome::pending;
}

PenaltyResult apply_penalty(PenaltyTargets targets,
                            const Misbehaviour& m,
                            const ConsensusParams& params,
                            SimTime now)
{
    PenaltyResult result;
    if (m.offense == Offense::witness_falsification) {
        if (!m.report || m.report->witness != m.offender || !report_signature_valid(*m.report))
            throw std::logic_error("witness penalty without a report signed by the offender");
        auto& s = targets.statuses[m.offender];
        s.node = m.offender;
        s.blacklisted = true;
        s.witness_eligible = false;
        s.available_witness = false;
        result.stake_forfeited = s.stake;
        s.stake = 0;
        return result;
    }

    if (!m.fraud || m.fraud->record.sender != m.offender)
        throw std::logic_error("sender penalty without an offending record");
    if (m.offense == Offense::post_partition_double_spend && m.fraud->evidence.kind != EvidenceKind::double_spend)
        throw std::logic_error("post-partition penalty needs double-spend evidence");
    if (!evidence_proves_invalid(m.fraud->record, m.fraud->evidence, targets.ledger))
        throw std::logic_error("sender penalty evidence does not prove the offense");

    targets.banned.try_emplace(m.offender, *m.fraud);
    const double fraction = m.offense == Offense::post_partition_double_spend ? 1.0 : params.slash_fraction;
    result.slashed = targets.ledger.slash(m.offender, fraction, now);
    return result;
}

bool recipient_spend_gate(SimTime accepted_at, SimTime now, const ConsensusParams& params)
{
    return now >= accepted_at + params.recipient_spend_delay;
}

} // namespace pchain
