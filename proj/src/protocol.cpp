#include <pchain/protocol.hpp>

#include <algorithm>

namespace pchain {

namespace {

bool same_slot(const TransactionRecord& a, const TransactionRecord& b)
{
    return a.sender == b.sender && a.sender_seq == b.sender_seq && a.tx_id != b.tx_id;
}

constexpr SimTime sync_window = 120 * seconds;

} // namespace

std::string short_ref(const Digest& tx_id)
{
    return tx_id.hex().substr(0, 12);
}

Node::Node(World& world, NodeId id, Behavior behavior, KeyPair key, const LedgerConfig& ledger_config)
    : world_(world),
      id_(id),
      behavior_(behavior),
      key_(std::move(key)),
      account_(account_id(key_.public_key)),
      select_rng_(RngStream::derive(world.seed(), "witness-select", id)),
      ledger_(ledger_config)
{
}

SimTime Node::local_now() const
{
    return world_.net().local_time(id_);
}

bool Node::deferring() const
{
    auto& net = world_.net();
    const bool flagged = (world_.scenario().connectivity_rule && net.connectivity_delay(id_)) || net.region_delay(id_);
    return flagged || world_.loop().now() < resume_at_;
}

std::vector<NodeId> Node::available_witnesses() const
{
    std::vector<NodeId> out;
    for (NodeId j = 0; j < world_.size(); ++j) {
        const auto& acct = world_.node(j).account();
        if (!registry_.is_available(acct) || registry_.is_blacklisted(acct))
            continue;
        if (j == id_ || world_.net().peer_alive(id_, j))
            out.push_back(j);
    }
    return out;
}

void Node::submit(const TransactionRecord& record, WitnessMode witnesses, bool stem)
{
    world_.observations().origin.emplace(record.tx_id, id_);
    world_.record(JsonLine()
                      .field("t", world_.loop().now())
                      .field("ev", "submit")
                      .field("node", id_)
                      .field("tx", short_ref(record.tx_id))
                      .field("stem", stem));
    if (stem) {
        auto m = std::make_shared<SubmissionMessage>();
        m->record = record;
        m->witnesses = witnesses;
        world_.relay().relay(id_, std::move(m));
    } else {
        initiate(record, witnesses);
    }
}

void Node::initiate(const TransactionRecord& record, WitnessMode witnesses)
{
    if (honest_processing() && deferring()) {
        auto m = std::make_shared<SubmissionMessage>();
        m->record = record;
        m->witnesses = witnesses;
        deferred_.emplace_back(id_, std::move(m));
        deferred_ids_.insert(record.tx_id);
        world_.record(JsonLine()
                          .field("t", world_.loop().now())
                          .field("ev", "defer_submission")
                          .field("node", id_)
                          .field("tx", short_ref(record.tx_id)));
        return;
    }

    const auto& params = world_.scenario().consensus;
    std::set<AccountId> set;
    switch (witnesses) {
    case WitnessMode::selected: {
        auto available = available_witnesses();
        if (params.witness_pool_size > 0 && available.size() > params.witness_pool_size) {
            available = select_rng_.sample(std::span<const NodeId>(available), params.witness_pool_size);
            std::sort(available.begin(), available.end());
        }
        try {
            for (auto w : select_witnesses(available, params.community_k, select_rng_))
                set.insert(world_.node(w).account());
        } catch (const ConsensusUnavailable&) {
            ++world_.observations().consensus_unavailable;
            world_.record(JsonLine()
                              .field("t", world_.loop().now())
                              .field("ev", "consensus_unavailable")
                              .field("node", id_)
                              .field("tx", short_ref(record.tx_id)));
            return;
        }
        break;
    }
    case WitnessMode::corrupt_only: {
        std::vector<NodeId> byzantine;
        for (auto c : world_.corrupt_nodes())
            if (!world_.node(c).honest_processing())
                byzantine.push_back(c);
        const auto k = std::min(world_.scenario().corrupt_witness_count, byzantine.size());
        for (auto w : select_rng_.sample(std::span<const NodeId>(byzantine), k))
            set.insert(world_.node(w).account());
        break;
    }
    case WitnessMode::all:
        for (NodeId j = 0; j < world_.size(); ++j)
            set.insert(world_.node(j).account());
        break;
    }

    auto m = std::make_shared<ProposalMessage>();
    m->record = record;
    m->witness_set = std::move(set);
    m->initiator = id_;
    world_.record(JsonLine()
                      .field("t", world_.loop().now())
                      .field("ev", "propose")
                      .field("node", id_)
                      .field("tx", short_ref(record.tx_id))
                      .field("witnesses", static_cast<std::uint64_t>(m->witness_set.size())));
    MessagePtr msg = m;
    world_.net().broadcast(id_, msg);
    world_.loop().schedule_after(0, [this, msg] { receive(id_, msg); });
}

void Node::receive(NodeId from, const MessagePtr& message)
{
    if (auto* p = dynamic_cast<const ProposalMessage*>(message.get())) {
        const auto& tx = p->record.tx_id;
        if (!honest_processing()) {
            if (!decided_.emplace(tx, "seen").second || !p->witness_set.count(account_))
                return;
            if (behavior_ == Behavior::false_reject_fabricated_evidence) {
                broadcast_report(fabricate_rejection(p->record));
            } else {
                WitnessReport r;
                r.kind = ReportKind::acceptance;
                r.tx_id = tx;
                r.proposed = p->record;
                sign_report(r, key_);
                broadcast_report(std::move(r));
            }
            return;
        }
        if (decided_.count(tx) || pending_.count(tx))
            return;
        if (deferring()) {
            if (deferred_ids_.insert(tx).second)
                deferred_.emplace_back(from, message);
            return;
        }
        deferred_ids_.erase(tx);
        process_proposal(*p);
    } else if (auto* r = dynamic_cast<const ReportMessage*>(message.get())) {
        if (!honest_processing())
            return;
        const auto& tx = r->report.tx_id;
        if (decided_.count(tx))
            audit_report(r->report);
        else if (pending_.count(tx))
            process_report(r->report);
        else
            early_reports_[tx].push_back(r->report);
    } else if (auto* s = dynamic_cast<const SyncMessage*>(message.get())) {
        if (honest_processing())
            process_sync(*s);
    } else if (auto* c = dynamic_cast<const CompensationMessage*>(message.get())) {
        if (honest_processing())
            process_compensation(c->record);
    } else if (auto* t = dynamic_cast<const ReceiptMessage*>(message.get())) {
        if (tether_receipt_valid(t->receipt) && t->receipt.bridge == account_)
            journal_.record_served(t->receipt.day_index, t->receipt);
    } else if (auto* sub = dynamic_cast<const SubmissionMessage*>(message.get())) {
        if (from == id_) {
            deferred_ids_.erase(sub->record.tx_id);
            initiate(sub->record, sub->witnesses);
        }
    }
}

WitnessReport Node::fabricate_rejection(const TransactionRecord& record) const
{
    WitnessReport r;
    r.kind = ReportKind::rejection;
    r.tx_id = record.tx_id;
    r.proposed = record;
    InvalidityEvidence ev;
    ev.kind = EvidenceKind::overdraw;
    r.evidence = ev;
    sign_report(r, key_);
    return r;
}

void Node::broadcast_report(WitnessReport report)
{
    auto m = std::make_shared<ReportMessage>();
    m->report = std::move(report);
    MessagePtr msg = m;
    world_.net().broadcast(id_, msg);
    world_.loop().schedule_after(0, [this, msg] { receive(id_, msg); });
}

void Node::process_proposal(const ProposalMessage& proposal)
{
    const auto& rec = proposal.record;
    const auto tx = rec.tx_id;
    auto& loop = world_.loop();

    Pending pe;
    pe.record = rec;
    pe.witness_set = proposal.witness_set;
    pe.seen = loop.now();
    pe.seen_local = local_now();
    pe.selected = proposal.witness_set.count(account_) != 0;
    auto settled = ledger_.validate(rec, pe.seen_local);
    if (auto* ev = std::get_if<InvalidityEvidence>(&settled)) {
        pe.settled_contrary = *ev;
    } else if (auto it = banned_.find(rec.sender); it != banned_.end()) {
        pe.settled_contrary = InvalidityEvidence{EvidenceKind::banned_sender, {}, {}, std::make_shared<const PriorOffense>(it->second)};
    }
    for (const auto& q : pending_records_) {
        if (same_slot(q, rec)) {
            pe.pending_conflict = q;
            break;
        }
    }

    const auto verdict = local_verdict(ledger_, rec, WitnessView{pending_records_, &banned_, pe.seen_local});
    world_.observations().first_seen.emplace(std::make_pair(id_, tx), pe.seen);
    pending_records_.push_back(rec);
    auto& stored = pending_.emplace(tx, std::move(pe)).first->second;

    if (auto* ev = std::get_if<InvalidityEvidence>(&verdict)) {
        WitnessReport r;
        r.kind = ReportKind::rejection;
        r.tx_id = tx;
        r.proposed = rec;
        r.evidence = *ev;
        sign_report(r, key_);
        broadcast_report(std::move(r));
        if (ev->kind == EvidenceKind::double_spend && ev->conflicting_record) {
            const auto other = *ev->conflicting_record;
            punish_sender(rec, *ev, Offense::sender_fraud);
            if (pending_.count(other.tx_id)) {
                WitnessReport back;
                back.kind = ReportKind::rejection;
                back.tx_id = other.tx_id;
                back.proposed = other;
                back.evidence = InvalidityEvidence{EvidenceKind::double_spend, rec, {}, {}};
                sign_report(back, key_);
                broadcast_report(std::move(back));
            }
        }
    } else if (stored.selected) {
        WitnessReport r;
        r.kind = ReportKind::acceptance;
        r.tx_id = tx;
        r.proposed = rec;
        if (auto* credit = ledger_.crediting_record(rec.sender))
            r.support.push_back(*credit);
        sign_report(r, key_);
        stored.own_acceptance = true;
        broadcast_report(std::move(r));
    }

    const auto& params = world_.scenario().consensus;
    loop.schedule_after(params.waiting_period, [this, tx] { try_decide(tx); });
    loop.schedule_after(world_.scenario().expiry, [this, tx] { try_decide(tx); });

    if (auto it = early_reports_.find(tx); it != early_reports_.end()) {
        auto early = std::move(it->second);
        early_reports_.erase(it);
        for (const auto& r : early)
            if (pending_.count(tx))
                process_report(r);
    }
}

void Node::process_report(const WitnessReport& report)
{
    auto& pe = pending_.at(report.tx_id);
    VerifyContext ctx;
    ctx.seen_at = pe.seen_local;
    ctx.settled_contrary = pe.settled_contrary;
    ctx.pending_conflict = pe.pending_conflict;
    auto check = verify_report(report, ledger_, ctx);
    auto verdict = check.verdict;
    const bool acceptance = report.kind == ReportKind::acceptance;
    if (acceptance && registry_.is_blacklisted(report.witness))
        verdict = ReportVerdict::falsified;

    if (check.verdict == ReportVerdict::falsified && check.penalize)
        punish_witness(report);
    if (verdict == ReportVerdict::valid && !acceptance && report.evidence &&
        report.evidence->kind == EvidenceKind::double_spend)
        punish_sender(pe.record, *report.evidence, Offense::sender_fraud);
    if (verdict == ReportVerdict::valid && acceptance && pe.witness_set.count(report.witness)) {
        pe.acceptances.push_back(report);
        if (world_.scenario().compensation_enabled)
            registry_.record_activity(report.witness, day_index(world_.loop().now(), world_.scenario().compensation));
    }
    pe.reports.push_back({report.witness, report.kind, report.tx_id, verdict});
    try_decide(report.tx_id);
}

void Node::audit_report(const WitnessReport& report)
{
    auto it = closed_.find(report.tx_id);
    if (it == closed_.end())
        return;
    const auto& pe = it->second;
    VerifyContext ctx;
    ctx.seen_at = pe.seen_local;
    ctx.settled_contrary = pe.settled_contrary;
    ctx.pending_conflict = pe.pending_conflict;
    auto check = verify_report(report, ledger_, ctx);
    if (check.verdict == ReportVerdict::falsified && check.penalize)
        punish_witness(report);
}

void Node::punish_sender(const TransactionRecord& record, const InvalidityEvidence& evidence, Offense offense)
{
    if (banned_.count(record.sender))
        return;
    Misbehaviour m;
    m.offense = offense;
    m.offender = record.sender;
    m.fraud = PriorOffense{record, evidence};
    PenaltyResult res;
    try {
        res = apply_penalty(PenaltyTargets{ledger_, statuses_, banned_}, m, world_.scenario().consensus, local_now());
    } catch (const std::logic_error&) {
        return;
    }
    world_.observations().penalties.push_back({world_.loop().now(), id_, offense, record.sender});
    world_.record(JsonLine()
                      .field("t", world_.loop().now())
                      .field("ev", "penalty")
                      .field("node", id_)
                      .field("offense", to_string(offense))
                      .field("offender", record.sender.short_hex())
                      .field("slashed", res.slashed));
}

void Node::punish_witness(const WitnessReport& report)
{
    if (registry_.is_blacklisted(report.witness))
        return;
    Misbehaviour m;
    m.offense = Offense::witness_falsification;
    m.offender = report.witness;
    m.report = report;
    try {
        apply_penalty(PenaltyTargets{ledger_, statuses_, banned_}, m, world_.scenario().consensus, local_now());
    } catch (const std::logic_error&) {
        return;
    }
    const auto forfeited = registry_.blacklist(report.witness);
    world_.observations().penalties.push_back({world_.loop().now(), id_, Offense::witness_falsification, report.witness});
    auto line = JsonLine()
                    .field("t", world_.loop().now())
                    .field("ev", "blacklist")
                    .field("node", id_)
                    .field("witness", report.witness.short_hex())
                    .field("stake", forfeited);
    if (auto n = world_.node_of(report.witness))
        line.field("witness_node", *n);
    world_.record(line);
}

void Node::try_decide(const Digest& tx)
{
    auto it = pending_.find(tx);
    if (it == pending_.end())
        return;
    auto& pe = it->second;
    const auto& params = world_.scenario().consensus;
    const auto now = world_.loop().now();
    const bool elapsed = now >= pe.seen + params.waiting_period;
    auto dedup = deduplicate(pe.reports);
    const auto outcome = tally(tx, dedup.reports, pe.witness_set, quorum(pe.witness_set.size(), params), elapsed);
    if (outcome == Outcome::rejected) {
        finalize(tx, "rejected");
    } else if (outcome == Outcome::accepted) {
        if (!deferring())
            finalize(tx, "accepted");
    } else if (now >= pe.seen + world_.scenario().expiry) {
        finalize(tx, "expired");
    }
}

void Node::finalize(const Digest& tx, std::string outcome, bool via_sync)
{
    auto handle = pending_.extract(tx);
    if (handle.empty())
        return;
    auto& pe = handle.mapped();
    const auto now = world_.loop().now();
    if (outcome == "accepted") {
        const auto check_time = via_sync ? time_never : local_now();
        if (!is_valid(ledger_.validate(pe.record, check_time))) {
            outcome = "rejected";
        } else {
            ledger_.append(pe.record, local_now());
            auto cert = std::make_shared<Certificate>();
            cert->record = pe.record;
            cert->witness_set = pe.witness_set;
            cert->acceptances = std::move(pe.acceptances);
            cert->accepted_at = now;
            certificates_.push_back(std::move(cert));
            if (pe.own_acceptance && world_.scenario().compensation_enabled)
                journal_.record(day_index(now, world_.scenario().compensation), sign_witnessed(key_, pe.record));
        }
    }
    std::erase_if(pending_records_, [&](const TransactionRecord& r) { return r.tx_id == tx; });
    pe.reports.clear();
    pe.acceptances.clear();
    closed_.insert(std::move(handle));
    early_reports_.erase(tx);
    decided_[tx] = outcome;
    world_.observations().decisions.push_back({now, id_, tx, outcome, via_sync});
    world_.record(JsonLine()
                      .field("t", now)
                      .field("ev", "decide")
                      .field("node", id_)
                      .field("tx", short_ref(tx))
                      .field("outcome", outcome)
                      .field("via_sync", via_sync));
}

void Node::on_tick()
{
    if (!honest_processing())
        return;
    auto& net = world_.net();
    const bool flagged = (world_.scenario().connectivity_rule && net.connectivity_delay(id_)) || net.region_delay(id_);
    const auto now = world_.loop().now();
    if (flagged && !flagged_) {
        flagged_ = true;
        world_.record(JsonLine().field("t", now).field("ev", "delay_start").field("node", id_));
    } else if (!flagged && flagged_) {
        flagged_ = false;
        resume_at_ = now + world_.scenario().consensus.waiting_period;
        world_.record(JsonLine().field("t", now).field("ev", "delay_end").field("node", id_));
        world_.loop().schedule(resume_at_, [this] { replay_deferred(); });
    }
}

void Node::replay_deferred()
{
    if (deferring())
        return;
    auto queued = std::move(deferred_);
    deferred_.clear();
    for (auto& [from, msg] : queued)
        receive(from, msg);
    std::vector<Digest> ids;
    for (const auto& [tx, pe] : pending_)
        ids.push_back(tx);
    for (const auto& tx : ids)
        try_decide(tx);
}

void Node::on_peer_up(NodeId peer)
{
    if (!honest_processing() || certificates_.empty())
        return;
    const auto now = world_.loop().now();
    auto m = std::make_shared<SyncMessage>();
    for (const auto& c : certificates_)
        if (c->accepted_at + sync_window >= now)
            m->certificates.push_back(c);
    if (!m->certificates.empty())
        world_.net().send(id_, peer, std::move(m));
}

void Node::process_sync(const SyncMessage& sync)
{
    const auto& params = world_.scenario().consensus;
    for (const auto& cert : sync.certificates) {
        const auto& rec = cert->record;
        const auto tx = rec.tx_id;
        if (ledger_.contains(tx))
            continue;

        std::set<AccountId> backers;
        for (const auto& a : cert->acceptances)
            if (a.kind == ReportKind::acceptance && a.tx_id == tx && cert->witness_set.count(a.witness) &&
                !registry_.is_blacklisted(a.witness) && report_signature_valid(a))
                backers.insert(a.witness);
        if (cert->witness_set.empty() || backers.size() < quorum(cert->witness_set.size(), params))
            continue;
        if (banned_.count(rec.sender))
            continue;

        if (auto ev = ledger_.extract_double_spend_evidence(rec)) {
            punish_sender(rec, *ev, Offense::post_partition_double_spend);
            if (pending_.count(tx))
                finalize(tx, "rejected", true);
            continue;
        }
        std::optional<TransactionRecord> conflict;
        for (const auto& q : pending_records_)
            if (same_slot(q, rec))
                conflict = q;
        if (conflict) {
            punish_sender(rec, InvalidityEvidence{EvidenceKind::double_spend, *conflict, {}, {}}, Offense::sender_fraud);
            WitnessReport r;
            r.kind = ReportKind::rejection;
            r.tx_id = conflict->tx_id;
            r.proposed = *conflict;
            r.evidence = InvalidityEvidence{EvidenceKind::double_spend, rec, {}, {}};
            sign_report(r, key_);
            broadcast_report(std::move(r));
            continue;
        }
        if (!is_valid(ledger_.validate(rec, time_never)))
            continue;

        if (!pending_.count(tx)) {
            Pending pe;
            pe.record = rec;
            pe.witness_set = cert->witness_set;
            pe.seen = world_.loop().now();
            pe.seen_local = local_now();
            pe.acceptances = cert->acceptances;
            pending_records_.push_back(rec);
            pending_.emplace(tx, std::move(pe));
            deferred_ids_.erase(tx);
        }
        finalize(tx, "accepted", true);
    }
}

void Node::send_tether_receipt(std::uint64_t day)
{
    auto& net = world_.net();
    if (!net.firewalled(id_))
        return;
    auto bridge = net.tether(id_);
    if (!bridge)
        return;
    auto m = std::make_shared<ReceiptMessage>();
    m->receipt = make_tether_receipt(key_, world_.node(*bridge).account(), day);
    net.send(id_, *bridge, std::move(m));
}

void Node::issue_compensation(std::uint64_t day)
{
    const auto& scenario = world_.scenario();
    if (!scenario.compensation_enabled)
        return;
    const auto& policy = scenario.compensation;
    auto& obs = world_.observations();
    std::vector<CompensationRecord> out;

    if (behavior_ == Behavior::compensation_fraud) {
        auto w = journal_.witnessed(day);
        std::vector<WitnessedRecord> attached(w.begin(), w.end());
        std::set<Digest> have;
        for (const auto& a : attached)
            have.insert(a.record.tx_id);
        for (const auto& tx : ledger_.append_order()) {
            if (distinct_transactors(attached).size() >= policy.min_transactors)
                break;
            if (have.insert(tx).second)
                attached.push_back(sign_witnessed(key_, *ledger_.find(tx)));
        }
        if (attached.empty())
            return;
        CompensationRecord c;
        c.kind = CompensationKind::witness;
        c.day_index = day;
        c.amount = policy.daily_amount;
        c.attached = std::move(attached);
        c.attached.front().record.sender_sig.bytes[0] ^= 0x01;
        sign_compensation(c, key_);
        journal_.mark_issued(day, CompensationKind::witness);
        obs.compensation_issued.push_back({id_, compensation_id(c), day, c.kind, true});
        out.push_back(std::move(c));
    } else if (honest_processing()) {
        auto witness = pchain::issue_compensation(key_, journal_, day, policy, CompensationKind::witness);
        if (auto* ne = std::get_if<NotEligible>(&witness)) {
            if (ne->reason == NotEligible::Reason::too_few_transactors) {
                ++obs.not_eligible;
                obs.max_transactors = std::max(obs.max_transactors, ne->count);
                world_.record(JsonLine()
                                  .field("t", world_.loop().now())
                                  .field("ev", "not_eligible")
                                  .field("node", id_)
                                  .field("day", day)
                                  .field("transactors", static_cast<std::uint64_t>(ne->count)));
            }
        } else {
            auto& c = std::get<CompensationRecord>(witness);
            obs.max_transactors = std::max(obs.max_transactors, distinct_transactors(c.attached).size());
            obs.compensation_issued.push_back({id_, compensation_id(c), day, c.kind, false});
            out.push_back(std::move(c));
        }
        if (world_.net().is_bridge(id_) && !journal_.served(day).empty()) {
            auto bridge = pchain::issue_compensation(key_, journal_, day, policy, CompensationKind::bridge);
            if (auto* c = std::get_if<CompensationRecord>(&bridge)) {
                obs.compensation_issued.push_back({id_, compensation_id(*c), day, c->kind, false});
                out.push_back(std::move(*c));
            }
        }
    }

    for (auto& c : out) {
        world_.record(JsonLine()
                          .field("t", world_.loop().now())
                          .field("ev", "compensation_issue")
                          .field("node", id_)
                          .field("id", short_ref(compensation_id(c)))
                          .field("day", day)
                          .field("kind", c.kind == CompensationKind::witness ? "witness" : "bridge")
                          .field("amount", c.amount));
        auto m = std::make_shared<CompensationMessage>();
        m->record = std::move(c);
        MessagePtr msg = m;
        world_.net().broadcast(id_, msg);
        world_.loop().schedule_after(0, [this, msg] { receive(id_, msg); });
    }
}

void Node::process_compensation(const CompensationRecord& record)
{
    if (!compensation_seen_.insert(compensation_id(record)).second)
        return;
    world_.loop().schedule_after(world_.scenario().consensus.waiting_period,
                                 [this, record] { decide_compensation(record); });
}

void Node::decide_compensation(const CompensationRecord& record)
{
    const auto id = compensation_id(record);
    auto check = validate_compensation(record, ledger_, registry_, world_.scenario().compensation, &paid_);
    const bool accepted = check.verdict == CompensationVerdict::accept;
    if (accepted) {
        ledger_.mint(record.witness, record.amount, id, local_now());
        paid_.insert({record.witness, record.day_index, record.kind});
    } else if (check.reason != "issuer signature invalid" && check.reason != "already compensated for this day" &&
               !registry_.is_blacklisted(record.witness)) {
        registry_.blacklist(record.witness);
        auto& s = statuses_[record.witness];
        s.node = record.witness;
        s.blacklisted = true;
        s.available_witness = false;
        s.witness_eligible = false;
        s.stake = 0;
    }
    world_.observations().compensation_decisions.push_back({id_, id, accepted, check.reason});
    world_.record(JsonLine()
                      .field("t", world_.loop().now())
                      .field("ev", "compensation_decide")
                      .field("node", id_)
                      .field("id", short_ref(id))
                      .field("accepted", accepted)
                      .field("reason", check.reason));
}

World::World(const Scenario& scenario, std::uint64_t seed, SimTime clock_skew, bool keep_log, std::ostream* log_out)
    : scenario_(scenario), seed_(seed)
{
    const auto n = scenario.behaviors.size();
    NetworkConfig cfg = scenario.network;
    cfg.nodes = n;
    cfg.log_traffic = scenario.log_level == LogLevel::full;
    if (clock_skew > 0) {
        auto skew = RngStream::derive(seed, "clock-skew");
        cfg.clock_offset.clear();
        for (std::size_t i = 0; i < n; ++i)
            cfg.clock_offset.push_back(static_cast<SimTime>(skew.uniform_int(0, static_cast<std::uint64_t>(2 * clock_skew))) -
                                       clock_skew);
    }
    log_.keep_lines(keep_log);
    log_.stream_to(log_out);
    net_ = std::make_unique<Network>(cfg, loop_, RngStream::derive(seed, "latency"), log_);
    relay_ = std::make_unique<StemRelay>(*net_, scenario.stem, RngStream::derive(seed, "stem"));

    LedgerConfig lc = scenario.ledger;
    lc.recipient_spend_delay = scenario.consensus.recipient_spend_delay;
    for (NodeId i = 0; i < n; ++i) {
        auto key = generate_keypair(RngStream::derive(seed, "node-key", i).next_u64());
        nodes_.push_back(std::make_unique<Node>(*this, i, scenario.behaviors[i], std::move(key), lc));
        node_of_.emplace(nodes_.back()->account(), i);
        (scenario.behaviors[i] == Behavior::honest ? honest_ : corrupt_).push_back(i);
    }

    relay_->on_fluff([this](NodeId fluff, const MessagePtr& payload, const StemRoute&) {
        if (auto* s = dynamic_cast<const SubmissionMessage*>(payload.get())) {
            obs_.fluff_node.emplace(s->record.tx_id, fluff);
            node(fluff).initiate(s->record, s->witnesses);
        }
    });
    net_->set_handler([this](NodeId to, NodeId from, const MessagePtr& m) {
        if (!relay_->handle(to, from, m))
            node(to).receive(from, m);
    });
    net_->on_peer_up([this](NodeId a, NodeId b) { node(a).on_peer_up(b); });
    net_->on_tick([this] {
        for (auto& nd : nodes_)
            nd->on_tick();
    });
}

std::optional<NodeId> World::node_of(const AccountId& account) const
{
    auto it = node_of_.find(account);
    if (it == node_of_.end())
        return std::nullopt;
    return it->second;
}

void World::record(const JsonLine& line, bool full_only)
{
    if (full_only && scenario_.log_level != LogLevel::full)
        return;
    log_.append(line.str());
}

void World::start()
{
    for (NodeId i = 0; i < nodes_.size(); ++i) {
        const auto offset = net_->local_time(i) - loop_.now();
        if (offset != 0)
            record(JsonLine().field("t", loop_.now()).field("ev", "clock").field("node", i).field("offset", offset));
    }
    const auto stake = scenario_.consensus.witness_stake;
    for (auto& nd : nodes_) {
        for (auto& other : nodes_)
            nd->registry().register_witness(other->account(), stake, 0);
    }
    net_->start();
}

} // namespace pchain
