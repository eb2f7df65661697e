#include <doctest.h>

#include <pchain/consensus.hpp>

#include <set>

using namespace pchain;

namespace {

struct World
{
    KeyPair alice = generate_keypair(1);
    KeyPair bob = generate_keypair(2);
    KeyPair carol = generate_keypair(3);
    KeyPair w1 = generate_keypair(101);
    KeyPair w2 = generate_keypair(102);
    Ledger ledger;

    World() { ledger.add_genesis(id(alice), 1000); }

    static AccountId id(const KeyPair& k) { return account_id(k.public_key); }

    TransactionRecord pay(const KeyPair& to, std::uint64_t amount, std::uint64_t seq = 1, Digest prev = {}) const
    {
        return make_transfer(alice, to, amount, seq, prev);
    }
};

ClassifiedReport classified(const AccountId& w, ReportKind kind, const Digest& tx, ReportVerdict v = ReportVerdict::valid)
{
    return {w, kind, tx, v};
}

} // namespace

TEST_CASE("reports are signed, verifiable and round-trip")
{
    World w;
    auto tx = w.pay(w.bob, 100);
    auto report = witness_validate(w.w1, w.ledger, tx);
    CHECK(report.kind == ReportKind::acceptance);
    CHECK(report.witness == World::id(w.w1));
    CHECK(report_signature_valid(report));

    ByteWriter out;
    encode(out, report);
    ByteReader in(out.bytes());
    auto back = decode_report(in);
    in.expect_done();
    CHECK(report_bytes(back) == report_bytes(report));
    CHECK(report_signature_valid(back));

    auto tampered = report;
    tampered.kind = ReportKind::rejection;
    CHECK_FALSE(report_signature_valid(tampered));
    auto reattributed = report;
    reattributed.witness = World::id(w.w2);
    CHECK_FALSE(report_signature_valid(reattributed));
    auto mismatched = report;
    mismatched.tx_id = w.pay(w.carol, 100).tx_id;
    CHECK_FALSE(report_signature_valid(mismatched));
}

TEST_CASE("witness_validate")
{
    World w;
    auto first = w.pay(w.bob, 100);
    w.ledger.append(first);

    SUBCASE("double spend against the ledger carries the prior record")
    {
        auto second = w.pay(w.carol, 100);
        auto r = witness_validate(w.w1, w.ledger, second);
        REQUIRE(r.kind == ReportKind::rejection);
        REQUIRE(r.evidence);
        CHECK(r.evidence->kind == EvidenceKind::double_spend);
        CHECK(r.evidence->conflicting_record->tx_id == first.tx_id);
    }

    SUBCASE("conflict with an earlier pending proposal")
    {
        auto a = w.pay(w.carol, 50, 2, first.tx_id);
        auto b = w.pay(generate_keypair(4), 60, 2, first.tx_id);
        std::vector<TransactionRecord> pending{a};
        WitnessView view;
        view.pending = pending;
        auto r = witness_validate(w.w1, w.ledger, b, view);
        REQUIRE(r.kind == ReportKind::rejection);
        CHECK(r.evidence->kind == EvidenceKind::double_spend);
        CHECK(r.evidence->conflicting_record->tx_id == a.tx_id);
        // The pending record itself is not in conflict with itself.
        CHECK(witness_validate(w.w1, w.ledger, a, view).kind == ReportKind::acceptance);
    }

    SUBCASE("banned sender")
    {
        BanList banned;
        auto second = w.pay(w.carol, 100);
        banned.emplace(World::id(w.alice), PriorOffense{second, *w.ledger.extract_double_spend_evidence(second)});
        WitnessView view;
        view.banned = &banned;
        auto next = w.pay(generate_keypair(5), 10, 2, first.tx_id);
        auto r = witness_validate(w.w1, w.ledger, next, view);
        REQUIRE(r.kind == ReportKind::rejection);
        CHECK(r.evidence->kind == EvidenceKind::banned_sender);
        CHECK(evidence_proves_invalid(next, *r.evidence, Ledger{}));
    }
}

TEST_CASE("verify_report")
{
    World w;
    auto first = w.pay(w.bob, 100);
    w.ledger.append(first);
    auto second = w.pay(w.carol, 100);

    SUBCASE("rejection with two dual-signed conflicting records is valid anywhere")
    {
        auto r = witness_validate(w.w1, w.ledger, second);
        Ledger empty;
        empty.add_genesis(World::id(w.alice), 1000);
        CHECK(verify_report(r, empty).verdict == ReportVerdict::valid);
    }

    SUBCASE("rejection with a fabricated conflicting record is falsified and penalized")
    {
        auto fake = first;
        fake.receiver = World::id(w.carol);
        fake.tx_id = compute_tx_id(fake);
        WitnessReport r;
        r.kind = ReportKind::rejection;
        r.tx_id = first.tx_id;
        r.proposed = first;
        r.evidence = InvalidityEvidence{EvidenceKind::double_spend, fake, {}, {}};
        sign_report(r, w.w2);
        auto check = verify_report(r, w.ledger);
        CHECK(check.verdict == ReportVerdict::falsified);
        CHECK(check.penalize);
    }

    SUBCASE("rejection without evidence is falsified")
    {
        WitnessReport r;
        r.kind = ReportKind::rejection;
        r.tx_id = first.tx_id;
        r.proposed = first;
        sign_report(r, w.w2);
        CHECK(verify_report(r, w.ledger).verdict == ReportVerdict::falsified);
    }

    SUBCASE("acceptance of a tx the verifier knows to conflict")
    {
        WitnessReport r;
        r.kind = ReportKind::acceptance;
        r.tx_id = second.tx_id;
        r.proposed = second;
        sign_report(r, w.w2);

        VerifyContext ctx;
        auto v = w.ledger.validate(second);
        ctx.settled_contrary = std::get<InvalidityEvidence>(v);
        auto check = verify_report(r, w.ledger, ctx);
        CHECK(check.verdict == ReportVerdict::falsified);
        CHECK(check.penalize);

        // Learned only after first seeing the proposal: excluded, not penalized.
        auto late = verify_report(r, w.ledger);
        CHECK(late.verdict == ReportVerdict::falsified);
        CHECK_FALSE(late.penalize);

        Ledger unaware;
        unaware.add_genesis(World::id(w.alice), 1000);
        CHECK(verify_report(r, unaware).verdict == ReportVerdict::valid);
        VerifyContext pending;
        pending.pending_conflict = first;
        auto p = verify_report(r, unaware, pending);
        CHECK(p.verdict == ReportVerdict::falsified);
        CHECK_FALSE(p.penalize);
    }

    SUBCASE("acceptance of a tx already in the ledger is valid")
    {
        Ledger before;
        before.add_genesis(World::id(w.alice), 1000);
        auto r = witness_validate(w.w1, before, first);
        CHECK(verify_report(r, w.ledger).verdict == ReportVerdict::valid);
    }

    SUBCASE("unsigned report is discarded without penalty")
    {
        auto r = witness_validate(w.w1, w.ledger, second);
        r.witness_sig.bytes[0] ^= 1;
        auto check = verify_report(r, w.ledger);
        CHECK(check.verdict == ReportVerdict::falsified);
        CHECK_FALSE(check.penalize);
    }
}

TEST_CASE("tally")
{
    Digest tx;
    tx.bytes[0] = 7;
    std::vector<AccountId> ws;
    std::set<AccountId> set;
    for (int i = 0; i < 6; ++i) {
        AccountId a;
        a.digest.bytes[0] = static_cast<std::uint8_t>(i + 1);
        ws.push_back(a);
        set.insert(a);
    }
    auto acc = [&](int i) { return classified(ws[i], ReportKind::acceptance, tx); };
    auto rej = [&](int i, ReportVerdict v = ReportVerdict::valid) { return classified(ws[i], ReportKind::rejection, tx, v); };

    std::vector<ClassifiedReport> three{acc(0), acc(1), acc(2)};
    CHECK(tally(tx, three, set, 3, true) == Outcome::accepted);
    CHECK(tally(tx, three, set, 3, false) == Outcome::pending);

    std::vector<ClassifiedReport> vetoed{acc(0), acc(1), acc(2), acc(3), acc(4), rej(5)};
    CHECK(tally(tx, vetoed, set, 3, true) == Outcome::rejected);
    CHECK(tally(tx, vetoed, set, 3, false) == Outcome::rejected);

    std::vector<ClassifiedReport> two{acc(0), acc(1)};
    CHECK(tally(tx, two, set, 3, true) == Outcome::pending);

    std::vector<ClassifiedReport> with_false_rejection{acc(0), acc(1), acc(2), rej(3, ReportVerdict::falsified)};
    CHECK(tally(tx, with_false_rejection, set, 3, true) == Outcome::accepted);

    // Acceptances from outside the selected set do not count; rejections do.
    AccountId outsider;
    outsider.digest.bytes[0] = 99;
    std::vector<ClassifiedReport> outside{acc(0), acc(1), classified(outsider, ReportKind::acceptance, tx)};
    CHECK(tally(tx, outside, set, 3, true) == Outcome::pending);
    outside.push_back(classified(outsider, ReportKind::rejection, tx));
    CHECK(tally(tx, outside, set, 2, true) == Outcome::rejected);

    // Reports about another transaction are ignored.
    Digest other;
    other.bytes[0] = 8;
    std::vector<ClassifiedReport> elsewhere{acc(0), acc(1), acc(2), classified(ws[3], ReportKind::rejection, other)};
    CHECK(tally(tx, elsewhere, set, 3, true) == Outcome::accepted);
}

TEST_CASE("adding a valid rejection never yields acceptance")
{
    RngStream rng(17);
    Digest tx;
    std::set<AccountId> set;
    std::vector<AccountId> ws;
    for (int i = 0; i < 8; ++i) {
        AccountId a;
        a.digest.bytes[1] = static_cast<std::uint8_t>(i);
        ws.push_back(a);
        if (i < 6)
            set.insert(a);
    }
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<ClassifiedReport> reports;
        const auto n = rng.uniform_int(0, 10);
        for (std::size_t i = 0; i < n; ++i) {
            auto kind = rng.bernoulli(0.7) ? ReportKind::acceptance : ReportKind::rejection;
            auto v = rng.bernoulli(0.8) ? ReportVerdict::valid : ReportVerdict::falsified;
            reports.push_back(classified(ws[rng.uniform_int(0, 7)], kind, tx, v));
        }
        const auto q = rng.uniform_int(1, 6);
        const bool waited = rng.bernoulli(0.5);
        reports.push_back(classified(ws[rng.uniform_int(0, 7)], ReportKind::rejection, tx));
        CHECK(tally(tx, reports, set, q, waited) == Outcome::rejected);
    }
}

TEST_CASE("deduplicate")
{
    Digest tx;
    AccountId a, b;
    a.digest.bytes[0] = 1;
    b.digest.bytes[0] = 2;
    std::vector<ClassifiedReport> reports{
        classified(a, ReportKind::acceptance, tx),
        classified(a, ReportKind::acceptance, tx),
        classified(b, ReportKind::acceptance, tx),
        classified(b, ReportKind::rejection, tx),
    };
    auto d = deduplicate(reports);
    REQUIRE(d.reports.size() == 2);
    CHECK(d.reports[0].witness == a);
    CHECK(d.reports[0].verdict == ReportVerdict::valid);
    CHECK(d.reports[1].kind == ReportKind::rejection);
    CHECK(d.reports[1].verdict == ReportVerdict::falsified);
    CHECK(d.equivocators == std::set<AccountId>{b});
}

TEST_CASE("witness selection")
{
    SUBCASE("two available nodes with k = 1 are both selected")
    {
        RngStream rng(1);
        std::vector<NodeIndex> avail{4, 9};
        CHECK(select_witnesses(avail, 1, rng) == std::vector<NodeIndex>{4, 9});
    }

    SUBCASE("fewer than two available")
    {
        RngStream rng(1);
        std::vector<NodeIndex> one{3};
        CHECK_THROWS_AS(select_witnesses(one, 1, rng), ConsensusUnavailable);
        CHECK_THROWS_AS(select_witnesses({}, 1, rng), ConsensusUnavailable);
    }

    SUBCASE("advancing streams give differing sets")
    {
        RngStream rng(2024);
        std::vector<NodeIndex> avail(50);
        for (NodeIndex i = 0; i < 50; ++i)
            avail[i] = 100 + i;
        std::set<std::vector<NodeIndex>> seen;
        for (int draw = 0; draw < 100; ++draw) {
            auto s = select_witnesses(avail, 0, rng);
            REQUIRE_FALSE(s.empty());
            CHECK(std::is_sorted(s.begin(), s.end()));
            for (auto v : s)
                CHECK((v >= 100 && v < 150));
            seen.insert(s);
        }
        CHECK(100 - seen.size() < 5);
    }

    SUBCASE("same stream state, same set")
    {
        RngStream a(5), b(5);
        std::vector<NodeIndex> avail{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
        CHECK(select_witnesses(avail, 3, a) == select_witnesses(avail, 3, b));
    }
}

TEST_CASE("penalties")
{
    World w;
    auto first = w.pay(w.bob, 100);
    w.ledger.append(first);
    auto second = w.pay(w.carol, 100);
    auto proof = PriorOffense{second, *w.ledger.extract_double_spend_evidence(second)};
    std::map<AccountId, NodeStatus> statuses;
    BanList banned;
    ConsensusParams params;

    SUBCASE("sender fraud with a full slash")
    {
        // 1000 - 100 - fee 0 (cap 5, 0.1% of 100 floors to 0)
        CHECK(w.ledger.balance(World::id(w.alice)) == 900);
        auto r = apply_penalty({w.ledger, statuses, banned}, {Offense::sender_fraud, World::id(w.alice), proof, {}}, params);
        CHECK(r.slashed == 900);
        CHECK(w.ledger.balance(World::id(w.alice)) == 0);
        CHECK(banned.count(World::id(w.alice)));
        CHECK(w.ledger.conservation_holds());
    }

    SUBCASE("slash fraction one half")
    {
        Ledger l;
        l.add_genesis(World::id(w.alice), 100);
        auto a = w.pay(w.bob, 10);
        auto b = w.pay(w.carol, 10);
        PriorOffense p{b, InvalidityEvidence{EvidenceKind::double_spend, a, {}, {}}};
        params.slash_fraction = 0.5;
        auto r = apply_penalty({l, statuses, banned}, {Offense::sender_fraud, World::id(w.alice), p, {}}, params);
        CHECK(r.slashed == 50);
        CHECK(l.balance(World::id(w.alice)) == 50);
    }

    SUBCASE("post-partition double spend slashes the remainder regardless of fraction")
    {
        params.slash_fraction = 0.25;
        apply_penalty({w.ledger, statuses, banned}, {Offense::post_partition_double_spend, World::id(w.alice), proof, {}}, params);
        CHECK(w.ledger.balance(World::id(w.alice)) == 0);
    }

    SUBCASE("penalty without proof is a logic error")
    {
        CHECK_THROWS_AS(apply_penalty({w.ledger, statuses, banned}, {Offense::sender_fraud, World::id(w.alice), {}, {}}, params),
                        std::logic_error);
        auto forged = proof;
        forged.evidence.conflicting_record->sender_sig.bytes[3] ^= 1;
        CHECK_THROWS_AS(apply_penalty({w.ledger, statuses, banned}, {Offense::sender_fraud, World::id(w.alice), forged, {}}, params),
                        std::logic_error);
        // Someone else's offense cannot be pinned on bob.
        CHECK_THROWS_AS(apply_penalty({w.ledger, statuses, banned}, {Offense::sender_fraud, World::id(w.bob), proof, {}}, params),
                        std::logic_error);
        auto overdraw = PriorOffense{second, InvalidityEvidence{EvidenceKind::overdraw, {}, {}, {}}};
        CHECK_THROWS_AS(
            apply_penalty({w.ledger, statuses, banned}, {Offense::post_partition_double_spend, World::id(w.alice), overdraw, {}}, params),
            std::logic_error);
        CHECK(w.ledger.balance(World::id(w.alice)) == 900);
        CHECK(banned.empty());
    }

    SUBCASE("witness falsification blacklists and forfeits stake")
    {
        auto id = World::id(w.w1);
        statuses[id] = NodeStatus{id, true, false, true, 100};
        WitnessReport r;
        r.kind = ReportKind::acceptance;
        r.tx_id = second.tx_id;
        r.proposed = second;
        sign_report(r, w.w1);
        auto res = apply_penalty({w.ledger, statuses, banned}, {Offense::witness_falsification, id, {}, r}, params);
        CHECK(res.stake_forfeited == 100);
        CHECK(statuses[id].blacklisted);
        CHECK_FALSE(statuses[id].witness_eligible);
        CHECK_FALSE(statuses[id].available_witness);

        auto other = World::id(w.w2);
        CHECK_THROWS_AS(apply_penalty({w.ledger, statuses, banned}, {Offense::witness_falsification, other, {}, r}, params),
                        std::logic_error);
    }
}

TEST_CASE("recipient spend gate and quorum")
{
    ConsensusParams p;
    CHECK_FALSE(recipient_spend_gate(1000, 1000, p));
    CHECK_FALSE(recipient_spend_gate(1000, 1000 + p.recipient_spend_delay - 1, p));
    CHECK(recipient_spend_gate(1000, 1000 + p.recipient_spend_delay, p));

    CHECK(quorum(3, p) == 2);
    CHECK(quorum(4, p) == 3);
    CHECK(quorum(6, p) == 4);
    CHECK(quorum(7, p) == 5);
    p.min_acceptances = 3;
    CHECK(quorum(10, p) == 3);

    p.witness_pool_size = 2;
    CHECK_THROWS_AS(check_params(p), std::invalid_argument);
    p.witness_pool_size = 0;
    p.slash_fraction = 1.5;
    CHECK_THROWS_AS(check_params(p), std::invalid_argument);
}
