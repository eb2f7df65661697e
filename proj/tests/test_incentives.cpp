#include <doctest.h>

#include <pchain/incentives.hpp>

using namespace pchain;

namespace {

AccountId id(const KeyPair& k)
{
    return account_id(k.public_key);
}

/// Ledger where `payer` has paid `receivers` fresh accounts, and a journal
/// where `witness` recorded all of them on day 0.
struct Day
{
    KeyPair payer = generate_keypair(1);
    KeyPair witness = generate_keypair(500);
    Ledger ledger;
    WitnessJournal journal;
    std::vector<TransactionRecord> records;

    explicit Day(int receivers)
    {
        ledger.add_genesis(id(payer), 1'000'000);
        Digest prev;
        for (int i = 0; i < receivers; ++i) {
            auto r = make_transfer(payer, generate_keypair(10 + i), 100, i + 1, prev);
            ledger.append(r);
            prev = r.tx_id;
            records.push_back(r);
            journal.record(0, sign_witnessed(witness, r));
        }
    }
};

} // namespace

TEST_CASE("fee examples")
{
    FeePolicy p;
    CHECK(compute_fee(1000, p) == 1);
    CHECK(compute_fee(10'000'000, p) == 5);
    CHECK(compute_fee(1, p) == 0);
}

TEST_CASE("witness registry")
{
    WitnessRegistry reg;
    auto a = id(generate_keypair(1));
    auto b = id(generate_keypair(2));
    CHECK(reg.register_witness(a, 100, 0));
    CHECK(reg.register_witness(b, 100, 3));
    CHECK(reg.is_available(a));
    CHECK(reg.stake(a) == 100);
    CHECK(reg.available().size() == 2);

    CHECK(reg.prune_idle(6).empty());
    CHECK(reg.prune_idle(7) == std::vector<AccountId>{a});
    CHECK_FALSE(reg.is_available(a));
    CHECK(reg.is_available(b));

    reg.record_activity(b, 9);
    CHECK(reg.prune_idle(15).empty());
    CHECK(reg.blacklist(b) == 100);
    CHECK_FALSE(reg.register_witness(b, 100, 16));
    CHECK_FALSE(reg.is_available(b));
    CHECK(reg.blacklist_size() == 1);
}

TEST_CASE("issue_compensation eligibility")
{
    CompensationPolicy policy;

    SUBCASE("10 distinct transactors is enough")
    {
        Day d(9);
        CHECK(d.journal.transactor_count(0) == 10);
        auto out = issue_compensation(d.witness, d.journal, 0, policy);
        REQUIRE(std::holds_alternative<CompensationRecord>(out));
        const auto& c = std::get<CompensationRecord>(out);
        CHECK(c.amount == policy.daily_amount);
        CHECK(c.attached.size() == 9);
        CHECK(c.witness == id(d.witness));

        auto again = issue_compensation(d.witness, d.journal, 0, policy);
        REQUIRE(std::holds_alternative<NotEligible>(again));
        CHECK(std::get<NotEligible>(again).reason == NotEligible::Reason::already_issued);
    }

    SUBCASE("9 distinct transactors is not")
    {
        Day d(8);
        auto out = issue_compensation(d.witness, d.journal, 0, policy);
        REQUIRE(std::holds_alternative<NotEligible>(out));
        CHECK(std::get<NotEligible>(out).count == 9);
        // Nothing issued, so a later attempt is judged on eligibility again.
        CHECK(std::get<NotEligible>(issue_compensation(d.witness, d.journal, 0, policy)).reason ==
              NotEligible::Reason::too_few_transactors);
    }

    SUBCASE("20 transactions among 9 parties")
    {
        LedgerConfig cfg;
        cfg.require_fresh_receiver = false;
        Ledger ledger(cfg);
        std::vector<KeyPair> parties;
        for (int i = 0; i < 9; ++i) {
            parties.push_back(generate_keypair(200 + i));
            ledger.add_genesis(id(parties.back()), 10'000);
        }
        KeyPair witness = generate_keypair(900);
        WitnessJournal journal;
        std::vector<std::uint64_t> seq(9, 0);
        std::vector<Digest> prev(9);
        for (int t = 0; t < 20; ++t) {
            int s = t % 9, r = (t + 1) % 9;
            auto rec = make_transfer(parties[s], parties[r], 10, ++seq[s], prev[s]);
            ledger.append(rec);
            prev[s] = rec.tx_id;
            journal.record(0, sign_witnessed(witness, rec));
        }
        CHECK(journal.witnessed(0).size() == 20);
        CHECK(journal.transactor_count(0) == 9);
        CHECK(std::holds_alternative<NotEligible>(issue_compensation(witness, journal, 0, policy)));
    }

    SUBCASE("days are independent")
    {
        Day d(9);
        CHECK(std::holds_alternative<NotEligible>(issue_compensation(d.witness, d.journal, 1, policy)));
        CHECK(std::holds_alternative<CompensationRecord>(issue_compensation(d.witness, d.journal, 0, policy)));
    }
}

TEST_CASE("validate_compensation")
{
    CompensationPolicy policy;
    Day d(9);
    WitnessRegistry reg;
    auto c = std::get<CompensationRecord>(issue_compensation(d.witness, d.journal, 0, policy));

    SUBCASE("fully valid record is accepted and mints exactly the standard amount")
    {
        CHECK(validate_compensation(c, d.ledger, reg, policy).verdict == CompensationVerdict::accept);
        const auto before = d.ledger.total_balances() + d.ledger.fees_collected();
        d.ledger.mint(c.witness, c.amount, compensation_id(c));
        CHECK(d.ledger.total_balances() + d.ledger.fees_collected() == before + policy.daily_amount);
        CHECK(d.ledger.balance(c.witness) == policy.daily_amount);
        CHECK(d.ledger.conservation_holds());
    }

    SUBCASE("one attached record with a forged sender signature")
    {
        auto forged = c;
        forged.attached[3].record.sender_sig.bytes[5] ^= 0x40;
        sign_compensation(forged, d.witness);
        auto check = validate_compensation(forged, d.ledger, reg, policy);
        CHECK(check.verdict == CompensationVerdict::reject);
        CHECK(check.reason == "attached record signatures invalid");
    }

    SUBCASE("attached record the ledger never saw")
    {
        auto padded = c;
        auto fake = make_transfer(generate_keypair(77), generate_keypair(78), 5, 1, {});
        padded.attached.push_back(sign_witnessed(d.witness, fake));
        sign_compensation(padded, d.witness);
        CHECK(validate_compensation(padded, d.ledger, reg, policy).reason == "attached record not in ledger");
    }

    SUBCASE("non-standard amount")
    {
        auto greedy = c;
        greedy.amount = policy.daily_amount + 1;
        sign_compensation(greedy, d.witness);
        CHECK(validate_compensation(greedy, d.ledger, reg, policy).verdict == CompensationVerdict::reject);
    }

    SUBCASE("tampering after signing")
    {
        auto t = c;
        t.day_index = 1;
        CHECK(validate_compensation(t, d.ledger, reg, policy).reason == "issuer signature invalid");
    }

    SUBCASE("attachments witnessed by someone else")
    {
        auto other = generate_keypair(501);
        auto stolen = c;
        stolen.attached[0] = sign_witnessed(other, stolen.attached[0].record);
        sign_compensation(stolen, d.witness);
        CHECK(validate_compensation(stolen, d.ledger, reg, policy).verdict == CompensationVerdict::reject);
    }

    SUBCASE("too few transactors even when otherwise valid")
    {
        auto trimmed = c;
        trimmed.attached.pop_back();
        sign_compensation(trimmed, d.witness);
        CHECK(validate_compensation(trimmed, d.ledger, reg, policy).reason == "too few distinct transactors");
    }

    SUBCASE("blacklisted issuer and repeat payment")
    {
        PaidSet paid{{c.witness, 0, CompensationKind::witness}};
        CHECK(validate_compensation(c, d.ledger, reg, policy, &paid).verdict == CompensationVerdict::reject);
        reg.blacklist(c.witness);
        CHECK(validate_compensation(c, d.ledger, reg, policy).reason == "issuer blacklisted");
    }

    SUBCASE("encoding round trip keeps the signature valid")
    {
        ByteWriter w;
        encode(w, c);
        ByteReader r(w.bytes());
        auto back = decode_compensation(r);
        r.expect_done();
        CHECK(compensation_id(back) == compensation_id(c));
        CHECK(validate_compensation(back, d.ledger, reg, policy).verdict == CompensationVerdict::accept);
    }
}

TEST_CASE("bridge compensation")
{
    CompensationPolicy policy;
    policy.min_served = 2;
    auto bridge = generate_keypair(600);
    WitnessJournal journal;
    WitnessRegistry reg;
    Ledger ledger;

    journal.record_served(4, make_tether_receipt(generate_keypair(601), id(bridge), 4));
    CHECK(std::holds_alternative<NotEligible>(issue_compensation(bridge, journal, 4, policy, CompensationKind::bridge)));
    journal.record_served(4, make_tether_receipt(generate_keypair(601), id(bridge), 4));
    CHECK(journal.served(4).size() == 1);
    journal.record_served(4, make_tether_receipt(generate_keypair(602), id(bridge), 4));

    auto c = std::get<CompensationRecord>(issue_compensation(bridge, journal, 4, policy, CompensationKind::bridge));
    CHECK(c.amount == policy.bridge_daily_amount);
    CHECK(validate_compensation(c, ledger, reg, policy).verdict == CompensationVerdict::accept);

    auto wrong_day = c;
    wrong_day.served[0] = make_tether_receipt(generate_keypair(601), id(bridge), 3);
    sign_compensation(wrong_day, bridge);
    CHECK(validate_compensation(wrong_day, ledger, reg, policy).verdict == CompensationVerdict::reject);

    // Witness and bridge compensation for the same day are separate.
    CHECK(std::holds_alternative<NotEligible>(issue_compensation(bridge, journal, 4, policy, CompensationKind::bridge)));
}

TEST_CASE("wash trading never raises the transactor count beyond the party set")
{
    LedgerConfig cfg;
    cfg.require_fresh_receiver = false;
    Ledger ledger(cfg);
    auto a = generate_keypair(1), b = generate_keypair(2), w = generate_keypair(3);
    ledger.add_genesis(id(a), 100'000);
    ledger.add_genesis(id(b), 100'000);
    WitnessJournal journal;
    std::uint64_t seq_a = 0, seq_b = 0;
    Digest prev_a, prev_b;
    for (int i = 0; i < 100; ++i) {
        TransactionRecord r;
        if (i % 2 == 0) {
            r = make_transfer(a, b, 10, ++seq_a, prev_a);
            prev_a = r.tx_id;
        } else {
            r = make_transfer(b, a, 10, ++seq_b, prev_b);
            prev_b = r.tx_id;
        }
        ledger.append(r);
        journal.record(0, sign_witnessed(w, r));
        CHECK(journal.transactor_count(0) <= 2);
    }
    auto out = issue_compensation(w, journal, 0, CompensationPolicy{});
    REQUIRE(std::holds_alternative<NotEligible>(out));
    CHECK(std::get<NotEligible>(out).count == 2);
}

TEST_CASE("day index")
{
    CompensationPolicy p;
    p.day_length = 60 * seconds;
    CHECK(day_index(0, p) == 0);
    CHECK(day_index(59'999, p) == 0);
    CHECK(day_index(60'000, p) == 1);
    p.day_length = 0;
    CHECK_THROWS_AS(day_index(5, p), std::invalid_argument);
}
