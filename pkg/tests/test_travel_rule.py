"""Travel-rule payloads: completeness, consent, signing, correlation."""

from __future__ import annotations

import itertools
from dataclasses import replace

import pytest

from conftest import seed
from vasptrust import crypto, pki, travel_rule as tr
from vasptrust.ledger import Ledger, make_transfer


def alice(**overrides):
    fields = dict(customer_id="A-001", legal_name="Alice Example",
                  geographic_address="1 Main St, Cambridge MA")
    fields.update(overrides)
    return tr.CustomerRecord(**fields)


def build(originator=None, amount=125):
    return tr.build_payload(originator or alice(), "Bob Jones", "B-900",
                            9, amount, 7)


class TestBuildAndValidate:
    def test_complete_payload(self):
        payload = build()
        assert payload.originator_name == "Alice Example"
        assert payload.originator_account == "A-001"
        report = tr.validate_payload(payload)
        assert report.passed and report.summary() == "5/5"

    def test_identifying_alternatives_priority(self):
        record = alice(geographic_address=None, national_id="ID-1",
                       customer_number="C-1")
        payload = build(record)
        assert payload.originator_identifying.kind is tr.IdentifyingKind.NATIONAL_ID

    def test_birth_info_fallback(self):
        record = alice(geographic_address=None,
                       birth_info=("1990-01-02", "Springfield"))
        payload = build(record)
        info = payload.originator_identifying
        assert info.kind is tr.IdentifyingKind.BIRTH_INFO
        assert (info.value, info.extra) == ("1990-01-02", "Springfield")

    def test_missing_all_identifying_data(self):
        with pytest.raises(tr.IncompleteOriginatorData):
            build(alice(geographic_address=None))

    def test_zero_amount(self):
        with pytest.raises(ValueError):
            build(amount=0)

    def test_blank_beneficiary_flagged_exactly(self):
        payload = replace(build(), beneficiary_name="   ")
        report = tr.validate_payload(payload)
        assert not report.passed
        assert report.missing() == ("beneficiary_name",)

    def test_presence_matrix_all_32_combinations(self):
        complete = build()
        for bits in itertools.product((True, False), repeat=5):
            payload = replace(
                complete,
                originator_name=complete.originator_name if bits[0] else "",
                originator_account=complete.originator_account if bits[1] else "",
                originator_identifying=(complete.originator_identifying
                                        if bits[2] else None),
                beneficiary_name=complete.beneficiary_name if bits[3] else "",
                beneficiary_account=complete.beneficiary_account if bits[4] else "")
            report = tr.validate_payload(payload)
            expected_missing = tuple(
                name for name, present in zip(tr.REQUIRED_FIELDS, bits)
                if not present)
            assert report.missing() == expected_missing
            assert report.passed == all(bits)

    def test_payload_id_binds_content(self):
        payload = build()
        assert payload.payload_id == tr.compute_payload_id(payload)
        altered = replace(payload, amount=payload.amount + 1)
        assert tr.compute_payload_id(altered) != payload.payload_id


class TestConsent:
    @pytest.fixture
    def store(self):
        return tr.ConsentStore({"alice", "bob"})

    def test_grant_and_check(self, store):
        store.record("bob", tr.ConsentDirection.RECEIVE_ASSETS, None, now=1)
        assert store.check("bob", tr.ConsentDirection.RECEIVE_ASSETS, 7, now=2)

    def test_unknown_customer(self, store):
        with pytest.raises(tr.UnknownCustomer):
            store.record("mallory", tr.ConsentDirection.RECEIVE_ASSETS, None, 1)

    def test_withdraw(self, store):
        store.record("bob", tr.ConsentDirection.RECEIVE_ASSETS, None, now=1)
        store.withdraw("bob", tr.ConsentDirection.RECEIVE_ASSETS, None, now=5)
        assert not store.check("bob", tr.ConsentDirection.RECEIVE_ASSETS, None, 6)

    def test_scoped_consent_does_not_leak(self, store):
        store.record("bob", tr.ConsentDirection.RECEIVE_ASSETS, 7, now=1)
        assert store.check("bob", tr.ConsentDirection.RECEIVE_ASSETS, 7, now=2)
        assert not store.check("bob", tr.ConsentDirection.RECEIVE_ASSETS, 9, now=2)

    def test_wrong_direction(self, store):
        store.record("bob", tr.ConsentDirection.RECEIVE_ASSETS, None, now=1)
        assert not store.check("bob",
                               tr.ConsentDirection.SEND_INFO_TO_COUNTERPARTY,
                               None, 2)

    def test_regrant_after_withdraw(self, store):
        store.record("alice", tr.ConsentDirection.SEND_INFO_TO_COUNTERPARTY,
                     None, now=1)
        store.withdraw("alice", tr.ConsentDirection.SEND_INFO_TO_COUNTERPARTY,
                       None, now=2)
        store.record("alice", tr.ConsentDirection.SEND_INFO_TO_COUNTERPARTY,
                     None, now=3)
        assert store.check("alice",
                           tr.ConsentDirection.SEND_INFO_TO_COUNTERPARTY,
                           None, 4)


class TestSignedPayload:
    def test_sign_and_verify(self, root, member):
        signed = tr.sign_payload(member["claims"].private_key,
                                 member["claims_cert"], build(),
                                 root.public_key, root.revocation_list, now=1)
        assert tr.verify_signed_payload(signed, member["claims_cert"],
                                        root.public_key, root.revocation_list, 2)

    def test_transaction_cert_refused(self, root, member):
        with pytest.raises(tr.WrongCertPurpose):
            tr.sign_payload(member["tx"].private_key, member["tx_cert"],
                            build(), root.public_key, root.revocation_list, 1)

    def test_revoked_cert_refused(self, root, member):
        revocation_list = root.revoke(member["claims_cert"].serial,
                                      pki.RevocationReason.KEY_COMPROMISE, 5)
        with pytest.raises(tr.InvalidCert):
            tr.sign_payload(member["claims"].private_key,
                            member["claims_cert"], build(),
                            root.public_key, revocation_list, 6)

    def test_tampered_payload_fails(self, root, member):
        signed = tr.sign_payload(member["claims"].private_key,
                                 member["claims_cert"], build(),
                                 root.public_key, root.revocation_list, 1)
        tampered = replace(signed, payload=replace(signed.payload, amount=999))
        assert not tr.verify_signed_payload(tampered, member["claims_cert"],
                                            root.public_key,
                                            root.revocation_list, 2)

    def test_wrong_serial_fails(self, root, member):
        signed = tr.sign_payload(member["claims"].private_key,
                                 member["claims_cert"], build(),
                                 root.public_key, root.revocation_list, 1)
        wrong = replace(signed, signer_cert_serial=999)
        assert not tr.verify_signed_payload(wrong, member["claims_cert"],
                                            root.public_key,
                                            root.revocation_list, 2)


def brute_force_bipartite(payloads, outputs):
    """Oracle: enumerate all injective payload->output assignments where
    the output pays (hint key, hint amount); return the set of complete
    assignments."""
    solutions = []

    def extend(i, used, acc):
        if i == len(payloads):
            solutions.append(tuple(acc))
            return
        hint = payloads[i].correlation
        for j, (key, amount) in enumerate(outputs):
            if j in used:
                continue
            if key == hint.expected_key and amount == hint.expected_amount:
                extend(i + 1, used | {j}, acc + [j])

    extend(0, set(), [])
    return set(solutions)


class TestCorrelation:
    def _ledger_with_tx(self, outputs, memo=None):
        src = crypto.generate_keypair(seed("corr:src"))
        total = sum(a for _, a in outputs)
        ledger = Ledger([(src.public_key, total)])
        tx = make_transfer([(src.public_key, total)], outputs,
                           {src.public_key:
                            lambda m: crypto.sign(src.private_key, m)},
                           memo_tag=memo)
        ledger.submit_transfer(tx)
        ledger.confirm_block()
        return ledger, tx

    def test_memo_tag_match(self):
        beneficiary = crypto.generate_keypair(seed("corr:bene"))
        payload = build()
        ledger, tx = self._ledger_with_tx([(beneficiary.public_key, 125)],
                                          memo=payload.payload_id)
        store = tr.CorrelationStore()
        record = store.correlate(payload, ledger, (1, ledger.height))
        assert record.tx_id == tx.tx_id and record.output_index == 0
        # Re-correlating the same payload is idempotent.
        assert store.correlate(payload, ledger, (1, ledger.height)) == record

    def test_no_match(self):
        beneficiary = crypto.generate_keypair(seed("corr:none"))
        ledger, _ = self._ledger_with_tx([(beneficiary.public_key, 1)])
        payload = build()
        with pytest.raises(tr.NoMatch):
            tr.CorrelationStore().correlate(payload, ledger, (1, ledger.height))

    def _batch_payloads(self, keys, amounts):
        payloads = []
        for key, amount in zip(keys, amounts):
            hint = tr.CorrelationHint(tr.HintKind.KEY_AMOUNT,
                                      expected_key=key.public_key,
                                      expected_amount=amount)
            payloads.append(tr.build_payload(alice(), "Bob Jones", "B-900", 9,
                                             amount, 7, hint=hint))
        return payloads

    def test_batch_three_outputs_bijective(self):
        keys = [crypto.generate_keypair(seed(f"corr:b{i}")) for i in range(3)]
        amounts = [10, 20, 30]
        ledger, tx = self._ledger_with_tx(
            [(k.public_key, a) for k, a in zip(keys, amounts)])
        payloads = self._batch_payloads(keys, amounts)

        oracle = brute_force_bipartite(
            payloads, [(o.public_key, o.amount) for o in tx.outputs])
        assert len(oracle) == 1, "oracle: unique perfect matching expected"

        store = tr.CorrelationStore()
        records = [store.correlate(p, ledger, (1, ledger.height))
                   for p in payloads]
        assert tuple(r.output_index for r in records) == next(iter(oracle))
        assert len({(r.tx_id, r.output_index) for r in records}) == 3

    def test_equal_amounts_without_tags_ambiguous(self):
        key = crypto.generate_keypair(seed("corr:amb"))
        other = crypto.generate_keypair(seed("corr:amb2"))
        ledger, tx = self._ledger_with_tx(
            [(key.public_key, 50), (key.public_key, 50),
             (other.public_key, 70)])
        hint = tr.CorrelationHint(tr.HintKind.KEY_AMOUNT,
                                  expected_key=key.public_key,
                                  expected_amount=50)
        payload = tr.build_payload(alice(), "Bob Jones", "B-900", 9, 50, 7,
                                   hint=hint)
        oracle = brute_force_bipartite(
            [payload], [(o.public_key, o.amount) for o in tx.outputs])
        assert len(oracle) == 2, "designed ambiguity"
        with pytest.raises(tr.AmbiguousMatch):
            tr.CorrelationStore().correlate(payload, ledger, (1, ledger.height))

    def test_consumed_output_not_reused(self):
        key = crypto.generate_keypair(seed("corr:reuse"))
        ledger, _ = self._ledger_with_tx([(key.public_key, 50)])
        hint = tr.CorrelationHint(tr.HintKind.KEY_AMOUNT,
                                  expected_key=key.public_key,
                                  expected_amount=50)
        first = tr.build_payload(alice(), "Bob Jones", "B-900", 9, 50, 7,
                                 hint=hint)
        second = tr.build_payload(alice(customer_id="A-002"), "Bob Jones",
                                  "B-900", 9, 50, 7, hint=hint)
        store = tr.CorrelationStore()
        store.correlate(first, ledger, (1, ledger.height))
        with pytest.raises(tr.NoMatch):
            store.correlate(second, ledger, (1, ledger.height))

    def test_window_excludes_heights(self):
        beneficiary = crypto.generate_keypair(seed("corr:window"))
        payload = build()
        ledger, _ = self._ledger_with_tx([(beneficiary.public_key, 125)],
                                         memo=payload.payload_id)
        with pytest.raises(tr.NoMatch):
            tr.CorrelationStore().correlate(payload, ledger, (2, 10))


def test_dump_payload_store(root, member):
    signed = tr.sign_payload(member["claims"].private_key,
                             member["claims_cert"], build(),
                             root.public_key, root.revocation_list, 1)
    text = tr.dump_payload_store([("outbound", signed)])
    assert "outbound" in text and signed.payload.payload_id.hex() in text
