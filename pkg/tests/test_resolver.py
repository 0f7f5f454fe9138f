"""Identifier parsing, registration, lookup, and LSA-style federation."""

from __future__ import annotations

import dataclasses
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_subject, seed
from vasptrust import crypto, pki
from vasptrust.resolver import (CustomerIdentifier, IdentifierKind,
                                IdpDirectory, IdpValidationFailed,
                                MergeOutcome, ResolverService, Unauthorized,
                                UnknownCustomer, Unparseable, parse_identifier)


class TestParsing:
    def test_payid(self):
        ident = parse_identifier("alice$acmepay.com")
        assert ident.kind is IdentifierKind.PAY_ID
        assert (ident.local_part, ident.domain_part) == ("alice", "acmepay.com")

    def test_email(self):
        ident = parse_identifier("bob@idp2.com")
        assert ident.kind is IdentifierKind.EMAIL
        assert (ident.local_part, ident.domain_part) == ("bob", "idp2.com")

    def test_empty_string(self):
        with pytest.raises(Unparseable):
            parse_identifier("")

    def test_bare_key_hex(self):
        key = crypto.generate_keypair(seed("bare")).public_key
        ident = parse_identifier(key.hex())
        assert ident.kind is IdentifierKind.BARE_PUBLIC_KEY
        assert ident.key_bytes == key
        assert parse_identifier(ident.render()) == ident

    def test_render_lowercases_domain_only(self):
        a = parse_identifier("Alice@IDP1.COM")
        assert a.render() == "Alice@idp1.com"

    @pytest.mark.parametrize("bad", ["@", "$", "a@", "@b", "a$", "zz", "a b",
                                     "a@b@", "x$y@z", "deadbeef"])
    def test_unparseable_strings(self, bad):
        with pytest.raises(Unparseable):
            parse_identifier(bad)


@pytest.fixture
def service():
    svc = ResolverService(9, {"bob", "dave"})
    svc.register_identifier("bob", parse_identifier("bob@idp2.com"))
    return svc


class TestRegistration:
    def test_idp_validated_registration(self, service):
        directory = IdpDirectory("idp2.com", {"dave@idp2.com"})
        service.register_identifier("dave", parse_identifier("dave@idp2.com"),
                                    directory)
        assert "dave@idp2.com" in service.local_identifiers()

    def test_idp_rejects_unknown(self, service):
        directory = IdpDirectory("idp2.com", {"someoneelse@idp2.com"})
        with pytest.raises(IdpValidationFailed):
            service.register_identifier("dave",
                                        parse_identifier("dave@idp2.com"),
                                        directory)

    def test_unknown_customer(self, service):
        with pytest.raises(UnknownCustomer):
            service.register_identifier("mallory",
                                        parse_identifier("m$x.com"))

    def test_multiple_identifiers_per_customer(self, service):
        service.register_identifier("bob", parse_identifier("bob$betaex.com"))
        assert service.local_customers_for(parse_identifier("bob@idp2.com")) \
            == {"bob"}
        assert service.local_customers_for(parse_identifier("bob$betaex.com")) \
            == {"bob"}


class FederationWorld:
    """Three resolver services with certified claims keys."""

    def __init__(self, root):
        self.root = root
        self.services = {}
        self.creds = {}
        for number in (3, 7, 9):
            identity = crypto.generate_keypair(seed(f"fed:{number}:id"))
            claims = crypto.generate_keypair(seed(f"fed:{number}:claims"))
            identity_cert = root.issue_identity_cert(
                make_subject(number), identity.public_key, 0, 10_000)
            claims_cert = root.issue_signing_cert(
                identity_cert, pki.CertPurpose.CLAIMS_SIGNING,
                claims.public_key, 0, 10_000)
            self.services[number] = ResolverService(number, {f"user{number}"})
            self.creds[number] = (identity_cert, claims_cert, claims)

    def advertise(self, number):
        _, claims_cert, claims = self.creds[number]
        return self.services[number].build_advertisement(
            claims.private_key, claims_cert.serial)

    def merge(self, into, adv, origin):
        identity_cert, claims_cert, _ = self.creds[origin]
        return self.services[into].merge_advertisement(
            adv, claims_cert, identity_cert, self.root.public_key,
            self.root.revocation_list, now=1)


@pytest.fixture
def federation(root):
    return FederationWorld(root)


class TestLookup:
    def test_single_hit(self, service, member, root):
        hits = service.lookup(parse_identifier("bob@idp2.com"),
                              member["identity_cert"], root.public_key,
                              root.revocation_list, now=1)
        assert hits == [9]

    def test_multi_vasp_hit(self, federation):
        fed = federation
        fed.services[3].register_identifier("user3",
                                            parse_identifier("dave@idp2.com"))
        fed.services[9].register_identifier("user9",
                                            parse_identifier("dave@idp2.com"))
        fed.merge(7, fed.advertise(3), 3)
        fed.merge(7, fed.advertise(9), 9)
        identity_cert, _, _ = fed.creds[7]
        hits = fed.services[7].lookup(parse_identifier("dave@idp2.com"),
                                      identity_cert, fed.root.public_key,
                                      fed.root.revocation_list, 1)
        assert hits == [3, 9]

    def test_unknown_identifier(self, service, member, root):
        assert service.lookup(parse_identifier("nobody@idp2.com"),
                              member["identity_cert"], root.public_key,
                              root.revocation_list, 1) == []

    def test_revoked_caller_unauthorized(self, service, member, root):
        revocation_list = root.revoke(member["identity_cert"].serial,
                                      pki.RevocationReason.KEY_COMPROMISE, 2)
        with pytest.raises(Unauthorized):
            service.lookup(parse_identifier("bob@idp2.com"),
                           member["identity_cert"], root.public_key,
                           revocation_list, 3)

    def test_lookup_result_carries_numbers_only(self, service, member, root):
        hits = service.lookup(parse_identifier("bob@idp2.com"),
                              member["identity_cert"], root.public_key,
                              root.revocation_list, 1)
        assert all(isinstance(h, int) for h in hits)


class TestAdvertisements:
    def test_contains_all_local_identifiers(self, federation):
        svc = federation.services[3]
        svc.register_identifier("user3", parse_identifier("a$x.com"))
        svc.register_identifier("user3", parse_identifier("b$x.com"))
        svc.register_identifier("user3", parse_identifier("c$x.com"))
        adv = federation.advertise(3)
        assert [i.render() for i in adv.identifiers] == \
            ["a$x.com", "b$x.com", "c$x.com"]

    def test_empty_list_still_signed(self, federation):
        adv = federation.advertise(3)
        assert adv.identifiers == ()
        assert federation.merge(7, adv, 3) is MergeOutcome.APPLIED

    def test_sequences_increment(self, federation):
        first = federation.advertise(3)
        second = federation.advertise(3)
        assert (first.sequence, second.sequence) == (1, 2)

    def test_first_merge_applied_replay_stale(self, federation):
        adv = federation.advertise(3)
        assert federation.merge(7, adv, 3) is MergeOutcome.APPLIED
        assert federation.merge(7, adv, 3) is MergeOutcome.STALE

    def test_bad_signature_rejected(self, federation):
        adv = federation.advertise(3)
        forged = dataclasses.replace(adv, sequence=adv.sequence + 1)
        assert federation.merge(7, forged, 3) is MergeOutcome.REJECTED

    def test_origin_number_must_match_cert(self, federation):
        adv = federation.advertise(3)
        # present VASP 9's certificates for VASP 3's advertisement
        identity_cert, claims_cert, _ = federation.creds[9]
        outcome = federation.services[7].merge_advertisement(
            adv, claims_cert, identity_cert, federation.root.public_key,
            federation.root.revocation_list, 1)
        assert outcome is MergeOutcome.REJECTED

    def test_revoked_origin_rejected(self, federation):
        adv = federation.advertise(3)
        identity_cert, claims_cert, _ = federation.creds[3]
        revocation_list = federation.root.revoke(
            claims_cert.serial, pki.RevocationReason.KEY_COMPROMISE, 2)
        outcome = federation.services[7].merge_advertisement(
            adv, claims_cert, identity_cert, federation.root.public_key,
            revocation_list, 3)
        assert outcome is MergeOutcome.REJECTED

    def test_newer_advertisement_withdraws_identifier(self, federation):
        fed = federation
        svc = fed.services[3]
        svc.register_identifier("user3", parse_identifier("old$x.com"))
        fed.merge(7, fed.advertise(3), 3)
        identity_cert, _, _ = fed.creds[7]
        assert fed.services[7].lookup(parse_identifier("old$x.com"),
                                      identity_cert, fed.root.public_key,
                                      fed.root.revocation_list, 1) == [3]
        # Withdraw by advertising a fresh full state without the identifier.
        svc._local.pop("old$x.com")
        fed.merge(7, fed.advertise(3), 3)
        assert fed.services[7].lookup(parse_identifier("old$x.com"),
                                      identity_cert, fed.root.public_key,
                                      fed.root.revocation_list, 1) == []


def from_scratch_table(advertisements):
    """Oracle: rebuild remote state using only the highest-sequence
    advertisement per origin."""
    newest = {}
    for adv in advertisements:
        held = newest.get(adv.vasp_number)
        if held is None or adv.sequence > held.sequence:
            newest[adv.vasp_number] = adv
    table = {}
    for origin, adv in newest.items():
        for ident in adv.identifiers:
            table.setdefault(ident.render(), set()).add(origin)
    return {k: sorted(v) for k, v in sorted(table.items())}


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([3, 9]), st.integers(0, 4)),
                min_size=1, max_size=20), st.randoms(use_true_random=False))
def test_incremental_merge_equals_from_scratch(schedule, rng):
    root = pki.create_consortium_root("TestNet", seed("lsa-root"))
    fed = FederationWorld(root)
    # Pre-generate advertisement versions per origin: each version adds an
    # identifier, so sequence k has k identifiers.
    versions = {}
    for origin in (3, 9):
        versions[origin] = []
        for k in range(5):
            fed.services[origin].register_identifier(
                f"user{origin}", parse_identifier(f"u{k}$v{origin}.com"))
            versions[origin].append(fed.advertise(origin))

    receiver = fed.services[7]
    seen = []
    for origin, version in schedule:
        adv = versions[origin][version]
        seen.append(adv)
        outcome = fed.merge(7, adv, origin)
        assert outcome in (MergeOutcome.APPLIED, MergeOutcome.STALE)
        if rng.random() < 0.3:  # duplicate delivery
            assert fed.merge(7, adv, origin) is MergeOutcome.STALE

    expected = from_scratch_table(seen)
    remote_view = {}
    for origin, adv in receiver._remote.items():
        for ident in adv.identifiers:
            remote_view.setdefault(ident.render(), set()).add(origin)
    remote_view = {k: sorted(v) for k, v in sorted(remote_view.items())}
    assert remote_view == expected
    # The incrementally maintained lookup index must agree as well.
    assert receiver.resolve_map() == expected
