from __future__ import annotations

import pytest

from vasptrust import crypto, pki
from vasptrust.config import default_config, parse_config


def pytest_runtest_logreport(report):
    # One visible pass/fail line per acceptance criterion.
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        outcome = "PASS" if report.passed else "FAIL"
        print(f"\n[ACCEPTANCE] {name}: {outcome}", flush=True)

MASTER = crypto.seed_from_int(20260810)


def seed(label: str) -> bytes:
    return crypto.derive_seed(MASTER, label)


def make_subject(vasp_number: int, org: str | None = None) -> pki.EvSubjectInfo:
    return pki.EvSubjectInfo(
        organization_name=org or f"VASP {vasp_number} Ltd",
        alt_domain_names=(f"vasp{vasp_number}.example",),
        incorporation_number_or_lei=f"INC-{vasp_number:05d}",
        is_lei=False,
        place_of_business="1 Test Way",
        jurisdiction="Test Registry Office",
        vasp_number=vasp_number,
        regulated_business_activity=pki.BusinessActivity.EXCHANGE,
        policy_object_identifier="1.3.6.1.4.1.0.1",
    )


@pytest.fixture
def root() -> pki.RootAuthority:
    return pki.create_consortium_root("TestNet", seed("root"))


@pytest.fixture
def member(root):
    """One fully equipped member: identity + transaction + claims certs."""
    identity = crypto.generate_keypair(seed("member:id"))
    tx = crypto.generate_keypair(seed("member:tx"))
    claims = crypto.generate_keypair(seed("member:claims"))
    identity_cert = root.issue_identity_cert(make_subject(7), identity.public_key,
                                             0, 10_000)
    tx_cert = root.issue_signing_cert(identity_cert,
                                      pki.CertPurpose.TRANSACTION_SIGNING,
                                      tx.public_key, 0, 10_000)
    claims_cert = root.issue_signing_cert(identity_cert,
                                          pki.CertPurpose.CLAIMS_SIGNING,
                                          claims.public_key, 0, 10_000)
    return {
        "identity": identity, "tx": tx, "claims": claims,
        "identity_cert": identity_cert, "tx_cert": tx_cert,
        "claims_cert": claims_cert,
    }


@pytest.fixture
def demo_config():
    return parse_config(default_config())
