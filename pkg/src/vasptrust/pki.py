"""Consortium-rooted certificate hierarchy.

One root authority per consortium issues extended-validation identity
certificates carrying verified business fields, plus purpose-bound signing
certificates (transaction signing, claims signing) linked back to the
identity certificate by digest. The hierarchy is one level deep: root over
leaves, no intermediates. The root enforces that every public key appears
in at most one certificate, ever, so an entity's identity, transaction and
claims keys are provably distinct.

Certificates use the package's canonical encoding rather than ASN.1 DER;
the signature covers the canonical struct of every field before it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from . import codec, crypto
from .crypto import KeyPair


class PkiError(Exception):
    pass


class DuplicateVaspNumber(PkiError):
    pass


class KeyReuse(PkiError):
    """Public key already appears in another certificate of any purpose."""


class InvalidSubject(PkiError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


class LinkTargetRevoked(PkiError):
    pass


class LinkTargetExpired(PkiError):
    pass


class UnknownSerial(PkiError):
    pass


class BusinessActivity(Enum):
    # Provisional taxonomy; no formal VASP activity definition exists yet.
    EXCHANGE = "Exchange"
    TRANSFER = "Transfer"
    CUSTODY = "Custody"
    FINANCIAL_SERVICES = "FinancialServices"
    FUND_MANAGER = "FundManager"
    STABLECOIN_ISSUER = "StablecoinIssuer"


class CertPurpose(Enum):
    TRANSACTION_SIGNING = "TransactionSigning"
    CLAIMS_SIGNING = "ClaimsSigning"


class RevocationReason(Enum):
    KEY_COMPROMISE = "KeyCompromise"
    CESSATION_OF_BUSINESS = "CessationOfBusiness"
    SUPERSEDED = "Superseded"


class Verdict(Enum):
    VALID = "Valid"
    EXPIRED = "Expired"
    NOT_YET_VALID = "NotYetValid"
    REVOKED = "Revoked"
    BAD_SIGNATURE = "BadSignature"
    BROKEN_LINKAGE = "BrokenLinkage"


LEI_LENGTH = 20


@dataclass(frozen=True)
class EvSubjectInfo:
    """Verified business fields of a consortium member.

    ``incorporation_number_or_lei`` holds the LEI when ``is_lei`` is set
    (checked as 20 alphanumerics, no checksum validation), otherwise the
    incorporation number assigned by the incorporating agency.
    """

    organization_name: str
    alt_domain_names: tuple[str, ...]
    incorporation_number_or_lei: str
    is_lei: bool
    place_of_business: str
    jurisdiction: str
    vasp_number: int
    regulated_business_activity: BusinessActivity
    policy_object_identifier: str


@dataclass(frozen=True)
class EvIdentityCertificate:
    serial: int
    subject: EvSubjectInfo
    subject_public_key: bytes
    issuer_id: str
    not_before: int
    not_after: int
    issuer_signature: bytes

    def signing_input(self) -> bytes:
        return codec.struct_bytes(self, exclude=("issuer_signature",))


@dataclass(frozen=True)
class SigningCertificate:
    serial: int
    purpose: CertPurpose
    subject_public_key: bytes
    identity_linkage: bytes
    issuer_id: str
    not_before: int
    not_after: int
    issuer_signature: bytes

    def signing_input(self) -> bytes:
        return codec.struct_bytes(self, exclude=("issuer_signature",))


Certificate = EvIdentityCertificate | SigningCertificate


@dataclass(frozen=True)
class RevocationEntry:
    serial: int
    reason: RevocationReason
    revoked_at: int


@dataclass(frozen=True)
class RevocationList:
    issuer_id: str
    entries: tuple[RevocationEntry, ...]
    issued_at: int
    issuer_signature: bytes

    def signing_input(self) -> bytes:
        return codec.struct_bytes(self, exclude=("issuer_signature",))

    def covers(self, serial: int) -> bool:
        return any(e.serial == serial for e in self.entries)


@dataclass(frozen=True)
class ValidationReport:
    verdict: Verdict
    serial: int
    signature_ok: bool
    revoked: bool
    within_validity: bool
    linkage_ok: bool | None
    checked_at: int

    @property
    def valid(self) -> bool:
        return self.verdict is Verdict.VALID


def check_subject(subject: EvSubjectInfo) -> list[str]:
    """Collect subject invariant violations; empty list means acceptable."""
    problems = []
    if not subject.organization_name.strip():
        problems.append("organization_name must be the full legal entity name")
    if not subject.alt_domain_names:
        problems.append("at least one alternative domain name is required")
    if any(not d.strip() for d in subject.alt_domain_names):
        problems.append("blank domain name")
    if subject.is_lei:
        lei = subject.incorporation_number_or_lei
        if len(lei) != LEI_LENGTH or not lei.isalnum():
            problems.append("LEI must be 20 alphanumeric characters")
    elif not subject.incorporation_number_or_lei.strip():
        problems.append("incorporation number or LEI is required")
    if not subject.jurisdiction.strip():
        problems.append("jurisdiction of incorporation or registration is required")
    if subject.vasp_number < 0:
        problems.append("vasp_number must be unsigned")
    return problems


def verify_linkage(signing_cert: SigningCertificate,
                   identity_cert: EvIdentityCertificate) -> bool:
    """True iff the signing certificate points at exactly this identity."""
    return signing_cert.identity_linkage == crypto.digest(
        codec.canonical_encode(identity_cert)
    )


def validate_chain(cert: Certificate,
                   root_public_key: bytes,
                   revocation_list: RevocationList,
                   now: int,
                   identity_cert: EvIdentityCertificate | None = None) -> ValidationReport:
    """Pure validation of one certificate against the consortium root.

    For a SigningCertificate, pass the candidate identity certificate to
    have the linkage digest checked as part of the chain; linkage_ok stays
    None when no candidate is supplied.
    """
    signature_ok = crypto.verify(root_public_key, cert.signing_input(),
                                 cert.issuer_signature)
    revoked = revocation_list.covers(cert.serial)
    within = cert.not_before <= now < cert.not_after
    linkage_ok: bool | None = None
    if identity_cert is not None and isinstance(cert, SigningCertificate):
        linkage_ok = verify_linkage(cert, identity_cert)

    if not signature_ok:
        verdict = Verdict.BAD_SIGNATURE
    elif revoked:
        verdict = Verdict.REVOKED
    elif now < cert.not_before:
        verdict = Verdict.NOT_YET_VALID
    elif now >= cert.not_after:
        verdict = Verdict.EXPIRED
    elif linkage_ok is False:
        verdict = Verdict.BROKEN_LINKAGE
    else:
        verdict = Verdict.VALID
    return ValidationReport(
        verdict=verdict,
        serial=cert.serial,
        signature_ok=signature_ok,
        revoked=revoked,
        within_validity=within,
        linkage_ok=linkage_ok,
        checked_at=now,
    )


class RootAuthority:
    """Single-writer consortium root: issues, links and revokes certificates.

    The serial registry is shared across identity and signing certificates;
    the used-key registry spans every certificate (and the root key itself)
    so key reuse is refused at issuance.
    """

    def __init__(self, name: str, keypair: KeyPair):
        self.name = name
        self._keypair = keypair
        self._next_serial = 1
        self._certs: dict[int, Certificate] = {}
        self._vasp_numbers: set[int] = set()
        self._used_keys: set[bytes] = {keypair.public_key}
        self._revocations: dict[int, RevocationEntry] = {}
        self._revocation_list = self._sign_revocation_list(issued_at=0)

    @property
    def public_key(self) -> bytes:
        return self._keypair.public_key

    @property
    def next_serial(self) -> int:
        return self._next_serial

    @property
    def revocation_list(self) -> RevocationList:
        return self._revocation_list

    def certificate(self, serial: int) -> Certificate:
        try:
            return self._certs[serial]
        except KeyError:
            raise UnknownSerial(f"serial {serial} was never issued") from None

    def issued_certificates(self) -> list[Certificate]:
        return [self._certs[s] for s in sorted(self._certs)]

    def _sign_revocation_list(self, issued_at: int) -> RevocationList:
        entries = tuple(self._revocations[s] for s in sorted(self._revocations))
        unsigned = RevocationList(self.name, entries, issued_at, b"")
        sig = crypto.sign(self._keypair.private_key, unsigned.signing_input())
        return replace(unsigned, issuer_signature=sig)

    def _claim_key(self, public_key: bytes) -> None:
        if public_key in self._used_keys:
            raise KeyReuse("public key already bound to another certificate")
        self._used_keys.add(public_key)

    def issue_identity_cert(self, subject: EvSubjectInfo, subject_public_key: bytes,
                            not_before: int, not_after: int) -> EvIdentityCertificate:
        problems = check_subject(subject)
        if problems:
            raise InvalidSubject(problems)
        if not_before >= not_after:
            raise InvalidSubject(["validity interval is empty"])
        if subject.vasp_number in self._vasp_numbers:
            raise DuplicateVaspNumber(f"vasp_number {subject.vasp_number} already issued")
        self._claim_key(subject_public_key)
        self._vasp_numbers.add(subject.vasp_number)

        serial = self._next_serial
        self._next_serial += 1
        unsigned = EvIdentityCertificate(
            serial=serial,
            subject=subject,
            subject_public_key=subject_public_key,
            issuer_id=self.name,
            not_before=not_before,
            not_after=not_after,
            issuer_signature=b"",
        )
        sig = crypto.sign(self._keypair.private_key, unsigned.signing_input())
        cert = replace(unsigned, issuer_signature=sig)
        self._certs[serial] = cert
        return cert

    def issue_signing_cert(self, identity_cert: EvIdentityCertificate,
                           purpose: CertPurpose, subject_public_key: bytes,
                           not_before: int, not_after: int) -> SigningCertificate:
        registered = self._certs.get(identity_cert.serial)
        if registered != identity_cert:
            raise UnknownSerial("identity certificate was not issued by this root")
        if identity_cert.serial in self._revocations:
            raise LinkTargetRevoked(f"identity serial {identity_cert.serial} is revoked")
        if identity_cert.not_after <= not_before:
            raise LinkTargetExpired("identity certificate expires before this one begins")
        if not_before >= not_after:
            raise InvalidSubject(["validity interval is empty"])
        self._claim_key(subject_public_key)

        serial = self._next_serial
        self._next_serial += 1
        unsigned = SigningCertificate(
            serial=serial,
            purpose=purpose,
            subject_public_key=subject_public_key,
            identity_linkage=crypto.digest(codec.canonical_encode(identity_cert)),
            issuer_id=self.name,
            not_before=not_before,
            not_after=not_after,
            issuer_signature=b"",
        )
        sig = crypto.sign(self._keypair.private_key, unsigned.signing_input())
        cert = replace(unsigned, issuer_signature=sig)
        self._certs[serial] = cert
        return cert

    def revoke(self, serial: int, reason: RevocationReason, now: int) -> RevocationList:
        """Add a revocation entry; idempotent, the earliest entry wins."""
        if serial not in self._certs:
            raise UnknownSerial(f"serial {serial} was never issued")
        if serial not in self._revocations:
            self._revocations[serial] = RevocationEntry(serial, reason, now)
        self._revocation_list = self._sign_revocation_list(issued_at=now)
        return self._revocation_list


def create_consortium_root(name: str, seed: bytes) -> RootAuthority:
    return RootAuthority(name, crypto.generate_keypair(seed))


CERT_KIND_IDENTITY = "identity"
CERT_KIND_SIGNING = "signing"


def cert_kind(cert: Certificate) -> str:
    return CERT_KIND_IDENTITY if isinstance(cert, EvIdentityCertificate) else CERT_KIND_SIGNING


def cert_to_hex(cert: Certificate) -> str:
    return codec.canonical_encode(cert).hex()


def cert_from_hex(kind: str, data: str) -> Certificate:
    cls = EvIdentityCertificate if kind == CERT_KIND_IDENTITY else SigningCertificate
    return codec.canonical_decode(bytes.fromhex(data), cls)
