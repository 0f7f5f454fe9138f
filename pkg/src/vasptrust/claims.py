"""Customer-managed claims store with authorization tokens and consent receipts.

A claims provider issues signed attribute assertions (for example a driving
license number) with a validity window. The customer keeps them in a
personal claims store and controls access through a single active policy:
which VASPs may read, which attributes, and for what purpose. A VASP first
obtains an authorization token scoped by that policy, then presents it to
the store; every successful retrieval atomically produces a consent receipt
naming the released attributes, which the VASP keeps as exculpatory
evidence. The customer can withdraw consent at any time, after which
fetches release nothing; previously issued receipts remain on record.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from . import codec, crypto, pki

TOKEN_LIFETIME = 300  # simulated seconds; short so expiry paths get exercised


class ClaimsError(Exception):
    pass


class NotOwner(ClaimsError):
    pass


class InvalidCert(ClaimsError):
    pass


class TokenExpired(ClaimsError):
    pass


class ConsentWithdrawn(ClaimsError):
    pass


class BadToken(ClaimsError):
    pass


class ClaimVerdict(Enum):
    VALID = "Valid"
    EXPIRED = "Expired"
    NOT_YET_VALID = "NotYetValid"
    BAD_SIGNATURE = "BadSignature"


@dataclass(frozen=True)
class SignedClaim:
    claim_id: bytes
    subject_customer_ref: str
    attribute_name: str
    attribute_value: str
    issuer: str
    not_before: int
    not_after: int
    issuer_signature: bytes

    def signing_input(self) -> bytes:
        return codec.struct_bytes(self, exclude=("claim_id", "issuer_signature"))


class ClaimsProvider:
    """Authoritative issuer of signed attribute claims."""

    def __init__(self, name: str, seed: bytes):
        self.name = name
        self._keypair = crypto.generate_keypair(seed)

    @property
    def public_key(self) -> bytes:
        return self._keypair.public_key

    def issue_claim(self, subject: str, attribute: str, value: str,
                    not_before: int, not_after: int) -> SignedClaim:
        if not_before >= not_after:
            raise ValueError("claim validity interval is empty")
        unsigned = SignedClaim(b"", subject, attribute, value, self.name,
                               not_before, not_after, b"")
        body = unsigned.signing_input()
        return replace(unsigned,
                       claim_id=crypto.digest(body),
                       issuer_signature=crypto.sign(self._keypair.private_key, body))


def verify_claim(claim: SignedClaim, provider_public_key: bytes,
                 now: int) -> ClaimVerdict:
    if not crypto.verify(provider_public_key, claim.signing_input(),
                         claim.issuer_signature):
        return ClaimVerdict.BAD_SIGNATURE
    if now < claim.not_before:
        return ClaimVerdict.NOT_YET_VALID
    if now >= claim.not_after:
        return ClaimVerdict.EXPIRED
    return ClaimVerdict.VALID


@dataclass
class AccessPolicy:
    owner_customer_ref: str
    allowed_vasp_numbers: frozenset[int]
    readable_attributes: frozenset[str]
    usage_purpose: str
    withdrawable: bool = True
    active: bool = True


class DenialReason(Enum):
    NOT_ALLOWED = "NotAllowed"
    SCOPE_EXCEEDED = "ScopeExceeded"
    PURPOSE_MISMATCH = "PurposeMismatch"
    POLICY_INACTIVE = "PolicyInactive"


@dataclass(frozen=True)
class Denial:
    reason: DenialReason
    detail: str = ""


@dataclass(frozen=True)
class AuthorizationToken:
    token_id: bytes
    audience_vasp_number: int
    permitted_attributes: tuple[str, ...]
    purpose: str
    issued_at: int
    expires_at: int
    signature: bytes

    def signing_input(self) -> bytes:
        return codec.struct_bytes(self, exclude=("token_id", "signature"))


@dataclass(frozen=True)
class ConsentReceipt:
    receipt_id: bytes
    token_id: bytes
    vasp_number: int
    attributes_released: tuple[str, ...]
    purpose: str
    issued_at: int
    signature: bytes

    def signing_input(self) -> bytes:
        return codec.struct_bytes(self, exclude=("receipt_id", "signature"))


@dataclass(frozen=True)
class AuditEntry:
    at: int
    event: str
    detail: str


class ClaimsStore:
    """One customer's claims plus the audit trail of every access."""

    def __init__(self, owner: str, seed: bytes, authorization_server_key: bytes):
        self.owner = owner
        self._keypair = crypto.generate_keypair(seed)
        self._auth_server_key = authorization_server_key
        self._claims: list[SignedClaim] = []
        self._policy: AccessPolicy | None = None
        self._receipts: list[ConsentReceipt] = []
        self._audit: list[AuditEntry] = []

    @property
    def public_key(self) -> bytes:
        return self._keypair.public_key

    @property
    def policy(self) -> AccessPolicy | None:
        return self._policy

    @property
    def receipts(self) -> list[ConsentReceipt]:
        return list(self._receipts)

    @property
    def audit_log(self) -> list[AuditEntry]:
        return list(self._audit)

    def add_claim(self, claim: SignedClaim) -> None:
        self._claims.append(claim)

    def set_policy(self, owner: str, policy: AccessPolicy, now: int = 0) -> None:
        """Replace the active policy; only the store owner may do this."""
        if owner != self.owner or policy.owner_customer_ref != self.owner:
            raise NotOwner(f"{owner!r} does not own this store")
        self._policy = policy
        self._audit.append(AuditEntry(now, "policy_set",
                                      f"attrs={sorted(policy.readable_attributes)} "
                                      f"vasps={sorted(policy.allowed_vasp_numbers)}"))

    def revoke_consent(self, owner: str, now: int) -> None:
        if owner != self.owner:
            raise NotOwner(f"{owner!r} does not own this store")
        if self._policy is not None and self._policy.active:
            self._policy.active = False
            self._audit.append(AuditEntry(now, "consent_revoked", ""))

    def fetch_claims(self, token: AuthorizationToken,
                     now: int) -> tuple[list[SignedClaim], ConsentReceipt]:
        """Release the permitted, currently valid claims and issue a receipt.

        The receipt is created atomically with the release; no attribute
        ever leaves the store without a receipt row and an audit entry.
        """
        body = token.signing_input()
        if token.token_id != crypto.digest(body) or not crypto.verify(
                self._auth_server_key, body, token.signature):
            raise BadToken("token signature does not verify")
        if now >= token.expires_at:
            raise TokenExpired(f"token expired at {token.expires_at}")
        if self._policy is None or not self._policy.active:
            self._audit.append(AuditEntry(now, "fetch_refused", "consent withdrawn"))
            raise ConsentWithdrawn("owner has withdrawn access consent")

        permitted = set(token.permitted_attributes)
        released = [
            c for c in self._claims
            if c.attribute_name in permitted and c.not_before <= now < c.not_after
        ]
        receipt = self._issue_receipt(token, released, now)
        self._audit.append(AuditEntry(
            now, "claims_released",
            f"token={token.token_id.hex()[:16]} "
            f"attrs={sorted({c.attribute_name for c in released})}"))
        return released, receipt

    def _issue_receipt(self, token: AuthorizationToken,
                       released: list[SignedClaim], now: int) -> ConsentReceipt:
        unsigned = ConsentReceipt(
            receipt_id=b"",
            token_id=token.token_id,
            vasp_number=token.audience_vasp_number,
            attributes_released=tuple(sorted({c.attribute_name for c in released})),
            purpose=token.purpose,
            issued_at=now,
            signature=b"",
        )
        body = unsigned.signing_input()
        receipt = replace(unsigned,
                          receipt_id=crypto.digest(body),
                          signature=crypto.sign(self._keypair.private_key, body))
        self._receipts.append(receipt)
        return receipt

    def verify_receipt(self, receipt: ConsentReceipt) -> bool:
        return (receipt.receipt_id == crypto.digest(receipt.signing_input())
                and crypto.verify(self._keypair.public_key,
                                  receipt.signing_input(), receipt.signature))


class AuthorizationServer:
    """Issues policy-scoped authorization tokens to authenticated VASPs."""

    def __init__(self, seed: bytes, store: ClaimsStore | None = None):
        self._keypair = crypto.generate_keypair(seed)
        self._store = store

    def bind_store(self, store: ClaimsStore) -> None:
        self._store = store

    @property
    def public_key(self) -> bytes:
        return self._keypair.public_key

    def request_authorization(self, requester_cert: pki.EvIdentityCertificate,
                              attributes: set[str], purpose: str, now: int,
                              root_public_key: bytes,
                              revocation_list: pki.RevocationList,
                              lifetime: int = TOKEN_LIFETIME
                              ) -> AuthorizationToken | Denial:
        report = pki.validate_chain(requester_cert, root_public_key,
                                    revocation_list, now)
        if not report.valid:
            raise InvalidCert(f"requester certificate is {report.verdict.value}")
        if self._store is None:
            raise ClaimsError("no claims store bound to this server")
        policy = self._store.policy
        if policy is None or not policy.active:
            return Denial(DenialReason.POLICY_INACTIVE)
        vasp_number = requester_cert.subject.vasp_number
        if vasp_number not in policy.allowed_vasp_numbers:
            return Denial(DenialReason.NOT_ALLOWED,
                          f"vasp {vasp_number} is not an allowed reader")
        if not attributes <= policy.readable_attributes:
            extra = sorted(attributes - policy.readable_attributes)
            return Denial(DenialReason.SCOPE_EXCEEDED, f"not readable: {extra}")
        if purpose != policy.usage_purpose:
            return Denial(DenialReason.PURPOSE_MISMATCH,
                          f"policy purpose is {policy.usage_purpose!r}")
        unsigned = AuthorizationToken(
            token_id=b"",
            audience_vasp_number=vasp_number,
            permitted_attributes=tuple(sorted(attributes)),
            purpose=purpose,
            issued_at=now,
            expires_at=now + lifetime,
            signature=b"",
        )
        body = unsigned.signing_input()
        return replace(unsigned,
                       token_id=crypto.digest(body),
                       signature=crypto.sign(self._keypair.private_key, body))
