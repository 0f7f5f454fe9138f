"""Identifier resolution and federation between VASP resolver services.

Customers are reachable through email-style identifiers (local@domain),
payment identifiers with the "@" replaced by "$" (local$domain), or bare
public keys. Each VASP's resolver keeps a local table of its own customers'
identifiers and learns about other VASPs' customers through signed,
sequence-numbered full-state advertisements flooded over the federation,
newest advertisement per origin winning (link-state semantics).

Lookups answer with VASP numbers only; key material never flows back to a
caller, and callers must present a chain-valid consortium certificate.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from . import codec, crypto, pki


class ResolverError(Exception):
    pass


class Unparseable(ResolverError):
    pass


class IdpValidationFailed(ResolverError):
    """Identifier is not known to the identity provider that issued it."""


class UnknownCustomer(ResolverError):
    pass


class Unauthorized(ResolverError):
    """Caller certificate is missing, invalid or revoked."""


class IdentifierKind(Enum):
    EMAIL = "Email"
    PAY_ID = "PayId"
    BARE_PUBLIC_KEY = "BarePublicKey"


_DOMAIN_OK = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789.-")


def _valid_domain(domain: str) -> bool:
    return bool(domain) and not domain.startswith(".") and all(c in _DOMAIN_OK for c in domain)


@dataclass(frozen=True)
class CustomerIdentifier:
    kind: IdentifierKind
    local_part: str = ""
    domain_part: str = ""
    key_bytes: bytes = b""

    def render(self) -> str:
        """Canonical string form; domains compare case-insensitively,
        local parts are case-sensitive."""
        if self.kind is IdentifierKind.EMAIL:
            return f"{self.local_part}@{self.domain_part.lower()}"
        if self.kind is IdentifierKind.PAY_ID:
            return f"{self.local_part}${self.domain_part.lower()}"
        return f"key:{self.key_bytes.hex()}"

    def check(self) -> None:
        if self.kind is IdentifierKind.BARE_PUBLIC_KEY:
            if not self.key_bytes or self.local_part or self.domain_part:
                raise Unparseable("bare-key identifier carries only key bytes")
        else:
            if self.key_bytes:
                raise Unparseable("named identifier must not carry key bytes")
            if not self.local_part or not _valid_domain(self.domain_part):
                raise Unparseable("identifier needs local and domain parts")


def parse_identifier(s: str) -> CustomerIdentifier:
    """Classify an identifier string.

    "alice$acmepay.com" is a payment identifier, "bob@idp2.com" an email
    identifier, and 64 hex characters a bare public key.
    """
    if "$" in s:
        local, _, domain = s.rpartition("$")
        ident = CustomerIdentifier(IdentifierKind.PAY_ID, local, domain)
    elif "@" in s:
        local, _, domain = s.rpartition("@")
        ident = CustomerIdentifier(IdentifierKind.EMAIL, local, domain)
    else:
        hexpart = s[4:] if s.startswith("key:") else s
        try:
            key = bytes.fromhex(hexpart)
        except ValueError:
            raise Unparseable(f"not an identifier: {s!r}") from None
        if len(key) != crypto.PUBLIC_KEY_SIZE:
            raise Unparseable("bare key must be a 32-byte public key in hex")
        ident = CustomerIdentifier(IdentifierKind.BARE_PUBLIC_KEY, key_bytes=key)
    ident.check()
    return ident


@dataclass(frozen=True)
class IdentifierAdvertisement:
    """Full-state advertisement: one VASP number plus every customer
    identifier it currently serves, strictly increasing sequence."""

    vasp_number: int
    sequence: int
    identifiers: tuple[CustomerIdentifier, ...]
    signer_cert_serial: int
    signature: bytes

    def signing_input(self) -> bytes:
        return codec.struct_bytes(self, exclude=("signature",))


class MergeOutcome(Enum):
    APPLIED = "Applied"
    STALE = "Stale"
    REJECTED = "Rejected"


class IdpDirectory:
    """An identity provider's view of the identifiers it has issued."""

    def __init__(self, domain: str, known: set[str] | None = None):
        self.domain = domain.lower()
        self._known = {k for k in (known or set())}

    def add(self, identifier: str) -> None:
        self._known.add(parse_identifier(identifier).render())

    def knows(self, identifier: CustomerIdentifier) -> bool:
        return identifier.render() in self._known


class ResolverService:
    """One VASP's resolver: local registrations plus federated knowledge."""

    def __init__(self, vasp_number: int, customers: set[str]):
        self.vasp_number = vasp_number
        self._customers = customers
        self._local: dict[str, set[str]] = {}
        self._identifiers: dict[str, CustomerIdentifier] = {}
        self._remote: dict[int, IdentifierAdvertisement] = {}
        # Incrementally maintained identifier -> origins index so lookups
        # are plain map accesses, not scans over held advertisements.
        self._remote_index: dict[str, set[int]] = {}
        self._sequence = 0

    # -- local registration -------------------------------------------------

    def register_identifier(self, customer_id: str, identifier: CustomerIdentifier,
                            idp_directory: IdpDirectory | None = None) -> None:
        if customer_id not in self._customers:
            raise UnknownCustomer(customer_id)
        identifier.check()
        if idp_directory is not None and identifier.kind is IdentifierKind.EMAIL:
            if not idp_directory.knows(identifier):
                raise IdpValidationFailed(
                    f"{identifier.render()} is unknown at {idp_directory.domain}")
        rendered = identifier.render()
        self._local.setdefault(rendered, set()).add(customer_id)
        self._identifiers[rendered] = identifier

    def local_identifiers(self) -> list[str]:
        return sorted(self._local)

    def local_customers_for(self, identifier: CustomerIdentifier) -> set[str]:
        return set(self._local.get(identifier.render(), set()))

    # -- lookup ---------------------------------------------------------------

    def lookup(self, identifier: CustomerIdentifier,
               caller_cert: pki.Certificate,
               root_public_key: bytes,
               revocation_list: pki.RevocationList,
               now: int) -> list[int]:
        """Sorted VASP numbers known to serve the identifier.

        The response carries numbers only: never customer key material.
        """
        report = pki.validate_chain(caller_cert, root_public_key,
                                    revocation_list, now)
        if not report.valid:
            raise Unauthorized(f"caller certificate is {report.verdict.value}")
        rendered = identifier.render()
        hits = set(self._remote_index.get(rendered, ()))
        if rendered in self._local:
            hits.add(self.vasp_number)
        return sorted(hits)

    # -- federation -----------------------------------------------------------

    def build_advertisement(self, claims_private_key: bytes,
                            claims_cert_serial: int) -> IdentifierAdvertisement:
        self._sequence += 1
        identifiers = tuple(self._identifiers[r] for r in sorted(self._local))
        unsigned = IdentifierAdvertisement(
            vasp_number=self.vasp_number,
            sequence=self._sequence,
            identifiers=identifiers,
            signer_cert_serial=claims_cert_serial,
            signature=b"",
        )
        sig = crypto.sign(claims_private_key, unsigned.signing_input())
        return replace(unsigned, signature=sig)

    def merge_advertisement(self, adv: IdentifierAdvertisement,
                            origin_claims_cert: pki.SigningCertificate,
                            origin_identity_cert: pki.EvIdentityCertificate,
                            root_public_key: bytes,
                            revocation_list: pki.RevocationList,
                            now: int) -> MergeOutcome:
        """Apply an advertisement if authentic and newer than what we hold.

        Newest advertisement per origin is authoritative: the identifier
        list replaces the previous one wholesale, so withdrawn identifiers
        stop resolving to that origin.
        """
        if origin_claims_cert.serial != adv.signer_cert_serial:
            return MergeOutcome.REJECTED
        if not pki.validate_chain(origin_claims_cert, root_public_key,
                                  revocation_list, now,
                                  identity_cert=origin_identity_cert).valid:
            return MergeOutcome.REJECTED
        if origin_identity_cert.subject.vasp_number != adv.vasp_number:
            return MergeOutcome.REJECTED
        if not crypto.verify(origin_claims_cert.subject_public_key,
                             adv.signing_input(), adv.signature):
            return MergeOutcome.REJECTED
        if len({i.render() for i in adv.identifiers}) != len(adv.identifiers):
            return MergeOutcome.REJECTED

        held = self._remote.get(adv.vasp_number)
        if held is not None and adv.sequence <= held.sequence:
            return MergeOutcome.STALE
        if held is not None:
            for ident in held.identifiers:
                owners = self._remote_index.get(ident.render())
                if owners is not None:
                    owners.discard(adv.vasp_number)
                    if not owners:
                        del self._remote_index[ident.render()]
        for ident in adv.identifiers:
            self._remote_index.setdefault(ident.render(), set()).add(
                adv.vasp_number)
        self._remote[adv.vasp_number] = adv
        return MergeOutcome.APPLIED

    def known_advertisements(self) -> list[IdentifierAdvertisement]:
        """Latest advertisement held per remote origin, for re-flooding."""
        return [self._remote[n] for n in sorted(self._remote)]

    def resolve_map(self) -> dict[str, list[int]]:
        """Full identifier -> sorted VASP numbers view (local + federated)."""
        out: dict[str, set[int]] = {}
        for rendered in self._local:
            out.setdefault(rendered, set()).add(self.vasp_number)
        for rendered, origins in self._remote_index.items():
            out.setdefault(rendered, set()).update(origins)
        return {k: sorted(v) for k, v in sorted(out.items())}
