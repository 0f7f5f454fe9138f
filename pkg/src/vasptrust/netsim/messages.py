"""Protocol message bodies carried over authenticated channels.

Every body is a frozen dataclass with a canonical encoding; the envelope
body field is the tagged union of all of them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from ..claims import AuthorizationToken, ConsentReceipt, SignedClaim
from ..resolver import IdentifierAdvertisement
from ..travel_rule import SignedPayload
from ..wallet import AttestationEvidence


@dataclass(frozen=True)
class TravelRuleRequest:
    signed: SignedPayload


@dataclass(frozen=True)
class TravelRuleResponse:
    ack_payload_id: bytes
    accepted: bool
    reason: str
    signed: SignedPayload | None


@dataclass(frozen=True)
class LookupRequest:
    request_seq: int
    identifier: str


@dataclass(frozen=True)
class LookupResponse:
    # Numbers only: the shape of this message cannot carry key material.
    request_seq: int
    vasp_numbers: tuple[int, ...]
    error: str


@dataclass(frozen=True)
class AdvertisementFlood:
    advertisement: IdentifierAdvertisement


@dataclass(frozen=True)
class ClaimsAuthRequest:
    attributes: tuple[str, ...]
    purpose: str


@dataclass(frozen=True)
class ClaimsAuthResponse:
    token: AuthorizationToken | None
    denial_reason: str


@dataclass(frozen=True)
class ClaimsFetchRequest:
    token: AuthorizationToken
    # The requesting VASP countersigns the usage purpose with its
    # claims-signing key: its agreement to the terms of use.
    terms_signature: bytes
    vasp_claims_cert_serial: int


@dataclass(frozen=True)
class ClaimsFetchResponse:
    claims: tuple[SignedClaim, ...]
    receipt: ConsentReceipt | None
    error: str


@dataclass(frozen=True)
class AttestationChallenge:
    device_id: str
    nonce: bytes


@dataclass(frozen=True)
class AttestationResponse:
    device_id: str
    evidence: AttestationEvidence | None
    error: str


MessageBody = Union[
    TravelRuleRequest,
    TravelRuleResponse,
    LookupRequest,
    LookupResponse,
    AdvertisementFlood,
    ClaimsAuthRequest,
    ClaimsAuthResponse,
    ClaimsFetchRequest,
    ClaimsFetchResponse,
    AttestationChallenge,
    AttestationResponse,
]
