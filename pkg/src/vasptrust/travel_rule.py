"""Customer-information payloads exchanged between VASPs for asset transfers.

A payload carries the five required information items: originator name,
originator account, one identifying detail about the originator (a
geographic address, national identity number, customer identification
number, or date-and-place of birth), beneficiary name, and beneficiary
account. Payloads are signed with the sending VASP's claims-signing key,
exchanged before the on-chain transfer, and afterwards correlated to the
confirmed ledger transaction, batch transfers included. Consent from both
the originator and the beneficiary gates every exchange.

Payload, consent and correlation stores are append-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from . import codec, crypto, pki
from .ledger import Ledger, LedgerTx
from .resolver import CustomerIdentifier


class TravelRuleError(Exception):
    pass


class IncompleteOriginatorData(TravelRuleError):
    """Originator record lacks every accepted identifying detail."""


class UnknownCustomer(TravelRuleError):
    pass


class WrongCertPurpose(TravelRuleError):
    pass


class InvalidCert(TravelRuleError):
    pass


class NoMatch(TravelRuleError):
    pass


class AmbiguousMatch(TravelRuleError):
    """Two or more ledger outputs fit and no memo tag disambiguates."""


class IdentifyingKind(Enum):
    GEOGRAPHIC_ADDRESS = "GeographicAddress"
    NATIONAL_ID = "NationalId"
    CUSTOMER_NUMBER = "CustomerNumber"
    BIRTH_INFO = "BirthInfo"


@dataclass(frozen=True)
class IdentifyingInfo:
    """Exactly one identifying detail; ``extra`` is the birth place when
    kind is BIRTH_INFO (value then holds the birth date)."""

    kind: IdentifyingKind
    value: str
    extra: str = ""

    @property
    def present(self) -> bool:
        if self.kind is IdentifyingKind.BIRTH_INFO:
            return bool(self.value.strip()) and bool(self.extra.strip())
        return bool(self.value.strip())


class HintKind(Enum):
    MEMO_TAG = "MemoTag"
    KEY_AMOUNT = "KeyAmount"


@dataclass(frozen=True)
class CorrelationHint:
    """How the payload expects to be matched on-chain.

    MEMO_TAG: the submitting VASP tags the transaction with the payload id.
    KEY_AMOUNT: match the output paying ``expected_amount`` to
    ``expected_key`` (needed for batch transfers sharing one memo).
    """

    kind: HintKind
    expected_key: bytes | None = None
    expected_amount: int | None = None


@dataclass
class CustomerRecord:
    customer_id: str
    legal_name: str
    geographic_address: str | None = None
    national_id: str | None = None
    customer_number: str | None = None
    birth_info: tuple[str, str] | None = None  # (date, place)
    identifiers: list[CustomerIdentifier] = field(default_factory=list)
    wallet_ref: str | None = None

    def transfer_eligible(self) -> bool:
        return pick_identifying(self) is not None


def pick_identifying(customer: CustomerRecord) -> IdentifyingInfo | None:
    """First identifying detail present, in the required listing order."""
    if customer.geographic_address and customer.geographic_address.strip():
        return IdentifyingInfo(IdentifyingKind.GEOGRAPHIC_ADDRESS,
                               customer.geographic_address)
    if customer.national_id and customer.national_id.strip():
        return IdentifyingInfo(IdentifyingKind.NATIONAL_ID, customer.national_id)
    if customer.customer_number and customer.customer_number.strip():
        return IdentifyingInfo(IdentifyingKind.CUSTOMER_NUMBER,
                               customer.customer_number)
    if customer.birth_info and customer.birth_info[0].strip() and customer.birth_info[1].strip():
        return IdentifyingInfo(IdentifyingKind.BIRTH_INFO,
                               customer.birth_info[0], customer.birth_info[1])
    return None


@dataclass(frozen=True)
class TravelRulePayload:
    originator_name: str
    originator_account: str
    originator_identifying: IdentifyingInfo | None
    beneficiary_name: str
    beneficiary_account: str
    originating_vasp_number: int
    beneficiary_vasp_number: int
    amount: int
    correlation: CorrelationHint
    payload_id: bytes

    def content_bytes(self) -> bytes:
        return codec.struct_bytes(self, exclude=("payload_id",))


REQUIRED_FIELDS = (
    "originator_name",
    "originator_account",
    "originator_identifying",
    "beneficiary_name",
    "beneficiary_account",
)


@dataclass(frozen=True)
class FieldStatus:
    name: str
    present: bool


@dataclass(frozen=True)
class CompletenessReport:
    fields: tuple[FieldStatus, ...]

    @property
    def passed(self) -> bool:
        return all(f.present for f in self.fields)

    def missing(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields if not f.present)

    def summary(self) -> str:
        present = sum(1 for f in self.fields if f.present)
        return f"{present}/{len(self.fields)}"


def compute_payload_id(payload: TravelRulePayload) -> bytes:
    return crypto.digest(payload.content_bytes())


def build_payload(originator: CustomerRecord,
                  beneficiary_name: str,
                  beneficiary_account: str,
                  beneficiary_vasp_number: int,
                  amount: int,
                  originating_vasp_number: int,
                  hint: CorrelationHint | None = None) -> TravelRulePayload:
    identifying = pick_identifying(originator)
    if identifying is None:
        raise IncompleteOriginatorData(
            "originator needs a geographic address, national id, customer "
            "number, or date and place of birth")
    if amount <= 0:
        raise ValueError("amount must be a positive number of minor units")
    payload = TravelRulePayload(
        originator_name=originator.legal_name,
        originator_account=originator.customer_id,
        originator_identifying=identifying,
        beneficiary_name=beneficiary_name,
        beneficiary_account=beneficiary_account,
        originating_vasp_number=originating_vasp_number,
        beneficiary_vasp_number=beneficiary_vasp_number,
        amount=amount,
        correlation=hint or CorrelationHint(HintKind.MEMO_TAG),
        payload_id=b"",
    )
    return replace(payload, payload_id=compute_payload_id(payload))


def validate_payload(payload: TravelRulePayload) -> CompletenessReport:
    """Check the five required information items; pure and total."""
    statuses = []
    for name in REQUIRED_FIELDS:
        value = getattr(payload, name)
        if name == "originator_identifying":
            present = value is not None and value.present
        else:
            present = bool(value.strip())
        statuses.append(FieldStatus(name, present))
    return CompletenessReport(tuple(statuses))


@dataclass(frozen=True)
class SignedPayload:
    payload: TravelRulePayload
    signer_cert_serial: int
    signature: bytes


def sign_payload(claims_private_key: bytes,
                 claims_cert: pki.SigningCertificate,
                 payload: TravelRulePayload,
                 root_public_key: bytes,
                 revocation_list: pki.RevocationList,
                 now: int) -> SignedPayload:
    if claims_cert.purpose is not pki.CertPurpose.CLAIMS_SIGNING:
        raise WrongCertPurpose(
            f"payloads must be signed with a claims-signing key, "
            f"not {claims_cert.purpose.value}")
    report = pki.validate_chain(claims_cert, root_public_key, revocation_list, now)
    if not report.valid:
        raise InvalidCert(f"claims certificate is {report.verdict.value}")
    signature = crypto.sign(claims_private_key, codec.canonical_encode(payload))
    if not crypto.verify(claims_cert.subject_public_key,
                         codec.canonical_encode(payload), signature):
        raise InvalidCert("private key does not match the claims certificate")
    return SignedPayload(payload, claims_cert.serial, signature)


def verify_signed_payload(signed: SignedPayload,
                          claims_cert: pki.SigningCertificate,
                          root_public_key: bytes,
                          revocation_list: pki.RevocationList,
                          now: int) -> bool:
    """Bind the payload bytes to exactly one claims-signing certificate."""
    if claims_cert.serial != signed.signer_cert_serial:
        return False
    if claims_cert.purpose is not pki.CertPurpose.CLAIMS_SIGNING:
        return False
    if not pki.validate_chain(claims_cert, root_public_key,
                              revocation_list, now).valid:
        return False
    if signed.payload.payload_id != compute_payload_id(signed.payload):
        return False
    return crypto.verify(claims_cert.subject_public_key,
                         codec.canonical_encode(signed.payload),
                         signed.signature)


class ConsentDirection(Enum):
    SEND_INFO_TO_COUNTERPARTY = "SendInfoToCounterparty"
    RECEIVE_ASSETS = "ReceiveAssets"


@dataclass
class ConsentRecord:
    customer_id: str
    direction: ConsentDirection
    counterparty_vasp_number: int | None
    granted_at: int
    withdrawn_at: int | None = None

    def active(self, now: int) -> bool:
        if self.granted_at > now:
            return False
        return self.withdrawn_at is None or self.withdrawn_at > now

    def scope_matches(self, counterparty: int | None) -> bool:
        if self.counterparty_vasp_number is None:
            return True
        return self.counterparty_vasp_number == counterparty


class ConsentStore:
    """Append-only consent records for one VASP's customers.

    ``customers`` is a live reference to the owning VASP's customer-id set;
    consent can only be recorded for known customers.
    """

    def __init__(self, customers: set[str]):
        self._customers = customers
        self._records: list[ConsentRecord] = []

    @property
    def records(self) -> list[ConsentRecord]:
        return list(self._records)

    def record(self, customer_id: str, direction: ConsentDirection,
               counterparty: int | None, now: int) -> ConsentRecord:
        if customer_id not in self._customers:
            raise UnknownCustomer(customer_id)
        rec = ConsentRecord(customer_id, direction, counterparty, granted_at=now)
        self._records.append(rec)
        return rec

    def withdraw(self, customer_id: str, direction: ConsentDirection,
                 counterparty: int | None, now: int) -> None:
        if customer_id not in self._customers:
            raise UnknownCustomer(customer_id)
        for rec in self._records:
            if (rec.customer_id == customer_id and rec.direction is direction
                    and rec.counterparty_vasp_number == counterparty
                    and rec.active(now)):
                rec.withdrawn_at = now

    def check(self, customer_id: str, direction: ConsentDirection,
              counterparty: int | None, now: int) -> bool:
        """True iff an active, scope-matching consent record exists."""
        return any(
            rec.customer_id == customer_id
            and rec.direction is direction
            and rec.scope_matches(counterparty)
            and rec.active(now)
            for rec in self._records
        )


@dataclass(frozen=True)
class CorrelationRecord:
    payload_id: bytes
    tx_id: bytes
    output_index: int
    matched_at_height: int


class CorrelationStore:
    """Matches payloads to confirmed ledger outputs, each output at most once."""

    def __init__(self) -> None:
        self._consumed: set[tuple[bytes, int]] = set()
        self._records: dict[bytes, CorrelationRecord] = {}

    @property
    def records(self) -> list[CorrelationRecord]:
        return list(self._records.values())

    def correlate(self, payload: TravelRulePayload, ledger: Ledger,
                  window: tuple[int, int]) -> CorrelationRecord:
        """Find the unique confirmed (tx, output) this payload covers.

        Memo-tagged transactions match on tag equality with the payload id,
        narrowed by amount if the transaction pays several outputs;
        otherwise the expected (key, amount) pair from the hint must select
        exactly one unconsumed output inside the height window.
        """
        if not validate_payload(payload).passed:
            raise ValueError("payload must be complete before correlation")
        if payload.payload_id in self._records:
            return self._records[payload.payload_id]

        lo, hi = window
        hint = payload.correlation
        candidates: list[tuple[LedgerTx, int]] = []
        for tx in ledger.confirmed_txs(lo, hi):
            if hint.kind is HintKind.MEMO_TAG:
                if tx.memo_tag != payload.payload_id:
                    continue
                indexed = [
                    (tx, i) for i, out in enumerate(tx.outputs)
                    if (tx.tx_id, i) not in self._consumed
                ]
                if len(indexed) > 1:
                    narrowed = [(t, i) for t, i in indexed
                                if t.outputs[i].amount == payload.amount]
                    indexed = narrowed or indexed
                candidates.extend(indexed)
            else:
                for i, out in enumerate(tx.outputs):
                    if (tx.tx_id, i) in self._consumed:
                        continue
                    if (out.public_key == hint.expected_key
                            and out.amount == hint.expected_amount):
                        candidates.append((tx, i))

        if not candidates:
            raise NoMatch("no confirmed output matches this payload")
        if len(candidates) > 1:
            raise AmbiguousMatch(
                f"{len(candidates)} outputs match and no tag disambiguates")
        tx, index = candidates[0]
        record = CorrelationRecord(
            payload_id=payload.payload_id,
            tx_id=tx.tx_id,
            output_index=index,
            matched_at_height=ledger.height,
        )
        self._consumed.add((tx.tx_id, index))
        self._records[payload.payload_id] = record
        return record


def dump_payload_store(entries: list[tuple[str, SignedPayload]]) -> str:
    """Payload store as line-oriented text (direction, id, parties, amount)."""
    lines = []
    for direction, signed in entries:
        p = signed.payload
        lines.append(
            f"payload {direction} id={p.payload_id.hex()} "
            f"from=vasp:{p.originating_vasp_number} to=vasp:{p.beneficiary_vasp_number} "
            f"originator={p.originator_name!r} beneficiary={p.beneficiary_name!r} "
            f"amount={p.amount} signer_serial={signed.signer_cert_serial}")
    return "\n".join(lines) + ("\n" if lines else "")
