"""Simulated trusted-hardware wallet with remote attestation and boarding.

The device holds an attestation key whose private half never leaves it (no
operation returns it), a set of key slots tagged by origin (generated
internally vs imported) and migratability, and an ordered measurement log
whose running digest fingerprints the wallet's software stack. attest()
truthfully reports every slot, erased slots included, signed over a
verifier-chosen nonce.

Boarding procedures implement the acquiring/releasing VASP duties: check
prior wallet status against the shared registry, re-verify the keys'
on-chain history, flag migratable or imported keys, cut over to fresh
non-migratable keys on on-boarding, and prove erasure of supervised keys on
off-boarding before the wallet returns to private status.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from . import codec, crypto
from .ledger import Ledger, make_transfer

NONCE_SIZE = 32
BOOT_DIGEST_SEED = b"\x00" * crypto.DIGEST_SIZE


class WalletError(Exception):
    pass


class NonMigratable(WalletError):
    """The hardware refuses to export a non-migratable private key."""


class ErasedKey(WalletError):
    pass


class UnknownHandle(WalletError):
    pass


class AttestationRefused(WalletError):
    pass


class AttestationFailed(WalletError):
    pass


class NotSupervised(WalletError):
    pass


class ErasureNotProven(WalletError):
    """Post-erasure evidence still shows live supervised keys."""


class KeyOrigin(Enum):
    GENERATED_INTERNALLY = "GeneratedInternally"
    IMPORTED = "Imported"


@dataclass(frozen=True)
class KeyReport:
    handle: int
    public_key: bytes
    origin: KeyOrigin
    migratable: bool
    erased: bool


@dataclass(frozen=True)
class StackReport:
    measurement_log: tuple[tuple[str, bytes], ...]
    boot_digest: bytes


@dataclass(frozen=True)
class AttestationEvidence:
    device_id: str
    nonce: bytes
    key_reports: tuple[KeyReport, ...]
    stack_report: StackReport
    signed_at: int
    signature: bytes

    def signing_input(self) -> bytes:
        return codec.struct_bytes(self, exclude=("signature",))


def fold_boot_digest(log: tuple[tuple[str, bytes], ...]) -> bytes:
    acc = BOOT_DIGEST_SEED
    for name, measurement in log:
        acc = crypto.digest(acc + codec.canonical_encode(name) + measurement)
    return acc


class WalletDevice:
    """Trusted hardware: key slots, measured stack, truthful attestation.

    Private key material lives in a table separate from the reported slot
    records; no public operation ever returns the attestation key or a
    non-migratable slot's private half.
    """

    def __init__(self, device_id: str, seed: bytes,
                 initial_stack: list[tuple[str, bytes]],
                 attestation_enabled: bool = True):
        self.device_id = device_id
        self._seed = seed
        self._counter = 0
        self._attestation = crypto.generate_keypair(
            crypto.derive_seed(seed, "attestation-key"))
        self._slots: dict[int, KeyReport] = {}
        self._private: dict[int, bytes] = {}
        self.measurement_log: tuple[tuple[str, bytes], ...] = tuple(initial_stack)
        self.boot_digest = fold_boot_digest(self.measurement_log)
        self.attestation_enabled = attestation_enabled

    @property
    def attestation_public_key(self) -> bytes:
        return self._attestation.public_key

    def handles(self) -> list[int]:
        return sorted(self._slots)

    def slot(self, handle: int) -> KeyReport:
        try:
            return self._slots[handle]
        except KeyError:
            raise UnknownHandle(f"no key slot {handle}") from None

    def public_keys(self, include_erased: bool = False) -> list[bytes]:
        return [s.public_key for h, s in sorted(self._slots.items())
                if include_erased or not s.erased]

    def generate_key(self, migratable: bool) -> int:
        self._counter += 1
        handle = self._counter
        pair = crypto.generate_keypair(
            crypto.derive_seed(self._seed, f"slot:{handle}"))
        self._slots[handle] = KeyReport(
            handle, pair.public_key, KeyOrigin.GENERATED_INTERNALLY,
            migratable, erased=False)
        self._private[handle] = pair.private_key
        return handle

    def import_key(self, keypair: crypto.KeyPair) -> int:
        # Imported private material existed outside the hardware, so the
        # slot is unconditionally migratable.
        self._counter += 1
        handle = self._counter
        self._slots[handle] = KeyReport(
            handle, keypair.public_key, KeyOrigin.IMPORTED,
            migratable=True, erased=False)
        self._private[handle] = keypair.private_key
        return handle

    def export_key(self, handle: int) -> crypto.KeyPair:
        slot = self.slot(handle)
        if slot.erased:
            raise ErasedKey(f"slot {handle} is erased")
        if not slot.migratable:
            raise NonMigratable(f"slot {handle} cannot be extracted")
        return crypto.KeyPair(crypto.SIGNATURE_SCHEME, slot.public_key,
                              self._private[handle])

    def erase_key(self, handle: int) -> None:
        """Destroy the private half; the slot stays visible, flagged erased."""
        slot = self.slot(handle)
        if not slot.erased:
            self._slots[handle] = replace(slot, erased=True)
            self._private.pop(handle, None)

    def sign(self, handle: int, message: bytes) -> bytes:
        slot = self.slot(handle)
        if slot.erased:
            raise ErasedKey(f"slot {handle} is erased and cannot sign")
        return crypto.sign(self._private[handle], message)

    def signer(self, handle: int):
        return lambda message: self.sign(handle, message)

    def attest(self, nonce: bytes, now: int = 0) -> AttestationEvidence:
        """Signed, truthful report of every slot and the measured stack."""
        if not self.attestation_enabled:
            raise AttestationRefused(f"{self.device_id} will not attest")
        if len(nonce) != NONCE_SIZE:
            raise ValueError(f"nonce must be {NONCE_SIZE} bytes")
        unsigned = AttestationEvidence(
            device_id=self.device_id,
            nonce=nonce,
            key_reports=tuple(self._slots[h] for h in sorted(self._slots)),
            stack_report=StackReport(self.measurement_log, self.boot_digest),
            signed_at=now,
            signature=b"",
        )
        sig = crypto.sign(self._attestation.private_key, unsigned.signing_input())
        return replace(unsigned, signature=sig)


@dataclass(frozen=True)
class VerifierVerdict:
    signature_ok: bool
    nonce_fresh: bool
    stack_approved: bool
    key_findings: tuple[str, ...]

    @property
    def passed(self) -> bool:
        return self.signature_ok and self.nonce_fresh and self.stack_approved


def verify_evidence(evidence: AttestationEvidence,
                    expected_nonce: bytes,
                    device_attestation_public_key: bytes,
                    approved_stack_digests: set[bytes]) -> VerifierVerdict:
    """Check evidence authenticity, freshness and stack approval.

    Key findings (imported or migratable keys present) are reported but do
    not fail the verdict; the risk decision belongs to the caller.
    """
    signature_ok = crypto.verify(device_attestation_public_key,
                                 evidence.signing_input(), evidence.signature)
    nonce_fresh = evidence.nonce == expected_nonce
    stack = evidence.stack_report
    stack_approved = (fold_boot_digest(stack.measurement_log) == stack.boot_digest
                      and stack.boot_digest in approved_stack_digests)
    findings = []
    for report in evidence.key_reports:
        if report.origin is KeyOrigin.IMPORTED:
            findings.append(f"imported key present (handle {report.handle})")
        elif report.migratable and not report.erased:
            findings.append(f"migratable key present (handle {report.handle})")
    return VerifierVerdict(signature_ok, nonce_fresh, stack_approved,
                           tuple(findings))


class WalletClass(Enum):
    REGULATED = "Regulated"
    PRIVATE = "Private"


@dataclass(frozen=True)
class WalletStatus:
    classification: WalletClass
    supervising_vasp_number: int | None
    since: int


class WalletRegistry:
    """Consortium-shared table of wallet regulatory status, by device id."""

    def __init__(self) -> None:
        self._status: dict[str, WalletStatus] = {}

    def status(self, device_id: str) -> WalletStatus:
        return self._status.get(device_id,
                                WalletStatus(WalletClass.PRIVATE, None, 0))

    def set_regulated(self, device_id: str, vasp_number: int, now: int) -> None:
        self._status[device_id] = WalletStatus(WalletClass.REGULATED,
                                               vasp_number, now)

    def set_private(self, device_id: str, now: int) -> None:
        self._status[device_id] = WalletStatus(WalletClass.PRIVATE, None, now)


@dataclass(frozen=True)
class CheckResult:
    passed: bool
    detail: str


@dataclass(frozen=True)
class KeyTransition:
    old_handles: tuple[int, ...]
    new_handle: int


class BoardingDirection(Enum):
    ON_BOARD = "OnBoard"
    OFF_BOARD = "OffBoard"


@dataclass(frozen=True)
class BoardingReport:
    customer_id: str
    direction: BoardingDirection
    prior_status_check: CheckResult
    key_history_check: CheckResult
    migration_check: CheckResult
    key_transition: KeyTransition | None
    erasure_evidence: AttestationEvidence | None
    accepted: bool
    reason: str = ""


@dataclass
class OnboardPolicy:
    # Default: refuse wallets whose imported keys still hold assets.
    reject_imported_with_assets: bool = True
    reject_migratable_with_assets: bool = False


@dataclass
class SupervisionRecord:
    """A VASP's record of one supervised wallet."""

    customer_id: str
    device_id: str
    supervised_handles: list[int]
    since: int
    checkpoints: list[AttestationEvidence] = field(default_factory=list)


def check_key_history(device: WalletDevice, ledger: Ledger) -> CheckResult:
    """Re-verify that every confirmed spend from a wallet key was genuinely
    signed by that key (the customer's historical transactions add up)."""
    wallet_keys = set(device.public_keys(include_erased=True))
    checked = 0
    for tx in ledger.confirmed_txs():
        keys = tx.distinct_input_keys()
        for key, sig in zip(keys, tx.signatures):
            if key in wallet_keys:
                checked += 1
                if not crypto.verify(key, tx.unsigned_bytes(), sig):
                    return CheckResult(False,
                                       f"tx {tx.tx_id.hex()[:16]} spend from "
                                       f"wallet key has a bad signature")
    return CheckResult(True, f"{checked} historical spends verified")


def _migration_findings(evidence: AttestationEvidence) -> list[KeyReport]:
    return [r for r in evidence.key_reports
            if not r.erased and (r.origin is KeyOrigin.IMPORTED or r.migratable)]


def onboard_customer(acquiring_vasp_number: int,
                     customer_id: str,
                     device: WalletDevice,
                     ledger: Ledger,
                     registry: WalletRegistry,
                     nonce: bytes,
                     now: int,
                     policy: OnboardPolicy | None = None
                     ) -> tuple[BoardingReport, SupervisionRecord | None]:
    """Acquire a customer's wallet under supervision.

    Validates prior status and key history, evaluates migratable/imported
    keys against policy, then cuts assets over to a freshly generated
    non-migratable key so responsibility starts on a clean key. The asset
    move is submitted to the ledger mempool; the caller confirms the block.
    """
    policy = policy or OnboardPolicy()
    try:
        evidence = device.attest(nonce, now)
    except AttestationRefused as exc:
        raise AttestationFailed(str(exc)) from exc
    if not crypto.verify(device.attestation_public_key,
                         evidence.signing_input(), evidence.signature):
        raise AttestationFailed("attestation evidence does not verify")

    prior = registry.status(device.device_id)
    prior_check = CheckResult(
        prior.classification is WalletClass.PRIVATE
        or prior.supervising_vasp_number == acquiring_vasp_number,
        f"prior status {prior.classification.value}"
        + (f" under vasp {prior.supervising_vasp_number}"
           if prior.supervising_vasp_number is not None else ""))
    history_check = check_key_history(device, ledger)

    flagged = _migration_findings(evidence)
    flagged_with_assets = [r for r in flagged if ledger.balance(r.public_key) > 0]
    rejects = []
    if policy.reject_imported_with_assets:
        rejects += [r for r in flagged_with_assets if r.origin is KeyOrigin.IMPORTED]
    if policy.reject_migratable_with_assets:
        rejects += [r for r in flagged_with_assets if r.migratable]
    migration_check = CheckResult(
        not rejects,
        "clean" if not flagged else "; ".join(
            f"handle {r.handle} {r.origin.value}"
            f"{' migratable' if r.migratable else ''}"
            f"{' holding assets' if r in flagged_with_assets else ''}"
            for r in flagged))

    if not (prior_check.passed and history_check.passed and migration_check.passed):
        failed = [name for name, check in (
            ("prior-status", prior_check), ("key-history", history_check),
            ("migration", migration_check)) if not check.passed]
        report = BoardingReport(
            customer_id, BoardingDirection.ON_BOARD, prior_check,
            history_check, migration_check, key_transition=None,
            erasure_evidence=None, accepted=False,
            reason=f"failed checks: {', '.join(failed)}")
        return report, None

    old_handles = tuple(h for h in device.handles() if not device.slot(h).erased)
    new_handle = device.generate_key(migratable=False)
    new_key = device.slot(new_handle).public_key
    for handle in old_handles:
        balance = ledger.balance(device.slot(handle).public_key)
        if balance > 0:
            old_key = device.slot(handle).public_key
            ledger.submit_transfer(make_transfer(
                inputs=[(old_key, balance)],
                outputs=[(new_key, balance)],
                signers={old_key: device.signer(handle)}))

    registry.set_regulated(device.device_id, acquiring_vasp_number, now)
    report = BoardingReport(
        customer_id, BoardingDirection.ON_BOARD, prior_check, history_check,
        migration_check,
        key_transition=KeyTransition(old_handles, new_handle),
        erasure_evidence=None, accepted=True)
    supervision = SupervisionRecord(customer_id, device.device_id,
                                    [new_handle], now, [evidence])
    return report, supervision


def offboard_customer(releasing_vasp_number: int,
                      customer_id: str,
                      device: WalletDevice,
                      ledger: Ledger,
                      registry: WalletRegistry,
                      supervision: SupervisionRecord,
                      nonce: bytes,
                      now: int) -> BoardingReport:
    """Release a supervised wallet back to private status.

    Assets move to one migratable handoff key (ending the VASP's Travel
    Rule responsibility), every supervised non-migratable key is erased,
    and fresh evidence must prove the erasure before acceptance.
    """
    status = registry.status(device.device_id)
    if (status.classification is not WalletClass.REGULATED
            or status.supervising_vasp_number != releasing_vasp_number
            or supervision.customer_id != customer_id
            or supervision.device_id != device.device_id):
        raise NotSupervised(
            f"{device.device_id} is not supervised by vasp {releasing_vasp_number}")

    prior_check = CheckResult(
        True,
        f"regulated since {supervision.since}, "
        f"{len(supervision.checkpoints)} attestation checkpoints on record")
    history_check = check_key_history(device, ledger)

    handoff_handle = device.generate_key(migratable=True)
    handoff_key = device.slot(handoff_handle).public_key
    moved = 0
    for handle in supervision.supervised_handles:
        slot = device.slot(handle)
        balance = ledger.balance(slot.public_key)
        if balance > 0 and not slot.erased:
            ledger.submit_transfer(make_transfer(
                inputs=[(slot.public_key, balance)],
                outputs=[(handoff_key, balance)],
                signers={slot.public_key: device.signer(handle)}))
            moved += balance
    ledger.confirm_block()

    to_erase = [h for h in supervision.supervised_handles
                if not device.slot(h).migratable]
    for handle in to_erase:
        device.erase_key(handle)

    try:
        evidence = device.attest(nonce, now)
    except AttestationRefused as exc:
        raise AttestationFailed(str(exc)) from exc
    reported = {r.handle: r for r in evidence.key_reports}
    still_live = [h for h in to_erase
                  if h not in reported or not reported[h].erased]
    if still_live:
        raise ErasureNotProven(
            f"supervised non-migratable handles still live: {still_live}")

    registry.set_private(device.device_id, now)
    return BoardingReport(
        customer_id, BoardingDirection.OFF_BOARD, prior_check, history_check,
        migration_check=CheckResult(True, f"moved {moved} units to handoff key"),
        key_transition=KeyTransition(tuple(supervision.supervised_handles),
                                     handoff_handle),
        erasure_evidence=evidence, accepted=True)


def take_checkpoint(supervision: SupervisionRecord, device: WalletDevice,
                    nonce: bytes, now: int) -> AttestationEvidence:
    evidence = device.attest(nonce, now)
    supervision.checkpoints.append(evidence)
    return evidence
