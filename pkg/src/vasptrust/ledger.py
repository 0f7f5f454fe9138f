"""Minimal simulated blockchain: confirmed transfers with queryable history.

Account model keyed by public key, with explicit input/output lists so a
single transaction can pay several beneficiaries (batch transfers from a
commingled account). Transactions wait in a mempool until confirm_block()
applies them atomically; value is conserved after genesis. An optional
32-byte memo tag on a transaction carries an opaque correlation handle.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Iterable, Mapping

from . import codec, crypto

MEMO_TAG_SIZE = 32
GENESIS_PREV_HASH = b"\x00" * crypto.DIGEST_SIZE


class LedgerError(Exception):
    pass


class InsufficientFunds(LedgerError):
    pass


class ValueMismatch(LedgerError):
    """Input and output sums differ; value would be created or destroyed."""


class BadSignature(LedgerError):
    pass


class TxNotFound(LedgerError):
    pass


@dataclass(frozen=True)
class TxEntry:
    public_key: bytes
    amount: int


@dataclass(frozen=True)
class LedgerTx:
    tx_id: bytes
    inputs: tuple[TxEntry, ...]
    outputs: tuple[TxEntry, ...]
    memo_tag: bytes | None
    signatures: tuple[bytes, ...]
    block_height: int  # 0 while unconfirmed

    def unsigned_bytes(self) -> bytes:
        return codec.struct_bytes(
            self, exclude=("tx_id", "signatures", "block_height"))

    def distinct_input_keys(self) -> list[bytes]:
        seen: list[bytes] = []
        for entry in self.inputs:
            if entry.public_key not in seen:
                seen.append(entry.public_key)
        return seen

    def is_batch(self) -> bool:
        return len({o.public_key for o in self.outputs}) > 1


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: bytes
    tx_ids: tuple[bytes, ...]
    block_hash: bytes


def _block_hash(height: int, prev_hash: bytes, tx_ids: tuple[bytes, ...]) -> bytes:
    return crypto.digest(codec.canonical_encode((height, prev_hash, list(tx_ids))))


def make_transfer(inputs: Iterable[tuple[bytes, int]],
                  outputs: Iterable[tuple[bytes, int]],
                  signers: Mapping[bytes, Callable[[bytes], bytes]],
                  memo_tag: bytes | None = None) -> LedgerTx:
    """Assemble and sign a transfer.

    ``signers`` maps each distinct input public key to a signing callable
    (a plain private key closure, or a trusted-hardware signing handle).
    """
    tx = LedgerTx(
        tx_id=b"",
        inputs=tuple(TxEntry(k, a) for k, a in inputs),
        outputs=tuple(TxEntry(k, a) for k, a in outputs),
        memo_tag=memo_tag,
        signatures=(),
        block_height=0,
    )
    unsigned = tx.unsigned_bytes()
    sigs = tuple(signers[key](unsigned) for key in tx.distinct_input_keys())
    return replace(tx, tx_id=crypto.digest(unsigned), signatures=sigs)


class Ledger:
    """Single-writer chain owned by the simulator event loop."""

    def __init__(self, genesis_allocations: Iterable[tuple[bytes, int]] = ()):
        self._balances: dict[bytes, int] = {}
        for key, amount in genesis_allocations:
            self._balances[key] = self._balances.get(key, 0) + amount
        self._blocks: list[Block] = [
            Block(0, GENESIS_PREV_HASH, (), _block_hash(0, GENESIS_PREV_HASH, ()))
        ]
        self._mempool: list[LedgerTx] = []
        self._pending_spend: dict[bytes, int] = {}
        self._tx_index: dict[bytes, LedgerTx] = {}

    @property
    def height(self) -> int:
        return self._blocks[-1].height

    @property
    def blocks(self) -> list[Block]:
        return list(self._blocks)

    def balance(self, public_key: bytes) -> int:
        return self._balances.get(public_key, 0)

    def total_supply(self) -> int:
        return sum(self._balances.values())

    def submit_transfer(self, tx: LedgerTx) -> bytes:
        self._validate(tx)
        self._mempool.append(tx)
        self._tx_index[tx.tx_id] = tx
        for entry in tx.inputs:
            self._pending_spend[entry.public_key] = (
                self._pending_spend.get(entry.public_key, 0) + entry.amount)
        return tx.tx_id

    def _validate(self, tx: LedgerTx) -> None:
        if any(e.amount <= 0 for e in tx.inputs) or any(e.amount <= 0 for e in tx.outputs):
            raise ValueMismatch("amounts must be positive")
        if sum(e.amount for e in tx.inputs) != sum(e.amount for e in tx.outputs):
            raise ValueMismatch("inputs and outputs must sum to the same value")
        if tx.memo_tag is not None and len(tx.memo_tag) != MEMO_TAG_SIZE:
            raise ValueMismatch(f"memo_tag must be {MEMO_TAG_SIZE} bytes")
        if tx.tx_id in self._tx_index:
            raise ValueMismatch("transaction already submitted")
        unsigned = tx.unsigned_bytes()
        if tx.tx_id != crypto.digest(unsigned):
            raise BadSignature("tx_id does not hash the unsigned transaction")
        keys = tx.distinct_input_keys()
        if len(tx.signatures) != len(keys):
            raise BadSignature("one signature per distinct input key required")
        for key, sig in zip(keys, tx.signatures):
            if not crypto.verify(key, unsigned, sig):
                raise BadSignature("input key signature does not verify")
        spend: dict[bytes, int] = {}
        for entry in tx.inputs:
            spend[entry.public_key] = spend.get(entry.public_key, 0) + entry.amount
        for key, amount in spend.items():
            available = self._balances.get(key, 0) - self._pending_spend.get(key, 0)
            if amount > available:
                raise InsufficientFunds(
                    f"spend {amount} exceeds available balance {available}")

    def confirm_block(self) -> Block:
        """Confirm every mempool transaction at a new height, atomically."""
        height = self.height + 1
        confirmed_ids = []
        for tx in self._mempool:
            for entry in tx.inputs:
                self._balances[entry.public_key] -= entry.amount
            for entry in tx.outputs:
                self._balances[entry.public_key] = (
                    self._balances.get(entry.public_key, 0) + entry.amount)
            confirmed = replace(tx, block_height=height)
            self._tx_index[tx.tx_id] = confirmed
            confirmed_ids.append(tx.tx_id)
        self._mempool.clear()
        self._pending_spend.clear()
        block = Block(
            height=height,
            prev_hash=self._blocks[-1].block_hash,
            tx_ids=tuple(confirmed_ids),
            block_hash=_block_hash(height, self._blocks[-1].block_hash,
                                   tuple(confirmed_ids)),
        )
        self._blocks.append(block)
        return block

    def query_tx(self, tx_id: bytes) -> LedgerTx:
        try:
            return self._tx_index[tx_id]
        except KeyError:
            raise TxNotFound(tx_id.hex()) from None

    def confirmed_txs(self, lo_height: int = 1, hi_height: int | None = None) -> list[LedgerTx]:
        hi = self.height if hi_height is None else hi_height
        out = []
        for block in self._blocks[1:]:
            if lo_height <= block.height <= hi:
                out.extend(self._tx_index[tx_id] for tx_id in block.tx_ids)
        return out

    def dump_chain(self) -> str:
        """Chain as line-oriented text, transaction ids in hex."""
        lines = []
        for block in self._blocks:
            lines.append(
                f"block height={block.height} hash={block.block_hash.hex()} "
                f"prev={block.prev_hash.hex()} txs={len(block.tx_ids)}")
            for tx_id in block.tx_ids:
                tx = self._tx_index[tx_id]
                memo = tx.memo_tag.hex() if tx.memo_tag else "-"
                ins = ",".join(f"{e.public_key.hex()[:16]}:{e.amount}" for e in tx.inputs)
                outs = ",".join(f"{e.public_key.hex()[:16]}:{e.amount}" for e in tx.outputs)
                lines.append(
                    f"  tx {tx_id.hex()} in=[{ins}] out=[{outs}] memo={memo}")
        return "\n".join(lines) + "\n"
