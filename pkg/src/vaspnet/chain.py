"""Minimal append-only ledger with hash-chained blocks.

Transactions confirm after a fixed delay and are final: there is no API to
cancel, reverse, or remove a confirmed transaction. Balances are not
enforced; the ledger records identity and amount flows, nothing else.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import crypto
from .crypto import KeyPair, canonical_encode, digest, enc_str, enc_u64

NONCE_LEN = 8
GENESIS_HASH = bytes(crypto.HASH_LEN)

DEFAULT_CONFIRMATION_DELAY = 3


@dataclass(frozen=True)
class ChainTransaction:
    from_public_key: bytes
    to_public_key: bytes
    amount: int
    asset_type: str
    nonce: bytes
    submitter_signature: bytes

    def signed_payload(self) -> bytes:
        return canonical_encode([
            (1, self.from_public_key),
            (2, self.to_public_key),
            (3, enc_u64(self.amount)),
            (4, enc_str(self.asset_type)),
            (5, self.nonce),
        ])

    def to_bytes(self) -> bytes:
        return self.signed_payload() + canonical_encode([(6, self.submitter_signature)])

    @property
    def tx_id(self) -> bytes:
        return digest(self.to_bytes())


def build_transaction(
    signing_key: KeyPair | bytes,
    from_public_key: bytes,
    to_public_key: bytes,
    amount: int,
    asset_type: str,
    nonce: bytes,
) -> ChainTransaction:
    """Assemble and sign a transaction with the sender's key."""
    unsigned = ChainTransaction(
        from_public_key=from_public_key,
        to_public_key=to_public_key,
        amount=amount,
        asset_type=asset_type,
        nonce=nonce,
        submitter_signature=b"",
    )
    signature = crypto.sign(signing_key, unsigned.signed_payload())
    return ChainTransaction(**{**unsigned.__dict__, "submitter_signature": signature})


@dataclass(frozen=True)
class SubmitResult:
    accepted: bool
    tx_id: Optional[bytes] = None
    reason: Optional[str] = None


@dataclass(frozen=True)
class Block:
    tick: int
    transactions: tuple[ChainTransaction, ...]
    previous_hash: bytes
    block_hash: bytes


@dataclass(frozen=True)
class ConfirmationEvent:
    transaction: ChainTransaction
    confirmed_tick: int
    block_index: int


def _block_hash(previous_hash: bytes, tick: int, txs: tuple[ChainTransaction, ...]) -> bytes:
    body = previous_hash + enc_u64(tick) + b"".join(tx.to_bytes() for tx in txs)
    return digest(body)


class SimChain:
    """Single simulated chain; one logical actor, ticked by the harness."""

    def __init__(
        self,
        chain_id: str = "simchain",
        confirmation_delay: int = DEFAULT_CONFIRMATION_DELAY,
    ) -> None:
        if confirmation_delay < 1:
            raise ValueError("confirmation delay must be at least 1 tick")
        self.chain_id = chain_id
        self.confirmation_delay = confirmation_delay
        self.blocks: list[Block] = []
        self._pending: list[tuple[ChainTransaction, int]] = []
        self._seen: set[bytes] = set()

    def submit_transaction(self, tx: ChainTransaction, now: int) -> SubmitResult:
        if not crypto.verify(tx.from_public_key, tx.signed_payload(), tx.submitter_signature):
            return SubmitResult(accepted=False, reason="BadSignature")
        tx_id = tx.tx_id
        if tx_id in self._seen:
            return SubmitResult(accepted=False, reason="Duplicate")
        self._seen.add(tx_id)
        self._pending.append((tx, now))
        return SubmitResult(accepted=True, tx_id=tx_id)

    def tick(self, now: int) -> list[ConfirmationEvent]:
        """Seal pending transactions older than the confirmation delay.

        At most one block per tick; an empty ready set produces no block.
        """
        ready = [tx for tx, submitted in self._pending if now - submitted >= self.confirmation_delay]
        if not ready:
            return []
        self._pending = [
            (tx, submitted)
            for tx, submitted in self._pending
            if now - submitted < self.confirmation_delay
        ]
        previous = self.blocks[-1].block_hash if self.blocks else GENESIS_HASH
        txs = tuple(ready)
        block = Block(
            tick=now,
            transactions=txs,
            previous_hash=previous,
            block_hash=_block_hash(previous, now, txs),
        )
        self.blocks.append(block)
        index = len(self.blocks) - 1
        return [ConfirmationEvent(tx, now, index) for tx in txs]

    def verify_chain(self) -> bool:
        """Recompute the hash chain and every transaction signature end to end."""
        previous = GENESIS_HASH
        for block in self.blocks:
            if block.previous_hash != previous:
                return False
            if _block_hash(previous, block.tick, block.transactions) != block.block_hash:
                return False
            for tx in block.transactions:
                if not crypto.verify(tx.from_public_key, tx.signed_payload(), tx.submitter_signature):
                    return False
            previous = block.block_hash
        return True

    def confirmed_transactions(self) -> list[tuple[ChainTransaction, int]]:
        return [(tx, block.tick) for block in self.blocks for tx in block.transactions]

    def pending_count(self) -> int:
        return len(self._pending)

    def export_lines(self) -> list[str]:
        return [
            f"{tx.tx_id.hex()},{tx.from_public_key.hex()},{tx.to_public_key.hex()},"
            f"{tx.amount},{tx.asset_type},{tick}"
            for tx, tick in self.confirmed_transactions()
        ]
