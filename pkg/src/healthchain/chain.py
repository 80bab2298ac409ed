"""Hash-linked block ledger with proof-of-work mining and replay verification.

A chain is persisted as JSON lines, one canonical block object per line. The
genesis block carries the chain configuration (allocations, reward, gas
schedule, difficulty), so a chain file can be verified on its own by
replaying every transaction from the genesis state.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional, Sequence

from . import contracts as _contracts  # noqa: F401  registers the pattern prototypes
from .crypto import KeyPair, Signature, digest_hex, sign, verify
from .encoding import canonical_json, loads_strict
from .state import WorldState, address_from_public_key, contract_address, is_address
from .vm import (
    DEFAULT_MAX_CALL_DEPTH,
    BlockContext,
    GasMeter,
    GasSchedule,
    LogEvent,
    MessageCall,
    OutOfGas,
    Revert,
    TraceRecorder,
    VM,
)

ZERO_HASH = "00" * 32
ZERO_ADDRESS = "00" * 20
SUCCEEDED, REVERTED, OUT_OF_GAS = "Succeeded", "Reverted", "OutOfGas"
CREATE = "create"


class TransactionRejected(Exception):
    """A transaction failed a precondition and cannot be included."""


class ChainFormatError(ValueError):
    def __init__(self, height: int, reason: str) -> None:
        super().__init__(f"height {height}: {reason}")
        self.height = height
        self.reason = reason


@dataclass(frozen=True)
class ChainConfig:
    alloc: dict[str, int] = field(default_factory=dict)
    block_reward: int = 10
    difficulty: int = 16
    block_gas_limit: int = 1_000_000_000
    max_call_depth: int = DEFAULT_MAX_CALL_DEPTH
    gas_schedule: GasSchedule = GasSchedule()

    def initial_supply(self) -> int:
        return sum(self.alloc.values())

    def to_json(self) -> dict[str, Any]:
        return {
            "alloc": dict(sorted(self.alloc.items())),
            "block_reward": self.block_reward,
            "difficulty": self.difficulty,
            "block_gas_limit": self.block_gas_limit,
            "max_call_depth": self.max_call_depth,
            "gas_schedule": self.gas_schedule.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "ChainConfig":
        return cls(
            alloc=dict(obj["alloc"]),
            block_reward=obj["block_reward"],
            difficulty=obj["difficulty"],
            block_gas_limit=obj["block_gas_limit"],
            max_call_depth=obj["max_call_depth"],
            gas_schedule=GasSchedule.from_json(obj["gas_schedule"]),
        )


# -- transactions --------------------------------------------------------------


def make_payload(contract: str, method: str = "", args: Sequence[Any] = ()) -> dict[str, Any]:
    return {"contract": contract, "method": method, "args": list(args)}


@dataclass(frozen=True)
class Transaction:
    nonce: int
    sender: str
    recipient: Optional[str]
    payload: dict[str, Any]
    value: int = 0
    gas_limit: int = 1_000_000
    gas_price: int = 0
    signature: Optional[Signature] = None

    def body_json(self) -> dict[str, Any]:
        return {
            "nonce": self.nonce,
            "sender": self.sender,
            "recipient": self.recipient,
            "payload": self.payload,
            "value": self.value,
            "gas_limit": self.gas_limit,
            "gas_price": self.gas_price,
        }

    def signing_bytes(self) -> bytes:
        return canonical_json(self.body_json())

    def to_json(self) -> dict[str, Any]:
        obj = self.body_json()
        obj["signature"] = self.signature.to_json() if self.signature else None
        return obj

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "Transaction":
        sig = obj["signature"]
        return cls(
            nonce=obj["nonce"],
            sender=obj["sender"],
            recipient=obj["recipient"],
            payload=obj["payload"],
            value=obj["value"],
            gas_limit=obj["gas_limit"],
            gas_price=obj["gas_price"],
            signature=Signature.from_json(sig) if sig is not None else None,
        )

    def digest(self) -> str:
        return digest_hex(canonical_json(self.to_json()))

    def signed(self, keys: KeyPair) -> "Transaction":
        return replace(self, signature=sign(keys.secret_key, self.signing_bytes()))

    def signature_valid(self) -> bool:
        sig = self.signature
        if sig is None or address_from_public_key(sig.signer) != self.sender:
            return False
        return verify(sig.signer, self.signing_bytes(), sig)


def new_transaction(keys: KeyPair, nonce: int, recipient: Optional[str], method: str = "",
                    args: Sequence[Any] = (), value: int = 0, gas_limit: int = 1_000_000,
                    gas_price: int = 0) -> Transaction:
    """Build and sign a transaction. ``recipient=None`` creates the prototype ``method``."""
    payload = make_payload(recipient if recipient is not None else CREATE, method, args)
    tx = Transaction(nonce, address_from_public_key(keys.public_key), recipient, payload,
                     value, gas_limit, gas_price)
    return tx.signed(keys)


@dataclass
class Receipt:
    tx_digest: str
    status: str
    gas_used: int
    logs: list[LogEvent] = field(default_factory=list)
    created_address: Optional[str] = None
    output: Any = None
    revert_reason: Optional[str] = None

    def to_json(self) -> dict[str, Any]:
        return {
            "tx_digest": self.tx_digest,
            "status": self.status,
            "gas_used": self.gas_used,
            "logs": [e.to_json() for e in self.logs],
            "created_address": self.created_address,
            "output": self.output,
            "revert_reason": self.revert_reason,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "Receipt":
        return cls(
            tx_digest=obj["tx_digest"],
            status=obj["status"],
            gas_used=obj["gas_used"],
            logs=[LogEvent.from_json(e) for e in obj["logs"]],
            created_address=obj["created_address"],
            output=obj["output"],
            revert_reason=obj["revert_reason"],
        )


def _check_payload(tx: Transaction) -> None:
    p = tx.payload
    if not isinstance(p, dict) or set(p) != {"contract", "method", "args"}:
        raise TransactionRejected("malformed-payload")
    if not isinstance(p["method"], str) or not isinstance(p["args"], list):
        raise TransactionRejected("malformed-payload")
    if tx.recipient is None:
        if p["contract"] != CREATE or not p["method"]:
            raise TransactionRejected("malformed-payload")
    elif p["contract"] != tx.recipient or not is_address(tx.recipient):
        raise TransactionRejected("malformed-payload")


def check_transaction(state: WorldState, tx: Transaction, config: ChainConfig) -> None:
    """Raise :class:`TransactionRejected` unless ``tx`` may be applied to ``state``."""
    if not tx.signature_valid():
        raise TransactionRejected("bad-signature")
    if tx.nonce != state.nonce(tx.sender):
        raise TransactionRejected("bad-nonce")
    if tx.gas_limit <= 0 or tx.gas_limit > config.block_gas_limit:
        raise TransactionRejected("bad-gas-limit")
    if tx.value < 0 or tx.gas_price < 0:
        raise TransactionRejected("negative-amount")
    if state.balance(tx.sender) < tx.value + tx.gas_limit * tx.gas_price:
        raise TransactionRejected("insufficient-balance")
    _check_payload(tx)


def apply_transaction(state: WorldState, tx: Transaction, config: ChainConfig,
                      block: BlockContext = BlockContext(), tracer: Optional[TraceRecorder] = None,
                      tx_index: int = 0) -> Receipt:
    """Apply ``tx`` to ``state`` in place and return its receipt.

    Reverted and out-of-gas transactions keep only the fee payment and the
    sender nonce increment.
    """
    check_transaction(state, tx, config)
    tx_digest = tx.digest()
    if tracer is not None:
        tracer.begin(tx_digest)
    vm = VM(state, config.gas_schedule, config.max_call_depth, tracer=tracer, block=block)
    meter = GasMeter(tx.gas_limit)
    logs: list[LogEvent] = []
    mark = state.snapshot()
    method, args = tx.payload["method"], tx.payload["args"]
    created = output = reason = None
    try:
        if tx.recipient is None:
            address = contract_address(tx.sender, tx.nonce)
            vm.run_create(meter, meter.limit, logs, tx.sender, tx.sender, method, args,
                          tx.value, 0, address)
            created = output = address
        else:
            call = MessageCall(tx.sender, tx.recipient, tx.value, method, args, tx.gas_limit, 0)
            output = vm.execute(call, meter, logs)
        status = SUCCEEDED
    except Revert as exc:
        state.revert(mark)
        status, reason, logs = REVERTED, exc.reason, []
    except OutOfGas:
        state.revert(mark)
        meter.exhaust()
        status, reason, logs = OUT_OF_GAS, "out-of-gas", []
    fee = meter.used * tx.gas_price
    if fee:
        state.add_balance(tx.sender, -fee)
        state.add_balance(block.miner, fee)
    state.increment_nonce(tx.sender)
    state.clear_journal()
    for i, event in enumerate(logs):
        event.block_height, event.tx_index, event.log_index = block.height, tx_index, i
    return Receipt(tx_digest, status, meter.used, logs, created, output, reason)


# -- blocks --------------------------------------------------------------------


def tx_root(transactions: Sequence[Transaction]) -> str:
    return digest_hex(canonical_json([tx.to_json() for tx in transactions]))


def receipts_digest(receipts: Sequence[Receipt]) -> str:
    return digest_hex(canonical_json([r.to_json() for r in receipts]))


def pow_target(difficulty: int) -> int:
    return (1 << 256) // difficulty


@dataclass
class Block:
    height: int
    prev_hash: str
    timestamp: int
    difficulty: int
    miner: str
    transactions: list[Transaction]
    receipts: list[Receipt]
    receipts_digest: str
    state_digest: str
    pow_nonce: int = 0
    block_hash: str = ""
    config: Optional[dict[str, Any]] = None

    def header_json(self) -> dict[str, Any]:
        return {
            "height": self.height,
            "prev_hash": self.prev_hash,
            "timestamp": self.timestamp,
            "difficulty": self.difficulty,
            "miner": self.miner,
            "tx_root": tx_root(self.transactions),
            "receipts_digest": self.receipts_digest,
            "state_digest": self.state_digest,
            "config": self.config,
        }

    def hasher(self) -> "hashlib._Hash":
        """SHA-256 state primed with the header; the nonce is appended per attempt."""
        return hashlib.sha256(canonical_json(self.header_json()))

    def compute_hash(self, nonce: Optional[int] = None) -> str:
        h = self.hasher()
        h.update((self.pow_nonce if nonce is None else nonce).to_bytes(8, "big"))
        return h.hexdigest()

    def meets_difficulty(self) -> bool:
        return int(self.block_hash, 16) < pow_target(self.difficulty)

    def to_json(self) -> dict[str, Any]:
        return {
            "height": self.height,
            "prev_hash": self.prev_hash,
            "timestamp": self.timestamp,
            "difficulty": self.difficulty,
            "miner": self.miner,
            "transactions": [tx.to_json() for tx in self.transactions],
            "receipts": [r.to_json() for r in self.receipts],
            "receipts_digest": self.receipts_digest,
            "state_digest": self.state_digest,
            "pow_nonce": self.pow_nonce,
            "block_hash": self.block_hash,
            "config": self.config,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "Block":
        return cls(
            height=obj["height"],
            prev_hash=obj["prev_hash"],
            timestamp=obj["timestamp"],
            difficulty=obj["difficulty"],
            miner=obj["miner"],
            transactions=[Transaction.from_json(t) for t in obj["transactions"]],
            receipts=[Receipt.from_json(r) for r in obj["receipts"]],
            receipts_digest=obj["receipts_digest"],
            state_digest=obj["state_digest"],
            pow_nonce=obj["pow_nonce"],
            block_hash=obj["block_hash"],
            config=obj["config"],
        )

    def to_line(self) -> bytes:
        return canonical_json(self.to_json()) + b"\n"


def solve_pow(block: Block) -> Block:
    """Search nonces from 0 upward; attempts made = ``pow_nonce + 1``."""
    target = pow_target(block.difficulty)
    base = block.hasher()
    nonce = 0
    while True:
        h = base.copy()
        h.update(nonce.to_bytes(8, "big"))
        digest = h.digest()
        if int.from_bytes(digest, "big") < target:
            block.pow_nonce, block.block_hash = nonce, digest.hex()
            return block
        nonce += 1


def make_genesis(config: ChainConfig) -> Block:
    state = WorldState.from_allocations(config.alloc)
    block = Block(0, ZERO_HASH, 0, config.difficulty, ZERO_ADDRESS, [], [],
                  receipts_digest([]), state.digest(), config=config.to_json())
    return solve_pow(block)


def mine_block(pending: Iterable[Transaction], parent: Block, state: WorldState,
               config: ChainConfig, miner: str,
               tracer: Optional[TraceRecorder] = None) -> tuple[Block, WorldState, list[Receipt]]:
    """Apply ``pending`` in order on a copy of ``state`` and seal a block.

    Transactions failing a precondition, or not fitting under the block gas
    limit, are left out.
    """
    new_state = state.copy()
    height = parent.height + 1
    ctx = BlockContext(height=height, miner=miner, timestamp=height)
    included: list[Transaction] = []
    receipts: list[Receipt] = []
    gas_reserved = 0
    for tx in pending:
        if gas_reserved + tx.gas_limit > config.block_gas_limit:
            continue
        try:
            receipt = apply_transaction(new_state, tx, config, ctx, tracer, len(included))
        except TransactionRejected:
            continue
        included.append(tx)
        receipts.append(receipt)
        gas_reserved += tx.gas_limit
    new_state.add_balance(miner, config.block_reward)
    new_state.clear_journal()
    block = Block(height, parent.block_hash, height, config.difficulty, miner, included,
                  receipts, receipts_digest(receipts), new_state.digest())
    return solve_pow(block), new_state, receipts


# -- verification --------------------------------------------------------------


@dataclass
class ChainVerdict:
    ok: bool
    height: Optional[int] = None
    reason: Optional[str] = None
    state: Optional[WorldState] = None

    def __bool__(self) -> bool:
        return self.ok

    def to_json(self) -> dict[str, Any]:
        if self.ok:
            return {"result": "accept"}
        return {"result": "reject", "height": self.height, "reason": self.reason}


def _reject(height: int, reason: str) -> ChainVerdict:
    return ChainVerdict(False, height, reason)


def _check_seal(block: Block) -> Optional[str]:
    if block.receipts_digest != receipts_digest(block.receipts):
        return "receipts-mismatch"
    if block.compute_hash() != block.block_hash:
        return "hash-mismatch"
    if block.difficulty < 1 or not block.meets_difficulty():
        return "pow-invalid"
    return None


def verify_chain(blocks: Sequence[Block], genesis_state: Optional[WorldState] = None) -> ChainVerdict:
    """Check hash links, proof of work, signatures, and replay every transaction.

    On success the verdict carries the replayed tip state.
    """
    if not blocks:
        return _reject(0, "empty-chain")
    genesis = blocks[0]
    if genesis.height != 0 or genesis.prev_hash != ZERO_HASH:
        return _reject(0, "bad-genesis")
    if genesis.block_hash and genesis.compute_hash() != genesis.block_hash:
        return _reject(0, "hash-mismatch")
    if genesis.config is None or genesis.transactions or genesis.receipts:
        return _reject(0, "bad-genesis")
    try:
        config = ChainConfig.from_json(genesis.config)
        state = WorldState.from_allocations(config.alloc)
    except (KeyError, TypeError, ValueError):
        return _reject(0, "bad-genesis")
    problem = _check_seal(genesis)
    if problem:
        return _reject(0, problem)
    if genesis.difficulty != config.difficulty or genesis.timestamp != 0:
        return _reject(0, "bad-genesis")
    if genesis_state is not None and genesis_state.digest() != state.digest():
        return _reject(0, "genesis-state-mismatch")
    if genesis.state_digest != state.digest():
        return _reject(0, "state-mismatch")

    parent = genesis
    for block in blocks[1:]:
        h = block.height
        if block.prev_hash != parent.block_hash:
            return _reject(h, "prev-hash-mismatch")
        if h != parent.height + 1:
            return _reject(h, "height-mismatch")
        problem = _check_seal(block)
        if problem:
            return _reject(h, problem)
        if block.difficulty != config.difficulty:
            return _reject(h, "difficulty-mismatch")
        if block.timestamp != h or block.config is not None:
            return _reject(h, "bad-header")
        if not all(tx.signature_valid() for tx in block.transactions):
            return _reject(h, "bad-signature")
        ctx = BlockContext(height=h, miner=block.miner, timestamp=h)
        replayed: list[Receipt] = []
        for i, tx in enumerate(block.transactions):
            try:
                replayed.append(apply_transaction(state, tx, config, ctx, None, i))
            except TransactionRejected:
                return _reject(h, "invalid-transaction")
        if receipts_digest(replayed) != block.receipts_digest:
            return _reject(h, "receipts-mismatch")
        state.add_balance(block.miner, config.block_reward)
        state.clear_journal()
        if state.digest() != block.state_digest:
            return _reject(h, "state-mismatch")
        parent = block
    return ChainVerdict(True, state=state)


# -- persistence -------------------------------------------------------------


def dump_chain(blocks: Sequence[Block]) -> bytes:
    return b"".join(b.to_line() for b in blocks)


def save_chain(blocks: Sequence[Block], path: str | Path) -> None:
    Path(path).write_bytes(dump_chain(blocks))


def parse_chain(data: bytes) -> list[Block]:
    """Strict parse: every line must be the canonical encoding of its block."""
    if not data.endswith(b"\n"):
        raise ChainFormatError(0, "malformed")
    lines = data[:-1].split(b"\n")
    blocks = []
    for i, line in enumerate(lines):
        try:
            block = Block.from_json(loads_strict(line))
        except (ValueError, KeyError, TypeError, AttributeError, UnicodeDecodeError):
            raise ChainFormatError(i, "malformed") from None
        try:
            canonical = block.to_line()[:-1]
        except (ValueError, TypeError, AttributeError):
            raise ChainFormatError(i, "malformed") from None
        if canonical != line:
            raise ChainFormatError(i, "non-canonical")
        blocks.append(block)
    return blocks


def load_chain(path: str | Path) -> list[Block]:
    return parse_chain(Path(path).read_bytes())


def verify_bytes(data: bytes) -> ChainVerdict:
    try:
        blocks = parse_chain(data)
    except ChainFormatError as exc:
        return _reject(exc.height, exc.reason)
    verdict = verify_chain(blocks)
    if verdict.ok:
        # the file position must agree with the height the block claims
        for i, block in enumerate(blocks):
            if block.height != i:
                return _reject(i, "height-mismatch")
    return verdict


def verify_file(path: str | Path) -> ChainVerdict:
    return verify_bytes(Path(path).read_bytes())


# -- convenience facade ------------------------------------------------------


class Chain:
    """A single-miner chain instance with a pending pool."""

    def __init__(self, config: ChainConfig, miner: str = ZERO_ADDRESS,
                 tracer: Optional[TraceRecorder] = None) -> None:
        self.config = config
        self.miner = miner
        self.tracer = tracer
        self.blocks: list[Block] = [make_genesis(config)]
        self.state = WorldState.from_allocations(config.alloc)
        self.pending: list[Transaction] = []
        self._receipts: dict[str, tuple[int, Receipt]] = {}

    @classmethod
    def from_blocks(cls, blocks: Sequence[Block]) -> "Chain":
        verdict = verify_chain(blocks)
        if not verdict.ok:
            raise ChainFormatError(verdict.height or 0, verdict.reason or "invalid")
        chain = cls(ChainConfig.from_json(blocks[0].config))
        chain.blocks = list(blocks)
        chain.state = verdict.state
        for block in blocks:
            for r in block.receipts:
                chain._receipts[r.tx_digest] = (block.height, r)
        return chain

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    @property
    def height(self) -> int:
        return self.tip.height

    def next_nonce(self, address: str) -> int:
        return self.state.nonce(address) + sum(1 for t in self.pending if t.sender == address)

    def submit(self, tx: Transaction) -> str:
        self.pending.append(tx)
        return tx.digest()

    def transact(self, keys: KeyPair, to: Optional[str], method: str = "",
                 args: Sequence[Any] = (), value: int = 0, gas_limit: int = 1_000_000,
                 gas_price: int = 0) -> Transaction:
        sender = address_from_public_key(keys.public_key)
        tx = new_transaction(keys, self.next_nonce(sender), to, method, args, value,
                             gas_limit, gas_price)
        self.submit(tx)
        return tx

    def deploy(self, keys: KeyPair, prototype_name: str, args: Sequence[Any] = (),
               value: int = 0, gas_limit: int = 1_000_000, gas_price: int = 0) -> tuple[Transaction, str]:
        tx = self.transact(keys, None, prototype_name, args, value, gas_limit, gas_price)
        return tx, contract_address(tx.sender, tx.nonce)

    def mine(self, miner: Optional[str] = None) -> Block:
        block, state, receipts = mine_block(self.pending, self.tip, self.state, self.config,
                                            miner or self.miner, self.tracer)
        mined = {id(tx) for tx in block.transactions}
        # txs that failed a precondition are dropped; those over the gas cap wait
        leftover = []
        for tx in self.pending:
            if id(tx) in mined:
                continue
            try:
                check_transaction(state, tx, self.config)
            except TransactionRejected as exc:
                if str(exc) != "bad-nonce" or tx.nonce < state.nonce(tx.sender):
                    continue
            leftover.append(tx)
        self.pending = leftover
        self.blocks.append(block)
        self.state = state
        for r in receipts:
            self._receipts[r.tx_digest] = (block.height, r)
        return block

    def receipt(self, tx: Transaction | str) -> Receipt:
        key = tx if isinstance(tx, str) else tx.digest()
        return self._receipts[key][1]

    def call_static(self, to: str, method: str, args: Sequence[Any] = (),
                    caller: str = ZERO_ADDRESS, gas: int = 10**9) -> Any:
        """Run a call against the tip state and throw the effects away."""
        vm = VM(self.state, self.config.gas_schedule, self.config.max_call_depth,
                block=BlockContext(self.height, self.miner, self.height))
        mark = self.state.snapshot()
        try:
            return vm.execute(MessageCall(caller, to, 0, method, list(args), gas, 0),
                              GasMeter(gas), [])
        finally:
            self.state.revert(mark)
            self.state.clear_journal()

    def logs(self, topic: Optional[str] = None, emitter: Optional[str] = None,
             start: int = 0) -> Iterator[LogEvent]:
        for block in self.blocks[start:]:
            for r in block.receipts:
                for event in r.logs:
                    if topic is not None and event.topic != topic:
                        continue
                    if emitter is not None and event.emitter != emitter:
                        continue
                    yield event

    def total_supply(self) -> int:
        return self.state.total_supply()

    def expected_supply(self) -> int:
        return self.config.initial_supply() + self.config.block_reward * self.height

    def dump(self) -> bytes:
        return dump_chain(self.blocks)

    def save(self, path: str | Path) -> None:
        save_chain(self.blocks, path)
