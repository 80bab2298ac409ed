"""Message-call execution for native contracts.

Contracts are plain Python classes registered in a prototype catalog. Their
state lives in the world state as storage slots, and every storage access,
log, call, value transfer and creation is metered against a gas schedule.

Semantics that the pattern contracts rely on:

* Value moves to the callee *before* the callee's body runs.
* A reverting frame undoes only its own effects. ``Frame.call`` re-raises
  the revert in the caller; ``Frame.send`` reports it as ``False``.
* Running out of gas anywhere aborts the whole transaction.
"""

from __future__ import annotations

import inspect
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Callable, ClassVar, Iterable, Optional, Sequence

from .encoding import canonical_json, loads_strict
from .state import ContractIdentity, WorldState, contract_address, storage_key

log = logging.getLogger(__name__)

DEFAULT_MAX_CALL_DEPTH = 64


@dataclass(frozen=True)
class GasSchedule:
    storage_write: int = 100
    storage_read: int = 10
    log_emit: int = 15
    call_base: int = 40
    value_transfer: int = 25
    compute_step: int = 1
    contract_create: int = 500

    def __post_init__(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 1:
                raise ValueError(f"gas cost {f.name} must be >= 1")

    def cost(self, kind: str) -> int:
        return getattr(self, kind)

    def to_json(self) -> dict[str, int]:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict[str, int]) -> "GasSchedule":
        return cls(**obj)


STEP_KINDS = tuple(f.name for f in fields(GasSchedule))


class Revert(Exception):
    def __init__(self, reason: str) -> None:
        super().__init__(reason)
        self.reason = reason


class OutOfGas(Exception):
    pass


class GasMeter:
    """Transaction-wide gas counter."""

    def __init__(self, limit: int) -> None:
        self.limit = limit
        self.used = 0

    @property
    def remaining(self) -> int:
        return self.limit - self.used

    def exhaust(self) -> None:
        self.used = self.limit


@dataclass
class LogEvent:
    emitter: str
    topic: str
    data: Any
    block_height: int = -1
    tx_index: int = -1
    log_index: int = -1

    def to_json(self) -> dict[str, Any]:
        return {
            "emitter": self.emitter,
            "topic": self.topic,
            "data": self.data,
            "block_height": self.block_height,
            "tx_index": self.tx_index,
            "log_index": self.log_index,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "LogEvent":
        return cls(**obj)


@dataclass
class MessageCall:
    caller: str
    callee: str
    value: int = 0
    method: str = ""
    args: Sequence[Any] = ()
    gas_budget: int = 0
    depth: int = 0


@dataclass(frozen=True)
class BlockContext:
    height: int = 0
    miner: str = ""
    timestamp: int = 0


class TraceRecorder:
    """Collects one record per VM step, grouped by transaction."""

    def __init__(self) -> None:
        self.by_tx: dict[str, list[dict[str, Any]]] = {}
        self._current: list[dict[str, Any]] = []

    def begin(self, tx_key: str) -> None:
        self._current = self.by_tx.setdefault(tx_key, [])

    def record(self, frame_depth: int, step_kind: str, gas_after: int, contract: str,
               method: str, **extra: Any) -> None:
        rec = {
            "frame_depth": frame_depth,
            "step_kind": step_kind,
            "gas_after": gas_after,
            "contract": contract,
            "method": method,
        }
        rec.update(extra)
        self._current.append(rec)

    def records(self, tx_key: str) -> list[dict[str, Any]]:
        return self.by_tx.get(tx_key, [])

    def count(self, tx_key: str, step_kind: str) -> int:
        return sum(1 for r in self.records(tx_key) if r["step_kind"] == step_kind)

    def gas_by_kind(self, tx_key: str, schedule: GasSchedule) -> dict[str, int]:
        totals = {k: 0 for k in STEP_KINDS}
        for r in self.records(tx_key):
            if r["step_kind"] in totals:
                totals[r["step_kind"]] += schedule.cost(r["step_kind"])
        return totals

    def revert_reasons(self, tx_key: str) -> list[str]:
        return [r["reason"] for r in self.records(tx_key) if r["step_kind"] == "revert"]

    def to_jsonl(self, tx_key: str) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records(tx_key))


# -- contract prototypes ---------------------------------------------------


def external(fn: Callable) -> Callable:
    """Mark a contract method as callable by message calls."""
    fn.__external__ = True
    return fn


class Contract:
    """Base class for native contract prototypes.

    Subclasses are stateless; all state goes through the ``Frame`` passed to
    every method. Define ``fallback(self, ctx)`` to accept bare value
    transfers and unknown methods carrying value.
    """

    prototype_name: ClassVar[str] = ""
    version: ClassVar[str] = "1.0"

    def constructor(self, ctx: "Frame", *args: Any) -> None:
        pass

    @classmethod
    def has_fallback(cls) -> bool:
        return callable(getattr(cls, "fallback", None))


class PrototypeCatalog:
    """Registry of prototypes keyed by name, with one shared instance each."""

    def __init__(self) -> None:
        self._classes: dict[str, type[Contract]] = {}
        self._instances: dict[str, Contract] = {}

    def register(self, cls: type[Contract]) -> type[Contract]:
        name = cls.prototype_name
        if not name:
            raise ValueError(f"{cls.__name__} has no prototype_name")
        if name in self._classes and self._classes[name] is not cls:
            raise ValueError(f"prototype {name!r} already registered")
        self._classes[name] = cls
        return cls

    def __contains__(self, name: str) -> bool:
        return name in self._classes

    def names(self) -> list[str]:
        return sorted(self._classes)

    def get(self, name: str) -> Contract:
        inst = self._instances.get(name)
        if inst is None:
            inst = self._instances[name] = self._classes[name]()
        return inst


CATALOG = PrototypeCatalog()
prototype = CATALOG.register


# -- execution ---------------------------------------------------------------


class Frame:
    """Execution context handed to contract code for one message call."""

    def __init__(self, vm: "VM", meter: GasMeter, gas_end: int, address: str, caller: str,
                 origin: str, value: int, method: str, depth: int) -> None:
        self.vm = vm
        self.meter = meter
        self.gas_end = gas_end
        self.address = address
        self.caller = caller
        self.origin = origin
        self.value = value
        self.method = method
        self.depth = depth
        self.logs: list[LogEvent] = []

    # gas
    def gas_left(self) -> int:
        return self.gas_end - self.meter.used

    def charge(self, kind: str, times: int = 1) -> None:
        cost = self.vm.schedule.cost(kind)
        for _ in range(times):
            if self.meter.used + cost > self.gas_end:
                self.meter.exhaust()
                self._trace("out_of_gas")
                raise OutOfGas()
            self.meter.used += cost
            self._trace(kind)

    def step(self, n: int = 1) -> None:
        if n > 0:
            self.charge("compute_step", n)

    def _trace(self, kind: str, **extra: Any) -> None:
        if self.vm.tracer is not None:
            self.vm.tracer.record(self.depth, kind, self.meter.remaining, self.address,
                                  self.method, **extra)

    # state
    @property
    def block(self) -> BlockContext:
        return self.vm.block

    @property
    def state(self) -> WorldState:
        return self.vm.state

    def load(self, *key: Any, default: Any = None) -> Any:
        self.charge("storage_read")
        raw = self.vm.state.load(self.address, storage_key(*key))
        return default if raw is None else loads_strict(raw)

    def store(self, *key_and_value: Any) -> None:
        *key, value = key_and_value
        self.charge("storage_write")
        raw = None if value is None else canonical_json(value)
        self.vm.state.store(self.address, storage_key(*key), raw)

    def balance_of(self, address: str) -> int:
        self.charge("storage_read")
        return self.vm.state.balance(address)

    @property
    def self_balance(self) -> int:
        return self.balance_of(self.address)

    def emit(self, topic: str, data: Any) -> LogEvent:
        self.charge("log_emit")
        event = LogEvent(self.address, topic, data)
        self.logs.append(event)
        return event

    # control flow
    def revert(self, reason: str) -> None:
        raise Revert(reason)

    def require(self, condition: Any, reason: str) -> None:
        if not condition:
            raise Revert(reason)

    def call(self, callee: str, method: str = "", args: Sequence[Any] = (), value: int = 0,
             gas: Optional[int] = None) -> Any:
        """Message call that re-raises a callee revert in this frame."""
        return self.vm.run_call(self, callee, method, args, value, gas)

    def send(self, to: str, value: int, method: str = "", args: Sequence[Any] = (),
             gas: Optional[int] = None) -> bool:
        """Low-level call: returns ``False`` instead of propagating a revert."""
        try:
            self.vm.run_call(self, to, method, args, value, gas)
        except Revert:
            return False
        return True

    def create(self, prototype_name: str, args: Sequence[Any] = (), value: int = 0) -> str:
        state = self.vm.state
        address = contract_address(self.address, state.nonce(self.address))
        state.increment_nonce(self.address)
        self.vm.run_create(self.meter, self.gas_end, self.logs, self.address, self.origin,
                           prototype_name, args, value, self.depth + 1, address)
        return address


def _invoke(fn: Callable, frame: Frame, args: Sequence[Any]) -> Any:
    """Call contract code; malformed arguments and contract crashes become reverts."""
    if not isinstance(args, (list, tuple)):
        raise Revert("bad-arguments")
    try:
        inspect.signature(fn).bind(frame, *args)
    except TypeError:
        raise Revert("bad-arguments") from None
    try:
        return fn(frame, *args)
    except (Revert, OutOfGas):
        raise
    except (TypeError, ValueError, KeyError, IndexError, AttributeError) as exc:
        log.debug("contract error in %s: %r", getattr(fn, "__qualname__", fn), exc)
        raise Revert("contract-error") from None


class VM:
    def __init__(self, state: WorldState, schedule: Optional[GasSchedule] = None,
                 max_call_depth: int = DEFAULT_MAX_CALL_DEPTH,
                 catalog: PrototypeCatalog = CATALOG,
                 tracer: Optional[TraceRecorder] = None,
                 block: BlockContext = BlockContext()) -> None:
        self.state = state
        self.schedule = schedule or GasSchedule()
        self.max_call_depth = max_call_depth
        self.catalog = catalog
        self.tracer = tracer
        self.block = block

    def _frame(self, meter: GasMeter, gas_end: int, call: MessageCall, origin: str) -> Frame:
        return Frame(self, meter, gas_end, call.callee, call.caller, origin, call.value,
                     call.method, call.depth)

    def _enter(self, frame: Frame, value: int, sender: str) -> None:
        if frame.depth >= self.max_call_depth:
            raise Revert("depth-exceeded")
        frame.charge("call_base")
        if value:
            frame.charge("value_transfer")
            if not self.state.transfer(sender, frame.address, value):
                raise Revert("insufficient-balance")

    def execute(self, call: MessageCall, meter: GasMeter, logs: list[LogEvent],
                origin: Optional[str] = None) -> Any:
        """Run one frame. On revert its effects are undone and ``Revert`` re-raised."""
        gas_end = meter.used + min(call.gas_budget, meter.remaining)
        return self._run(meter, gas_end, call, origin or call.caller, logs)

    def _run(self, meter: GasMeter, gas_end: int, call: MessageCall, origin: str,
             logs: list[LogEvent]) -> Any:
        frame = self._frame(meter, gas_end, call, origin)
        mark = self.state.snapshot()
        try:
            self._enter(frame, call.value, call.caller)
            result = self._dispatch(frame, call)
        except Revert as exc:
            self.state.revert(mark)
            frame._trace("revert", reason=exc.reason)
            raise
        logs.extend(frame.logs)
        return result

    def _dispatch(self, frame: Frame, call: MessageCall) -> Any:
        identity = self.state.contract(call.callee)
        if identity is None:
            return None  # plain value transfer to an externally owned account
        instance = self.catalog.get(identity.prototype_name)
        cls = type(instance)
        if call.method:
            fn = getattr(instance, call.method, None)
            if fn is not None and getattr(fn, "__external__", False):
                return _invoke(fn, frame, call.args)
            if call.value and cls.has_fallback():
                return _invoke(instance.fallback, frame, [])
            raise Revert("unknown-method")
        if cls.has_fallback():
            return _invoke(instance.fallback, frame, [])
        return None

    def run_call(self, parent: Frame, callee: str, method: str, args: Sequence[Any],
                 value: int, gas: Optional[int]) -> Any:
        budget = parent.gas_left() if gas is None else min(gas, parent.gas_left())
        call = MessageCall(parent.address, callee, value, method, list(args), budget,
                           parent.depth + 1)
        return self._run(parent.meter, parent.meter.used + budget, call, parent.origin,
                         parent.logs)

    def run_create(self, meter: GasMeter, gas_end: int, logs: list[LogEvent], creator: str,
                   origin: str, prototype_name: str, args: Sequence[Any], value: int,
                   depth: int, address: str) -> str:
        call = MessageCall(creator, address, value, "constructor", list(args), 0, depth)
        frame = self._frame(meter, gas_end, call, origin)
        mark = self.state.snapshot()
        try:
            if depth >= self.max_call_depth:
                raise Revert("depth-exceeded")
            frame.charge("call_base")
            frame.charge("contract_create")
            if prototype_name not in self.catalog:
                raise Revert("unknown-prototype")
            existing = self.state.get(address)
            if existing is not None and (existing.contract is not None or existing.nonce):
                raise Revert("address-collision")
            cls = type(self.catalog.get(prototype_name))
            self.state.set_contract(address, ContractIdentity(prototype_name, cls.version, address))
            if value:
                frame.charge("value_transfer")
                if not self.state.transfer(creator, address, value):
                    raise Revert("insufficient-balance")
            _invoke(self.catalog.get(prototype_name).constructor, frame, args)
        except Revert as exc:
            self.state.revert(mark)
            frame._trace("revert", reason=exc.reason)
            raise
        logs.extend(frame.logs)
        return address


@dataclass
class CallOutcome:
    status: str  # "Succeeded" | "Reverted" | "OutOfGas"
    output: Any
    gas_used: int
    logs: list[LogEvent] = field(default_factory=list)
    reason: Optional[str] = None


def execute_call(state: WorldState, call: MessageCall, schedule: Optional[GasSchedule] = None,
                 max_call_depth: int = DEFAULT_MAX_CALL_DEPTH,
                 tracer: Optional[TraceRecorder] = None,
                 block: BlockContext = BlockContext()) -> CallOutcome:
    """Run a single top-level message call against ``state``.

    Effects stay in ``state`` on success and are rolled back otherwise. No
    nonce or fee handling happens here; see ``chain.apply_transaction``.
    """
    vm = VM(state, schedule, max_call_depth, tracer=tracer, block=block)
    meter = GasMeter(call.gas_budget)
    logs: list[LogEvent] = []
    mark = state.snapshot()
    try:
        output = vm.execute(call, meter, logs)
    except Revert as exc:
        return CallOutcome("Reverted", None, meter.used, [], exc.reason)
    except OutOfGas:
        state.revert(mark)
        return CallOutcome("OutOfGas", None, meter.limit, [], "out-of-gas")
    return CallOutcome("Succeeded", output, meter.used, logs)


def instantiate(state: WorldState, creator: str, prototype_name: str,
                init_args: Iterable[Any] = (), gas_budget: int = 10**9,
                schedule: Optional[GasSchedule] = None, value: int = 0,
                tracer: Optional[TraceRecorder] = None) -> CallOutcome:
    """Create a contract outside a transaction; the creator nonce is consumed.

    ``output`` of the outcome is the new address on success.
    """
    vm = VM(state, schedule, tracer=tracer)
    meter = GasMeter(gas_budget)
    logs: list[LogEvent] = []
    mark = state.snapshot()
    address = contract_address(creator, state.nonce(creator))
    try:
        vm.run_create(meter, meter.limit, logs, creator, creator, prototype_name,
                      list(init_args), value, 0, address)
    except Revert as exc:
        state.increment_nonce(creator)
        return CallOutcome("Reverted", None, meter.used, [], exc.reason)
    except OutOfGas:
        state.revert(mark)
        state.increment_nonce(creator)
        return CallOutcome("OutOfGas", None, meter.limit, [], "out-of-gas")
    state.increment_nonce(creator)
    return CallOutcome("Succeeded", address, meter.used, logs)
