"""Off-chain notification actors for the publisher hub.

``Messenger`` (poll variant) follows committed blocks from a cursor, keeps the
subscription table up to date from the hub's subscription events, and turns
each publish event into one notification per subscriber at publish time.

``Oracle`` (push variant) picks up tasks the hub queued on-chain, delivers the
notifications and answers with a signed ``deliver`` callback transaction.

Both write notifications to a per-subscriber JSON-lines outbox at
``notifications/<subscriber>.jsonl``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional

from .chain import SUCCEEDED, Chain, Transaction
from .contracts.pubsub import DELIVERED_TOPIC, SUBSCRIPTION_TOPIC, TASK_TOPIC
from .crypto import KeyPair
from .state import address_from_public_key

log = logging.getLogger(__name__)

CURSOR_FILE = "messenger-cursor.json"


@dataclass(frozen=True, order=True)
class Notification:
    topic: str
    sequence: int
    subscriber: str
    publisher: str
    delivered_at: int

    def key(self) -> tuple[str, int, str]:
        return (self.topic, self.sequence, self.subscriber)

    def to_json(self) -> dict[str, Any]:
        return asdict(self)


class Outbox:
    def __init__(self, root: str | Path) -> None:
        self.dir = Path(root) / "notifications"

    def deliver(self, notifications: Iterable[Notification]) -> None:
        by_subscriber: dict[str, list[Notification]] = {}
        for n in notifications:
            by_subscriber.setdefault(n.subscriber, []).append(n)
        if not by_subscriber:
            return
        self.dir.mkdir(parents=True, exist_ok=True)
        for subscriber in sorted(by_subscriber):
            with (self.dir / f"{subscriber}.jsonl").open("a") as fh:
                for n in by_subscriber[subscriber]:
                    fh.write(json.dumps(n.to_json(), sort_keys=True) + "\n")

    def read(self, subscriber: str) -> list[Notification]:
        path = self.dir / f"{subscriber}.jsonl"
        if not path.exists():
            return []
        return [Notification(**json.loads(line)) for line in path.read_text().splitlines() if line]

    def read_all(self) -> list[Notification]:
        if not self.dir.exists():
            return []
        out: list[Notification] = []
        for path in sorted(self.dir.glob("*.jsonl")):
            out.extend(self.read(path.stem))
        return out


Subscriptions = dict[str, set[str]]


def _scan(chain: Chain, hub: str, start: int, stop: int,
          subs: Subscriptions) -> list[Notification]:
    """Walk blocks in ``(start, stop]``; updates ``subs`` in place."""
    notes: list[Notification] = []
    for block in chain.blocks[start + 1: stop + 1]:
        for receipt in block.receipts:
            for event in receipt.logs:
                if event.emitter != hub:
                    continue
                data = event.data
                if event.topic == SUBSCRIPTION_TOPIC:
                    members = subs.setdefault(data["topic"], set())
                    if data["action"] == "subscribe":
                        members.add(data["subscriber"])
                    else:
                        members.discard(data["subscriber"])
                elif isinstance(data, dict) and data.get("event") == "publish":
                    for subscriber in sorted(subs.get(event.topic, ())):
                        notes.append(Notification(event.topic, data["sequence"], subscriber,
                                                  data["publisher"], block.height))
    return notes


class Messenger:
    """Poll-variant monitor for one hub.

    With ``state_dir`` set, the cursor and the subscription table are
    persisted to ``messenger-cursor.json`` there, and notifications go to the
    outbox under the same directory.
    """

    def __init__(self, hub: str, state_dir: Optional[str | Path] = None) -> None:
        self.hub = hub
        self.state_dir = Path(state_dir) if state_dir is not None else None
        self.outbox = Outbox(self.state_dir) if self.state_dir is not None else None
        self.cursor = 0
        self.subscriptions: Subscriptions = {}
        if self.state_dir is not None and (self.state_dir / CURSOR_FILE).exists():
            self._load()

    def _load(self) -> None:
        obj = json.loads((self.state_dir / CURSOR_FILE).read_text())
        if obj["hub"] != self.hub:
            raise ValueError("cursor file belongs to a different hub")
        self.cursor = obj["cursor"]
        self.subscriptions = {t: set(s) for t, s in obj["subscriptions"].items()}

    def _save(self) -> None:
        obj = {"hub": self.hub, "cursor": self.cursor,
               "subscriptions": {t: sorted(s) for t, s in sorted(self.subscriptions.items())}}
        self.state_dir.mkdir(parents=True, exist_ok=True)
        tmp = self.state_dir / (CURSOR_FILE + ".tmp")
        tmp.write_text(json.dumps(obj, sort_keys=True) + "\n")
        tmp.replace(self.state_dir / CURSOR_FILE)

    def _table_at(self, chain: Chain, cursor: int) -> Subscriptions:
        if cursor == self.cursor:
            return {t: set(s) for t, s in self.subscriptions.items()}
        table: Subscriptions = {}
        _scan(chain, self.hub, 0, cursor, table)
        return table

    def poll_once(self, chain: Chain, cursor: Optional[int] = None) -> tuple[list[Notification], int]:
        """Notifications for blocks after ``cursor``, and the new cursor. No side effects."""
        cursor = self.cursor if cursor is None else cursor
        if not 0 <= cursor <= chain.height:
            raise ValueError(f"cursor {cursor} outside [0, {chain.height}]")
        table = self._table_at(chain, cursor)
        notes = _scan(chain, self.hub, cursor, chain.height, table)
        return notes, chain.height

    def run_once(self, chain: Chain) -> list[Notification]:
        """Poll from the stored cursor, deliver to the outbox, then persist the cursor."""
        table = self._table_at(chain, self.cursor)
        tip = chain.height
        notes = _scan(chain, self.hub, self.cursor, tip, table)
        if self.outbox is not None:
            self.outbox.deliver(notes)
        self.cursor, self.subscriptions = tip, table
        if self.state_dir is not None:
            self._save()
        return notes


def poll_once(messenger: Messenger, chain: Chain, cursor: Optional[int] = None) -> tuple[list[Notification], int]:
    return messenger.poll_once(chain, cursor)


@dataclass(frozen=True)
class OracleTask:
    task_id: str
    hub: str
    topic: str
    sequence: int
    publisher: str
    payload_ref: str
    recipients: tuple[str, ...]
    callback: tuple[str, str]
    fee: int

    @classmethod
    def from_event(cls, emitter: str, data: dict[str, Any]) -> "OracleTask":
        return cls(data["task_id"], emitter, data["topic"], data["sequence"], data["publisher"],
                   data["payload_ref"], tuple(data["recipients"]), tuple(data["callback"]),
                   data["fee"])


@dataclass
class Oracle:
    """Trusted off-chain service answering hub tasks with callback transactions."""

    keys: KeyPair
    outbox: Optional[Outbox] = None
    gas_limit: int = 100_000
    gas_price: int = 0
    cursor: int = 0
    failures: list[dict[str, Any]] = field(default_factory=list)
    delivered: list[Notification] = field(default_factory=list)
    submitted: dict[str, OracleTask] = field(default_factory=dict)

    @property
    def address(self) -> str:
        return address_from_public_key(self.keys.public_key)

    def new_tasks(self, chain: Chain) -> list[OracleTask]:
        tasks = []
        for block in chain.blocks[self.cursor + 1:]:
            for receipt in block.receipts:
                for event in receipt.logs:
                    if event.topic == TASK_TOPIC:
                        tasks.append(OracleTask.from_event(event.emitter, event.data))
        self.cursor = chain.height
        return tasks

    def process(self, chain: Chain, task: OracleTask) -> Optional[Transaction]:
        """Deliver ``task`` and submit its callback; ``None`` if it cannot be paid for."""
        reserved = sum(t.fee for t in self.submitted.values() if t.hub == task.hub)
        if chain.state.balance(task.hub) - reserved < task.fee:
            self._fail(task, "insufficient-escrow")
            return None
        if chain.state.balance(self.address) < self.gas_limit * self.gas_price:
            self._fail(task, "insufficient-gas-funds")
            return None
        notes = [Notification(task.topic, task.sequence, r, task.publisher, chain.height)
                 for r in task.recipients]
        self.delivered.extend(notes)
        if self.outbox is not None:
            self.outbox.deliver(notes)
        contract, method = task.callback
        tx = chain.transact(self.keys, contract, method, [task.task_id, len(notes)],
                            gas_limit=self.gas_limit, gas_price=self.gas_price)
        self.submitted[tx.digest()] = task
        return tx

    def run_once(self, chain: Chain) -> list[Transaction]:
        return [tx for task in self.new_tasks(chain) if (tx := self.process(chain, task))]

    def reconcile(self, chain: Chain) -> None:
        """Record failures for mined callbacks that did not succeed. No retries."""
        for digest in list(self.submitted):
            try:
                receipt = chain.receipt(digest)
            except KeyError:
                continue
            task = self.submitted.pop(digest)
            if receipt.status != SUCCEEDED:
                self._fail(task, receipt.revert_reason or receipt.status)

    def _fail(self, task: OracleTask, reason: str) -> None:
        log.info("oracle task %s failed: %s", task.task_id[:12], reason)
        self.failures.append({"task_id": task.task_id, "topic": task.topic,
                              "sequence": task.sequence, "reason": reason})


def oracle_process(oracle: Oracle, chain: Chain, task: OracleTask) -> Optional[Transaction]:
    return oracle.process(chain, task)


def delivered_tasks(chain: Chain, hub: str) -> list[dict[str, Any]]:
    return [e.data for e in chain.logs(topic=DELIVERED_TOPIC, emitter=hub)]
