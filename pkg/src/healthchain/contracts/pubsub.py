"""Publisher hub supporting both notification variants.

``poll`` mode: publishing records the latest publisher and sequence for the
topic and emits one log event under the topic name. An off-chain messenger
follows those events (and the subscription events) and does the filtering.

``push`` mode: publishing also resolves the subscriber set on-chain and
stores an oracle task; the oracle answers through the ``deliver`` callback
and is paid its fee out of the hub's escrow balance.
"""

from __future__ import annotations

from typing import Any, Optional

from ..crypto import digest_hex
from ..encoding import canonical_json
from ..state import is_address
from ..vm import Contract, Frame, external, prototype

POLL, PUSH = "poll", "push"
RESERVED_PREFIX = "hub:"
SUBSCRIPTION_TOPIC = "hub:subscription"
TASK_TOPIC = "hub:oracle-task"
DELIVERED_TOPIC = "hub:delivered"


def task_id_for(hub: str, topic: str, sequence: int) -> str:
    return digest_hex(canonical_json([hub, topic, sequence]))


@prototype
class PublisherHub(Contract):
    prototype_name = "publisher_hub"

    def constructor(self, ctx: Frame, mode: str = POLL, oracle: Optional[str] = None,
                    fee: int = 0) -> None:
        ctx.require(mode in (POLL, PUSH), "bad-mode")
        if mode == PUSH:
            ctx.require(is_address(oracle), "bad-oracle")
        ctx.require(isinstance(fee, int) and fee >= 0, "bad-fee")
        ctx.store("config", {"mode": mode, "oracle": oracle, "fee": fee})

    def _topic(self, ctx: Frame, topic: Any) -> str:
        ctx.require(isinstance(topic, str) and topic != "", "bad-topic")
        ctx.require(not topic.startswith(RESERVED_PREFIX), "bad-topic")
        return topic

    def fallback(self, ctx: Frame) -> None:
        """Plain value transfers top up the oracle escrow."""

    @external
    def subscribe(self, ctx: Frame, topic: str) -> bool:
        topic = self._topic(ctx, topic)
        subs = ctx.load("subs", topic, default=[])
        if ctx.caller in subs:
            return False
        subs.append(ctx.caller)
        ctx.store("subs", topic, sorted(subs))
        ctx.emit(SUBSCRIPTION_TOPIC, {"action": "subscribe", "topic": topic,
                                      "subscriber": ctx.caller})
        return True

    @external
    def unsubscribe(self, ctx: Frame, topic: str) -> bool:
        topic = self._topic(ctx, topic)
        subs = ctx.load("subs", topic, default=[])
        if ctx.caller not in subs:
            return False
        subs.remove(ctx.caller)
        ctx.store("subs", topic, subs)
        ctx.emit(SUBSCRIPTION_TOPIC, {"action": "unsubscribe", "topic": topic,
                                      "subscriber": ctx.caller})
        return True

    @external
    def publish(self, ctx: Frame, topic: str, payload_ref: str) -> int:
        topic = self._topic(ctx, topic)
        ctx.require(isinstance(payload_ref, str), "bad-payload-ref")
        latest = ctx.load("latest", topic)
        sequence = (latest["sequence"] if latest else 0) + 1
        ctx.store("latest", topic, {"publisher": ctx.caller, "sequence": sequence})
        config = ctx.load("config")
        event = {"event": "publish", "publisher": ctx.caller, "sequence": sequence,
                 "payload_ref": payload_ref}
        if config["mode"] == POLL:
            ctx.emit(topic, event)
            return sequence
        recipients = ctx.load("subs", topic, default=[])
        ctx.step(len(recipients))  # on-chain filtering pass
        task_id = task_id_for(ctx.address, topic, sequence)
        ctx.store("task", task_id, {"topic": topic, "sequence": sequence, "status": "pending"})
        ctx.emit(TASK_TOPIC, {
            "task_id": task_id,
            "topic": topic,
            "sequence": sequence,
            "publisher": ctx.caller,
            "payload_ref": payload_ref,
            "recipients": recipients,
            "callback": [ctx.address, "deliver"],
            "fee": config["fee"],
        })
        return sequence

    @external
    def deliver(self, ctx: Frame, task_id: str, delivered: int) -> None:
        """Oracle callback: mark the task done and pay the fee from escrow."""
        config = ctx.load("config")
        ctx.require(ctx.caller == config["oracle"], "unauthorized")
        task = ctx.load("task", task_id)
        ctx.require(task is not None, "not-found")
        ctx.require(task["status"] == "pending", "already-delivered")
        task["status"] = "delivered"
        task["delivered"] = delivered
        ctx.store("task", task_id, task)
        if config["fee"]:
            ctx.require(ctx.self_balance >= config["fee"], "insufficient-escrow")
            ctx.require(ctx.send(ctx.caller, config["fee"]), "transfer-failed")
        ctx.emit(DELIVERED_TOPIC, {"task_id": task_id, "topic": task["topic"],
                                   "sequence": task["sequence"], "delivered": delivered})

    @external
    def latest(self, ctx: Frame, topic: str) -> Optional[dict]:
        return ctx.load("latest", topic)

    @external
    def subscribers(self, ctx: Frame, topic: str) -> list:
        return ctx.load("subs", topic, default=[])

    @external
    def task(self, ctx: Frame, task_id: str) -> Optional[dict]:
        return ctx.load("task", task_id)

    @external
    def config(self, ctx: Frame) -> dict:
        return ctx.load("config")
