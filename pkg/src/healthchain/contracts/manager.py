"""Permanent storage plus a versioned repository of logic-contract addresses.

Fields written here stay readable no matter how many logic versions are
registered. Mutations are gated by a three-level access group; the owner
always holds ``Admin`` and cannot be demoted, so the data can never be
locked away from its owner.
"""

from __future__ import annotations

from typing import Any, Optional

from ..state import is_address
from ..vm import Contract, Frame, external, prototype

READ, WRITE, ADMIN = "Read", "Write", "Admin"
RANK = {READ: 1, WRITE: 2, ADMIN: 3}


@prototype
class ContractManager(Contract):
    prototype_name = "contract_manager"

    def constructor(self, ctx: Frame) -> None:
        ctx.store("owner", ctx.caller)

    def _privilege(self, ctx: Frame, who: str) -> Optional[str]:
        if who == ctx.load("owner"):
            return ADMIN
        return ctx.load("access", who)

    def _require(self, ctx: Frame, level: str) -> None:
        have = self._privilege(ctx, ctx.caller)
        ctx.require(have is not None and RANK[have] >= RANK[level], "unauthorized")

    # permanent storage

    @external
    def get(self, ctx: Frame, name: str) -> Any:
        slot = ctx.load("field", name)
        ctx.require(slot is not None, "not-found")
        return slot["value"]

    @external
    def set(self, ctx: Frame, name: str, value: Any) -> None:
        self._require(ctx, WRITE)
        ctx.require(isinstance(name, str) and name != "", "bad-field")
        # wrapped so that a stored null is distinguishable from a missing field
        ctx.store("field", name, {"value": value})

    # access group

    @external
    def grant(self, ctx: Frame, member: str, privilege: str) -> None:
        self._require(ctx, ADMIN)
        ctx.require(privilege in RANK, "bad-privilege")
        ctx.require(is_address(member), "bad-address")
        ctx.require(member != ctx.load("owner"), "owner-immutable")
        ctx.store("access", member, privilege)
        ctx.emit("access", {"member": member, "privilege": privilege, "by": ctx.caller})

    @external
    def revoke(self, ctx: Frame, member: str) -> None:
        self._require(ctx, ADMIN)
        ctx.require(member != ctx.load("owner"), "owner-immutable")
        ctx.store("access", member, None)
        ctx.emit("access", {"member": member, "privilege": None, "by": ctx.caller})

    @external
    def privilege_of(self, ctx: Frame, member: str) -> Optional[str]:
        return self._privilege(ctx, member)

    # contract repository

    @external
    def register_version(self, ctx: Frame, component: str, version: str, address: str) -> int:
        self._require(ctx, ADMIN)
        ctx.require(is_address(address), "bad-address")
        history = ctx.load("repo", component, default=[])
        ctx.require(all(v != version for v, _ in history), "duplicate-version")
        history.append([version, address])
        ctx.store("repo", component, history)
        ctx.emit("version", {"component": component, "version": version, "address": address})
        return len(history)

    @external
    def latest(self, ctx: Frame, component: str) -> str:
        history = ctx.load("repo", component, default=[])
        ctx.require(history, "not-found")
        return history[-1][1]

    @external
    def history(self, ctx: Frame, component: str) -> list:
        return ctx.load("repo", component, default=[])
