from __future__ import annotations

import random

import pytest

from healthchain.chain import Chain, ChainConfig
from healthchain.crypto import KeyPair
from healthchain.state import address_from_public_key
from healthchain.vm import CATALOG, Contract, Frame, external, prototype


# -- small prototypes used only by the tests ------------------------------


if "test_counter" not in CATALOG:

    @prototype
    class Counter(Contract):
        prototype_name = "test_counter"

        def constructor(self, ctx: Frame, start: int = 0) -> None:
            ctx.store("n", start)

        @external
        def incr(self, ctx: Frame) -> int:
            n = ctx.load("n") + 1
            ctx.store("n", n)
            ctx.emit("incr", {"n": n})
            return n

        @external
        def get(self, ctx: Frame) -> int:
            return ctx.load("n")

        @external
        def noop(self, ctx: Frame) -> None:
            return None

        @external
        def emit_two(self, ctx: Frame, tag: str) -> None:
            ctx.emit("first", {"tag": tag})
            ctx.emit("second", {"tag": tag})

        @external
        def fail_after_write(self, ctx: Frame) -> None:
            ctx.store("n", 999)
            ctx.emit("never", {})
            ctx.revert("boom")

        @external
        def burn(self, ctx: Frame, steps: int = 10_000) -> None:
            ctx.step(steps)

    @prototype
    class Recurser(Contract):
        prototype_name = "test_recurser"

        @external
        def dive(self, ctx: Frame, levels: int) -> int:
            if levels <= 0:
                return ctx.depth
            return ctx.call(ctx.address, "dive", [levels - 1])

        @external
        def try_dive(self, ctx: Frame, levels: int) -> bool:
            ok = ctx.send(ctx.address, 0, "dive", [levels])
            ctx.store("last", ok)
            return ok

    @prototype
    class Sink(Contract):
        """Fallback records the balance it sees when its body starts."""

        prototype_name = "test_sink"

        def fallback(self, ctx: Frame) -> None:
            ctx.store("seen_balance", ctx.self_balance)

        @external
        def seen(self, ctx: Frame) -> int:
            return ctx.load("seen_balance")

    @prototype
    class Relay(Contract):
        """Calls another contract and swallows its revert via send."""

        prototype_name = "test_relay"

        @external
        def poke(self, ctx: Frame, target: str, method: str) -> bool:
            ctx.store("before", True)
            ok = ctx.send(target, 0, method)
            ctx.store("after", ok)
            return ok

        @external
        def must(self, ctx: Frame, target: str, method: str) -> None:
            ctx.store("before", True)
            ctx.call(target, method)


@pytest.fixture
def rng() -> random.Random:
    return random.Random(1234)


def make_keys(n: int, seed: int = 7) -> list[KeyPair]:
    r = random.Random(seed)
    return [KeyPair.generate(r) for _ in range(n)]


def addr(keys: KeyPair) -> str:
    return address_from_public_key(keys.public_key)


@pytest.fixture
def people() -> list[KeyPair]:
    return make_keys(6)


def new_chain(people: list[KeyPair], balance: int = 10_000, **cfg) -> Chain:
    cfg.setdefault("difficulty", 2)
    return Chain(ChainConfig(alloc={addr(k): balance for k in people}, **cfg))


@pytest.fixture
def chain(people) -> Chain:
    return new_chain(people)
