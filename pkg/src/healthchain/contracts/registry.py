"""Entity registry: a flyweight factory for on-chain healthcare entities.

Intrinsic data shared by many entities (an insurance policy, say) is written
once into the registry, field by field. Each entity gets its own small
contract holding only its extrinsic fields and a reference to the shared
record. ``StandaloneEntity`` is the naive layout that copies everything into
every entity and exists as the baseline for storage measurements.
"""

from __future__ import annotations

from typing import Any, Optional

from ..vm import Contract, Frame, external, prototype

KINDS = ("Patient", "Provider", "Insurer")


def _fields(ctx: Frame, data: Any) -> dict[str, Any]:
    ctx.require(isinstance(data, dict) and all(isinstance(k, str) for k in data), "bad-fields")
    return data


@prototype
class Entity(Contract):
    """Extrinsic, entity-specific state deployed by the registry."""

    prototype_name = "entity"

    def constructor(self, ctx: Frame, entity_id: str, kind: str, intrinsic_ref: Optional[str],
                    extrinsic: dict) -> None:
        extrinsic = _fields(ctx, extrinsic)
        ctx.store("meta", {
            "entity_id": entity_id,
            "kind": kind,
            "intrinsic_ref": intrinsic_ref,
            "registry": ctx.caller,
            "fields": sorted(extrinsic),
        })
        for name in sorted(extrinsic):
            ctx.store("field", name, extrinsic[name])

    @external
    def meta(self, ctx: Frame) -> dict:
        return ctx.load("meta")

    @external
    def extrinsic(self, ctx: Frame) -> dict:
        meta = ctx.load("meta")
        return {name: ctx.load("field", name) for name in meta["fields"]}


@prototype
class StandaloneEntity(Contract):
    """Naive layout: intrinsic data duplicated into every entity contract."""

    prototype_name = "standalone_entity"

    def constructor(self, ctx: Frame, entity_id: str, kind: str, extrinsic: dict,
                    intrinsic: dict) -> None:
        extrinsic, intrinsic = _fields(ctx, extrinsic), _fields(ctx, intrinsic)
        ctx.store("meta", {
            "entity_id": entity_id,
            "kind": kind,
            "extrinsic_fields": sorted(extrinsic),
            "intrinsic_fields": sorted(intrinsic),
        })
        for name in sorted(extrinsic):
            ctx.store("field", name, extrinsic[name])
        for name in sorted(intrinsic):
            ctx.store("intrinsic", name, intrinsic[name])

    @external
    def record(self, ctx: Frame) -> dict:
        meta = ctx.load("meta")
        return {
            "entity_id": meta["entity_id"],
            "kind": meta["kind"],
            "extrinsic": {n: ctx.load("field", n) for n in meta["extrinsic_fields"]},
            "intrinsic": {n: ctx.load("intrinsic", n) for n in meta["intrinsic_fields"]},
        }


@prototype
class EntityRegistry(Contract):
    prototype_name = "entity_registry"

    def constructor(self, ctx: Frame) -> None:
        ctx.store("owner", ctx.caller)

    @external
    def register_intrinsic(self, ctx: Frame, key: str, data: dict) -> bool:
        """Store shared data under ``key``. Returns False if it already exists."""
        data = _fields(ctx, data)
        ctx.require(isinstance(key, str) and key != "", "bad-key")
        if ctx.load("intrinsic-fields", key) is not None:
            return False
        for name in sorted(data):
            ctx.store("intrinsic", key, name, data[name])
        ctx.store("intrinsic-fields", key, sorted(data))
        return True

    @external
    def update_intrinsic(self, ctx: Frame, key: str, name: str, value: Any) -> None:
        ctx.require(ctx.caller == ctx.load("owner"), "unauthorized")
        names = ctx.load("intrinsic-fields", key)
        ctx.require(names is not None and name in names, "not-found")
        ctx.store("intrinsic", key, name, value)

    @external
    def intrinsic(self, ctx: Frame, key: str) -> dict:
        names = ctx.load("intrinsic-fields", key)
        ctx.require(names is not None, "not-found")
        return {name: ctx.load("intrinsic", key, name) for name in names}

    @external
    def get_entity(self, ctx: Frame, entity_id: str, kind: str, intrinsic_key: Optional[str] = None,
                   extrinsic: Optional[dict] = None) -> str:
        """Return the entity's contract address, deploying it on first use."""
        ctx.require(isinstance(entity_id, str) and entity_id != "", "bad-entity-id")
        ctx.require(kind in KINDS, "bad-kind")
        record = ctx.load("entity", entity_id)
        if record is not None:
            ctx.require(record["kind"] == kind, "kind-mismatch")
            return record["address"]
        if intrinsic_key is not None:
            ctx.require(ctx.load("intrinsic-fields", intrinsic_key) is not None,
                        "unknown-intrinsic")
        address = ctx.create("entity", [entity_id, kind, intrinsic_key, extrinsic or {}])
        ctx.store("entity", entity_id, {"kind": kind, "address": address,
                                        "intrinsic_ref": intrinsic_key})
        return address

    @external
    def lookup(self, ctx: Frame, entity_id: str) -> Optional[dict]:
        return ctx.load("entity", entity_id)

    @external
    def get_record(self, ctx: Frame, entity_id: str) -> dict:
        """Combined intrinsic and extrinsic data for one entity."""
        record = ctx.load("entity", entity_id)
        ctx.require(record is not None, "not-found")
        key = record["intrinsic_ref"]
        intrinsic = self.intrinsic(ctx, key) if key is not None else {}
        return {
            "entity_id": entity_id,
            "kind": record["kind"],
            "address": record["address"],
            "intrinsic_ref": key,
            "intrinsic": intrinsic,
            "extrinsic": ctx.call(record["address"], "extrinsic"),
        }
