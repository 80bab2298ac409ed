from __future__ import annotations

import random
import threading
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from healthchain.crypto import DecryptionError, seal, sign
from healthchain.offchain import (
    AccessPolicy,
    AuditTrail,
    ConnectorDescriptor,
    ConnectorHandler,
    DatabaseProxy,
    DataSilo,
    InvalidInputError,
    NotFoundError,
    ProxyRequest,
    TokenIntegrityError,
    TokenRecord,
    TokenRevokedError,
    create_connector,
    proxy_read,
    proxy_write,
    redeem_token,
    tokenize_connector,
    verify_audit,
    verify_connector,
)
from healthchain.offchain.audit import AuditEntry
from healthchain.offchain.connector import MAX_DESCRIPTOR_BYTES

from conftest import make_keys

CLINIC, DOCTOR, NURSE, STRANGER = make_keys(4, seed=55)


@pytest.fixture
def silo():
    return DataSilo("clinicA", "LFQ", CLINIC, {"r1": {"bp": "120/80"}, "r2": {"hr": 60}})


@pytest.fixture
def setup(silo):
    desc = create_connector(silo, "clinic A records", {"schema": "ehr-v1"})
    policy = AccessPolicy()
    policy.grant(DOCTOR.public_key, "Read", "Write")
    policy.grant(NURSE.public_key, "Read")
    proxy = DatabaseProxy(ConnectorHandler([silo]), policy)
    return silo, desc, proxy


# -- silos and connectors -----------------------------------------------------


def test_silo_round_trip_on_disk(tmp_path, silo):
    silo.save(tmp_path / "s.json")
    again = DataSilo.load(tmp_path / "s.json", CLINIC)
    assert again.records == silo.records and again.kind == "LFQ"
    again.put("r3", {"x": 1})
    assert DataSilo.load(tmp_path / "s.json", CLINIC).get("r3") == {"x": 1}
    with pytest.raises(NotFoundError):
        silo.get("missing")
    with pytest.raises(InvalidInputError):
        DataSilo("x", "EHR", CLINIC)


def test_connector_verifies_and_is_deterministic(silo):
    a = create_connector(silo, "records", {"schema": "ehr-v1"})
    b = create_connector(silo, "records", {"schema": "ehr-v1"})
    assert a.to_bytes() == b.to_bytes()
    assert verify_connector(a, CLINIC.public_key)
    assert not verify_connector(a, DOCTOR.public_key)
    tampered = replace(a, meta={**a.meta, "schema": "ehr-v2"})
    assert not verify_connector(tampered, CLINIC.public_key)
    assert ConnectorDescriptor.from_bytes(a.to_bytes()) == a


def test_descriptor_is_minimal(silo):
    desc = create_connector(silo, "records")
    data = desc.to_bytes()
    assert len(data) <= MAX_DESCRIPTOR_BYTES
    assert b"120/80" not in data and b"r1" not in data
    with pytest.raises(InvalidInputError):
        create_connector(silo, "x" * 2000)
    with pytest.raises(InvalidInputError):
        create_connector(silo, "records", {"silo_id": "other"})
    with pytest.raises(InvalidInputError):
        create_connector(silo, "records", {"n": 1})


# -- proxy --------------------------------------------------------------------


def test_allowed_read_returns_document_and_logs_one_read(setup):
    _, desc, proxy = setup
    resp = proxy_read(proxy, NURSE, desc, "r1")
    assert resp.ok and resp.document == {"bp": "120/80"}
    assert [(e.action, e.target) for e in proxy.trail] == [("Read", "r1")]


def test_unknown_actor_is_denied_and_silo_untouched(setup):
    silo, desc, proxy = setup
    before = dict(silo.records)
    resp = proxy_write(proxy, STRANGER, desc, "r1", {"bp": "0/0"})
    assert resp.status == "denied" and resp.failed_check == "actor-allowed"
    assert silo.records == before
    assert [(e.action, e.reason) for e in proxy.trail] == [("Denied", "actor-allowed")]
    resp = proxy_write(proxy, NURSE, desc, "r1", {"bp": "0/0"})
    assert resp.failed_check == "actor-allowed" and silo.records == before


def test_missing_record_is_not_found_and_logged(setup):
    _, desc, proxy = setup
    resp = proxy_read(proxy, DOCTOR, desc, "nope")
    assert resp.status == "not-found" and resp.failed_check == "record-exists"
    assert proxy.trail.entries[-1].action == "Denied"


def test_forged_signature_and_descriptor_are_denied(setup, silo):
    _, desc, proxy = setup
    req = ProxyRequest.signed(DOCTOR, "Read", desc, "r1")
    forged = replace(req, record_id="r2")
    assert proxy.handle(forged).failed_check == "signature-valid"
    fake = replace(desc, meta={**desc.meta, "schema": "forged"})
    assert proxy_read(proxy, DOCTOR, fake, "r1").failed_check == "descriptor-valid"
    assert proxy.handle(replace(req, operation="Delete")).failed_check == "bad-operation"
    assert len(proxy.trail) == 3 and verify_audit(proxy.trail)


def test_policy_revocation(setup):
    _, desc, proxy = setup
    assert proxy_read(proxy, NURSE, desc, "r1").ok
    proxy.policy.revoke(NURSE.public_key)
    assert proxy_read(proxy, NURSE, desc, "r1").status == "denied"


def test_unknown_check_is_refused(silo):
    with pytest.raises(ValueError):
        DatabaseProxy(ConnectorHandler([silo]), AccessPolicy(checks=["vibes"]))


def test_fifty_mixed_requests_give_fifty_entries(setup):
    silo, desc, proxy = setup
    rng = random.Random(8)
    actors = [DOCTOR, NURSE, STRANGER]
    for i in range(50):
        actor = rng.choice(actors)
        record = rng.choice(["r1", "r2", "missing"])
        if rng.random() < 0.5:
            proxy_read(proxy, actor, desc, record)
        else:
            proxy_write(proxy, actor, desc, f"w{i}", {"i": i})
    assert len(proxy.trail) == 50
    assert [e.seq for e in proxy.trail] == list(range(50))
    assert verify_audit(proxy.trail)


def test_concurrent_requests_keep_a_strict_trail(setup):
    _, desc, proxy = setup

    def worker(n):
        for i in range(20):
            proxy_write(proxy, DOCTOR, desc, f"t{n}-{i}", i)

    threads = [threading.Thread(target=worker, args=(n,)) for n in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(proxy.trail) == 80 and verify_audit(proxy.trail)


# -- audit trail --------------------------------------------------------------


def filled_trail(n=6):
    trail = AuditTrail()
    for i in range(n):
        trail.append("actor", "Read", f"r{i}")
    return trail


def test_audit_mutation_is_rejected_at_that_seq():
    trail = filled_trail()
    assert verify_audit(trail)
    entries = list(trail)
    entries[3] = replace(entries[3], target="other")
    verdict = verify_audit(entries)
    assert not verdict and verdict.seq == 3


def test_audit_deletion_is_rejected_at_the_successor():
    entries = list(filled_trail())
    del entries[2]
    verdict = verify_audit(entries)
    assert not verdict and verdict.seq == 3


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.data())
def test_any_single_entry_mutation_is_detected(n, data):
    entries = list(filled_trail(n))
    i = data.draw(st.integers(0, n - 1))
    field = data.draw(st.sampled_from(["actor", "action", "target", "reason", "entry_digest"]))
    value = {"action": "Write", "entry_digest": "11" * 32}.get(field, "tampered")
    entries[i] = replace(entries[i], **{field: value})
    verdict = verify_audit(entries)
    assert not verdict and verdict.seq == i


def test_audit_file_round_trip(tmp_path):
    trail = AuditTrail(tmp_path / "audit.jsonl")
    for i in range(3):
        trail.append("a", "Write", f"r{i}")
    loaded = AuditTrail.load(tmp_path / "audit.jsonl")
    assert [e.to_json() for e in loaded] == [e.to_json() for e in trail]
    assert AuditEntry.from_json(trail.entries[0].to_json()) == trail.entries[0]
    with pytest.raises(ValueError):
        trail.append("a", "Explode", "r")


# -- tokens -------------------------------------------------------------------


def test_token_round_trip_is_byte_identical(setup):
    _, desc, _ = setup
    trail = AuditTrail()
    token = tokenize_connector(desc, CLINIC, DOCTOR.public_key, random.Random(1), trail)
    got = redeem_token(token, DOCTOR, trail)
    assert got.to_bytes() == desc.to_bytes()
    assert [e.action for e in trail] == ["TokenCreate", "TokenAccess"]
    assert TokenRecord.from_json(token.to_json()) == token


def test_token_wrong_key_and_revoked_are_denied(setup):
    _, desc, _ = setup
    trail = AuditTrail()
    token = tokenize_connector(desc, CLINIC, DOCTOR.public_key, trail=trail)
    with pytest.raises(DecryptionError):
        redeem_token(token, NURSE, trail)
    with pytest.raises(TokenRevokedError):
        redeem_token(token.revoked(), DOCTOR, trail)
    assert [(e.action, e.reason) for e in trail] == [
        ("TokenCreate", None), ("Denied", "decryption"), ("Denied", "revoked")]
    assert verify_audit(trail)


def test_token_integrity_failures(setup, silo):
    _, desc, _ = setup
    token = tokenize_connector(desc, CLINIC, DOCTOR.public_key)
    # the signature no longer covers a re-sealed payload
    other = tokenize_connector(desc, CLINIC, DOCTOR.public_key)
    spliced = replace(token, sealed_payload=other.sealed_payload)
    with pytest.raises(TokenIntegrityError):
        redeem_token(spliced, DOCTOR)
    # a descriptor signed by someone other than the token owner
    rogue = tokenize_connector(desc, CLINIC, DOCTOR.public_key)
    box = seal(DOCTOR.public_key, desc.to_bytes())
    forged = replace(rogue, sealed_payload=box, owner_signature=sign(STRANGER.secret_key, box.to_bytes()))
    with pytest.raises(TokenIntegrityError):
        redeem_token(forged, DOCTOR)
    with pytest.raises(InvalidInputError):
        tokenize_connector(desc, STRANGER, DOCTOR.public_key)


def test_redeem_fails_for_random_wrong_keys(setup):
    _, desc, _ = setup
    token = tokenize_connector(desc, CLINIC, DOCTOR.public_key)
    successes = 0
    for key in make_keys(20, seed=77):
        try:
            redeem_token(token, key)
            successes += 1
        except DecryptionError:
            pass
    assert successes == 0
