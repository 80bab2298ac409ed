from __future__ import annotations

from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from healthchain.chain import (
    Chain,
    ChainConfig,
    ChainFormatError,
    apply_transaction,
    check_transaction,
    dump_chain,
    new_transaction,
    parse_chain,
    pow_target,
    TransactionRejected,
    verify_bytes,
    verify_chain,
)
from healthchain.state import contract_address
from healthchain.vm import BlockContext, GasSchedule

from conftest import addr, make_keys, new_chain

S = GasSchedule()
MINER = "ee" * 20


def test_genesis_embeds_config_and_allocations(people, chain):
    g = chain.blocks[0]
    assert g.height == 0 and g.prev_hash == "00" * 32
    assert g.config["alloc"] == {addr(k): 10_000 for k in people}
    assert verify_chain(chain.blocks)


def test_empty_block_pays_only_the_reward(chain):
    chain.mine(MINER)
    assert chain.height == 1 and chain.tip.transactions == []
    assert chain.state.balance(MINER) == chain.config.block_reward
    assert chain.total_supply() == chain.expected_supply()


def test_difficulty_one_is_solved_on_first_attempt(people):
    chain = new_chain(people, difficulty=1)
    assert chain.mine().pow_nonce == 0
    assert pow_target(1) == 1 << 256


def test_pow_attempts_track_difficulty():
    difficulty = 1 << 16
    chain = Chain(ChainConfig(difficulty=difficulty))
    attempts = [chain.mine().pow_nonce + 1 for _ in range(20)]
    mean = sum(attempts) / len(attempts)
    assert difficulty / 3 <= mean <= difficulty * 3
    assert all(int(b.block_hash, 16) < pow_target(difficulty) for b in chain.blocks)


def honest_chain(people, blocks=10):
    chain = new_chain(people)
    for i in range(blocks):
        sender, receiver = people[i % 3], people[(i + 1) % 3]
        chain.transact(sender, addr(receiver), value=1 + i)
        chain.mine(MINER)
    return chain


def test_honest_chain_verifies_and_replays_state(people):
    chain = honest_chain(people)
    verdict = verify_chain(chain.blocks)
    assert verdict and verdict.state.digest() == chain.state.digest()
    assert verify_bytes(chain.dump()).ok


def test_tampered_value_is_caught_at_that_height(people):
    chain = honest_chain(people)
    blocks = parse_chain(chain.dump())
    tx = blocks[4].transactions[0]
    blocks[4].transactions[0] = replace(tx, value=tx.value + 1)
    verdict = verify_chain(blocks)
    assert (verdict.ok, verdict.height, verdict.reason) == (False, 4, "hash-mismatch")


def test_remined_block_breaks_the_next_link(people):
    chain = honest_chain(people)
    original = parse_chain(chain.dump())
    fork = Chain.from_blocks(original[:4])
    fork.transact(people[5], addr(people[4]), value=1)
    fork.mine(MINER)
    blocks = fork.blocks + original[5:]
    assert verify_chain(blocks[:5])
    verdict = verify_chain(blocks)
    assert (verdict.ok, verdict.height, verdict.reason) == (False, 5, "prev-hash-mismatch")


def test_plain_transfer_gas_and_fee(people, chain):
    a, b = people[0], people[1]
    tx = chain.transact(a, addr(b), value=100, gas_limit=1000, gas_price=2)
    chain.mine(MINER)
    r = chain.receipt(tx)
    assert r.status == "Succeeded" and r.gas_used == S.call_base + S.value_transfer
    fee = r.gas_used * 2
    assert chain.state.balance(addr(a)) == 10_000 - 100 - fee
    assert chain.state.balance(addr(b)) == 10_100
    assert chain.state.balance(MINER) == fee + chain.config.block_reward


def test_out_of_gas_charges_full_budget_and_touches_only_fee_and_nonce(people, chain):
    owner = people[0]
    _, counter = chain.deploy(owner, "test_counter")
    chain.mine(MINER)
    cost = S.call_base + S.storage_read + S.storage_write + S.log_emit
    before = chain.state.copy()
    tx = chain.transact(owner, counter, "incr", gas_limit=cost - 1, gas_price=3)
    chain.mine(MINER)
    r = chain.receipt(tx)
    assert r.status == "OutOfGas" and r.gas_used == cost - 1 and r.logs == []
    after = chain.state
    assert after.balance(addr(owner)) == before.balance(addr(owner)) - 3 * (cost - 1)
    assert after.balance(MINER) == before.balance(MINER) + 3 * (cost - 1) + chain.config.block_reward
    assert after.nonce(addr(owner)) == before.nonce(addr(owner)) + 1
    assert chain.call_static(counter, "get") == 0
    # nothing else moved
    changed = {a for a in after.to_json() if after.to_json()[a] != before.to_json().get(a)}
    assert changed == {addr(owner), MINER}
    assert after.to_json()[counter] == before.to_json()[counter]


def test_exact_budget_succeeds(people, chain):
    owner = people[0]
    _, counter = chain.deploy(owner, "test_counter")
    chain.mine()
    cost = S.call_base + S.storage_read + S.storage_write + S.log_emit
    tx = chain.transact(owner, counter, "incr", gas_limit=cost, gas_price=1)
    chain.mine()
    assert chain.receipt(tx).status == "Succeeded"
    assert chain.receipt(tx).gas_used == cost


def test_reverted_tx_still_increments_nonce(people, chain):
    owner = people[0]
    _, counter = chain.deploy(owner, "test_counter")
    tx = chain.transact(owner, counter, "fail_after_write")
    chain.mine()
    assert chain.receipt(tx).revert_reason == "boom"
    assert chain.state.nonce(addr(owner)) == 2


def test_deploy_address_and_created_field(people, chain):
    tx, expected = chain.deploy(people[0], "test_counter", [3])
    chain.mine()
    assert expected == contract_address(addr(people[0]), 0)
    assert chain.receipt(tx).created_address == expected
    assert chain.call_static(expected, "get") == 3


def test_preconditions_reject_before_inclusion(people, chain):
    a, b = people[0], people[1]
    state, cfg = chain.state, chain.config
    good = new_transaction(a, 0, addr(b), value=1)
    check_transaction(state, good, cfg)
    cases = {
        "bad-nonce": new_transaction(a, 5, addr(b)),
        "insufficient-balance": new_transaction(a, 0, addr(b), value=10**9),
        "bad-gas-limit": new_transaction(a, 0, addr(b), gas_limit=0),
        "bad-signature": replace(good, value=2),
        "malformed-payload": new_transaction(a, 0, None, ""),
    }
    for reason, tx in cases.items():
        with pytest.raises(TransactionRejected, match=reason):
            check_transaction(state, tx, cfg)
    forged = new_transaction(b, 0, addr(b)).signed(b)
    forged = replace(forged, sender=addr(a))
    with pytest.raises(TransactionRejected, match="bad-signature"):
        check_transaction(state, forged, cfg)


def test_rejected_transactions_are_left_out_of_the_block(people, chain):
    a, b = people[0], people[1]
    chain.submit(new_transaction(a, 7, addr(b), value=1))
    chain.submit(new_transaction(a, 0, addr(b), value=10**9))
    ok = chain.transact(b, addr(a), value=1)
    block = chain.mine()
    assert [t.digest() for t in block.transactions] == [ok.digest()]
    assert verify_chain(chain.blocks)


def test_block_gas_cap_defers_transactions(people):
    chain = new_chain(people, block_gas_limit=100)
    a, b = people[0], people[1]
    first = chain.transact(a, addr(b), value=1, gas_limit=80)
    second = chain.transact(a, addr(b), value=1, gas_limit=80)
    assert chain.mine().transactions == [first]
    assert chain.mine().transactions == [second]
    assert chain.pending == []


def test_logs_are_globally_ordered(people, chain):
    owner = people[0]
    _, counter = chain.deploy(owner, "test_counter")
    chain.mine()
    for tag in ("a", "b", "c"):
        chain.transact(owner, counter, "emit_two", [tag])
    chain.mine()
    events = list(chain.logs(emitter=counter))
    keys = [(e.block_height, e.tx_index, e.log_index) for e in events]
    assert keys == [(2, i, j) for i in range(3) for j in range(2)]
    assert [(e.data["tag"], e.topic) for e in events] == [
        (t, name) for t in "abc" for name in ("first", "second")
    ]


def test_serialization_round_trip_is_byte_exact(people):
    chain = honest_chain(people, blocks=4)
    data = chain.dump()
    assert dump_chain(parse_chain(data)) == data
    again = Chain.from_blocks(parse_chain(data))
    assert again.state.digest() == chain.state.digest()
    assert again.receipt(chain.blocks[2].transactions[0].digest()).status == "Succeeded"


def test_strict_parse_rejects_non_canonical_lines(people):
    data = honest_chain(people, blocks=2).dump()
    lines = data.split(b"\n")
    lines[1] = b"{ " + lines[1][1:]
    with pytest.raises(ChainFormatError) as exc:
        parse_chain(b"\n".join(lines))
    assert exc.value.height == 1
    assert verify_bytes(data[:-1]).ok is False
    assert verify_bytes(b"").ok is False


def test_reordered_blocks_are_rejected(people):
    chain = honest_chain(people, blocks=3)
    blocks = list(chain.blocks)
    blocks[1], blocks[2] = blocks[2], blocks[1]
    assert not verify_chain(blocks)


def test_same_inputs_give_identical_chains(people):
    assert honest_chain(people).dump() == honest_chain(make_keys(6)).dump()


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 3000),
                          st.integers(0, 3), st.booleans()), max_size=12))
def test_supply_is_conserved_under_random_traffic(ops):
    keys = make_keys(4)
    chain = new_chain(keys, balance=5_000)
    for src, dst, value, price, mine in ops:
        chain.transact(keys[src], addr(keys[dst]), value=value, gas_limit=200, gas_price=price)
        if mine:
            chain.mine(MINER)
            assert chain.total_supply() == chain.expected_supply()
    chain.mine(MINER)
    assert chain.total_supply() == chain.expected_supply()
    assert all(chain.state.balance(addr(k)) >= 0 for k in keys)
    assert verify_chain(chain.blocks)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0))
def test_any_single_bit_flip_is_detected(position):
    data = _SMALL_CHAIN
    bit = position % (len(data) * 8)
    buf = bytearray(data)
    buf[bit // 8] ^= 1 << (bit % 8)
    assert not verify_bytes(bytes(buf)).ok


_SMALL_CHAIN = honest_chain(make_keys(6), blocks=3).dump()


def test_apply_transaction_directly(people):
    chain = new_chain(people)
    state = chain.state.copy()
    tx = new_transaction(people[0], 0, addr(people[1]), value=5, gas_limit=100, gas_price=1)
    r = apply_transaction(state, tx, chain.config, BlockContext(1, MINER, 1))
    assert r.status == "Succeeded"
    assert state.balance(MINER) == r.gas_used
