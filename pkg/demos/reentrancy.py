"""
Reentrancy and the guarded update
=================================

A vault that pays out before it updates its books can be drained by a
contract that calls back into ``withdraw`` from its fallback. The guarded
vault runs the same code behind a mutex slot, so the nested call reverts.
"""

# %%
# Two vaults, one honest depositor and one attacker.
import random

import healthchain.contracts  # noqa: F401  (registers the prototypes)
from healthchain import Chain, ChainConfig, KeyPair, TraceRecorder, address_from_public_key

rng = random.Random(1)
alice, mallory = KeyPair.generate(rng), KeyPair.generate(rng)
ALICE, MALLORY = address_from_public_key(alice.public_key), address_from_public_key(mallory.public_key)

tracer = TraceRecorder()
chain = Chain(ChainConfig(alloc={ALICE: 1000, MALLORY: 100}, difficulty=4), tracer=tracer)
_, vulnerable = chain.deploy(alice, "vulnerable_vault")
_, guarded = chain.deploy(alice, "guarded_vault")
chain.mine()
for vault in (vulnerable, guarded):
    chain.transact(alice, vault, "deposit", value=50)
_, exploit_v = chain.deploy(mallory, "exploit", [vulnerable])
_, exploit_g = chain.deploy(mallory, "exploit", [guarded])
chain.mine()

# %%
# The attacker deposits 5 into each vault and immediately withdraws it.
attack_v = chain.transact(mallory, exploit_v, "attack", [5], value=5)
attack_g = chain.transact(mallory, exploit_g, "attack", [5], value=5)
chain.mine()

for label, tx, exploit, vault in (("vulnerable", attack_v, exploit_v, vulnerable),
                                  ("guarded", attack_g, exploit_g, guarded)):
    receipt = chain.receipt(tx)
    print(f"{label:>10}: attack {receipt.status:<9} gas {receipt.gas_used:>6}  "
          f"exploit holds {chain.state.balance(exploit):>3}  vault holds {chain.state.balance(vault):>3}")

# %%
# The trace shows where the guarded attempt stopped.
print("revert reasons in the guarded attack:", tracer.revert_reasons(attack_g.digest()))
print("alice's claim on the drained vault:", chain.call_static(vulnerable, "balance_of", [ALICE]))
