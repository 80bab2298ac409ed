"""
Poll versus push notifications
==============================

The same publications reach the same subscribers whether an off-chain
messenger polls the event log or an oracle answers on-chain tasks. Push
costs more gas because the hub filters subscribers and stores a task per
publication, and every task needs a callback transaction.
"""

# %%
import random
from collections import Counter

import healthchain.contracts  # noqa: F401
from healthchain import Chain, ChainConfig, KeyPair, address_from_public_key
from healthchain.notify import Messenger, Oracle

rng = random.Random(3)
hospital, oracle_keys, *clinicians = (KeyPair.generate(rng) for _ in range(7))
everyone = [hospital, oracle_keys, *clinicians]
chain = Chain(ChainConfig(alloc={address_from_public_key(k.public_key): 10**6 for k in everyone},
                          difficulty=1))
ORACLE = address_from_public_key(oracle_keys.public_key)
_, poll_hub = chain.deploy(hospital, "publisher_hub", ["poll"])
_, push_hub = chain.deploy(hospital, "publisher_hub", ["push", ORACLE, 1])
chain.transact(hospital, push_hub, value=100)  # oracle escrow
chain.mine()

topics = ["labs", "imaging", "discharge"]
for keys in clinicians:
    for topic in rng.sample(topics, 2):
        for hub in (poll_hub, push_hub):
            chain.transact(keys, hub, "subscribe", [topic])
chain.mine()

# %%
oracle = Oracle(oracle_keys)
gas = Counter()
for _ in range(5):
    topic = rng.choice(topics)
    for hub, mode in ((poll_hub, "poll"), (push_hub, "push")):
        tx = chain.transact(hospital, hub, "publish", [topic, "ref"])
        chain.mine()
        gas[mode] += chain.receipt(tx).gas_used
    for tx in oracle.run_once(chain):
        chain.mine()
        gas["push"] += chain.receipt(tx).gas_used
oracle.reconcile(chain)

# %%
polled, _ = Messenger(poll_hub).poll_once(chain)
same = Counter(n.key() for n in polled) == Counter(n.key() for n in oracle.delivered)
print("notifications delivered:", len(polled), "identical in both modes:", same)
print("gas used  poll:", gas["poll"], " push:", gas["push"])
print("oracle fees earned:", chain.state.balance(ORACLE) - 10**6)
