"""
Sharing a clinical silo end to end
==================================

A clinic describes its silo with a signed connector, seals it into a token
for a specialist, registers the token on chain, and serves reads through
the audited proxy. Patient data never touches the chain.
"""

# %%
import random

import healthchain.contracts  # noqa: F401
from healthchain import Chain, ChainConfig, KeyPair, address_from_public_key
from healthchain.offchain import (
    AccessPolicy,
    AuditTrail,
    ConnectorHandler,
    DatabaseProxy,
    DataSilo,
    TokenRecord,
    create_connector,
    proxy_read,
    redeem_token,
    tokenize_connector,
    verify_audit,
)

rng = random.Random(5)
clinic, specialist, stranger = (KeyPair.generate(rng) for _ in range(3))
CLINIC = address_from_public_key(clinic.public_key)
SPECIALIST = address_from_public_key(specialist.public_key)

silo = DataSilo("clinic-ehr", "LFQ", clinic, {"enc-1": {"patient": "Jane Roe", "dx": "asthma"}})
trail = AuditTrail()
descriptor = create_connector(silo, "clinic EHR", {"schema": "encounter-v1"})
print("descriptor bytes:", len(descriptor.to_bytes()))

# %%
# The token is sealed to the specialist and signed by the clinic.
chain = Chain(ChainConfig(alloc={CLINIC: 1000, SPECIALIST: 100}, difficulty=4))
_, registry = chain.deploy(clinic, "token_registry")
chain.mine()
token = tokenize_connector(descriptor, clinic, specialist.public_key, rng, trail)
register = chain.transact(clinic, registry, "register", [token.to_json()])
chain.mine()
token_id = chain.receipt(register).output

# %%
# The specialist reads the record on chain (leaving an audit event), opens
# the token with their key and reads through the proxy.
access = chain.transact(specialist, registry, "access", [token_id])
chain.mine()
on_chain = TokenRecord.from_json(chain.receipt(access).output)
shared = redeem_token(on_chain, specialist, trail)

policy = AccessPolicy()
policy.grant(specialist.public_key, "Read")
proxy = DatabaseProxy(ConnectorHandler([silo]), policy, trail)
print("specialist read:", proxy_read(proxy, specialist, shared, "enc-1").document)
print("stranger read:  ", proxy_read(proxy, stranger, shared, "enc-1").status)

# %%
print("off-chain audit:", [e.action for e in trail], "valid:", bool(verify_audit(trail)))
print("on-chain audit: ", [e.data["action"] for e in chain.logs(topic="audit")])
print("patient name on chain?", b"Jane Roe" in chain.dump())
