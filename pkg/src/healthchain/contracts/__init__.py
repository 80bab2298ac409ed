"""Contract prototypes for the health data sharing patterns.

Importing this package registers every prototype in the VM catalog under its
stable name: ``vulnerable_vault``, ``exploit``, ``guarded_vault``,
``contract_manager``, ``entity_registry``, ``token_registry`` and
``publisher_hub`` (plus the helper prototypes ``entity`` and
``standalone_entity``).
"""

from .vaults import Exploit, GuardedVault, VulnerableVault, nonreentrant
from .manager import ContractManager
from .registry import Entity, EntityRegistry, StandaloneEntity
from .tokens import TokenRegistry
from .pubsub import PublisherHub

__all__ = [
    "ContractManager",
    "Entity",
    "EntityRegistry",
    "Exploit",
    "GuardedVault",
    "PublisherHub",
    "StandaloneEntity",
    "TokenRegistry",
    "VulnerableVault",
    "nonreentrant",
]
