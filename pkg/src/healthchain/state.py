"""Accounts and world state with a write journal for frame-level rollback."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any, Iterator, Optional

from . import crypto
from .encoding import canonical_json

ADDRESS_SIZE = 20


def address_from_public_key(public_key: bytes) -> str:
    return crypto.digest(public_key)[-ADDRESS_SIZE:].hex()


def contract_address(creator: str, nonce: int) -> str:
    return crypto.digest(canonical_json({"creator": creator, "nonce": nonce}))[-ADDRESS_SIZE:].hex()


def is_address(value: Any) -> bool:
    if not isinstance(value, str) or len(value) != 2 * ADDRESS_SIZE:
        return False
    try:
        bytes.fromhex(value)
    except ValueError:
        return False
    return value == value.lower()


def storage_key(*parts: Any) -> str:
    """Storage slots are addressed by the digest of their logical key."""
    return crypto.digest_hex(canonical_json(list(parts)))


@dataclass
class ContractIdentity:
    prototype_name: str
    version: str
    instance_address: str

    def to_json(self) -> dict[str, str]:
        return {
            "prototype_name": self.prototype_name,
            "version": self.version,
            "instance_address": self.instance_address,
        }


@dataclass
class Account:
    balance: int = 0
    nonce: int = 0
    contract: Optional[ContractIdentity] = None
    storage: dict[str, bytes] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {
            "balance": self.balance,
            "nonce": self.nonce,
            "contract": self.contract.to_json() if self.contract else None,
            "storage": {k: self.storage[k].hex() for k in sorted(self.storage)},
        }


class WorldState:
    """Map of address to :class:`Account`.

    Every mutation goes through a method that records the previous value in a
    journal, so ``revert(mark)`` undoes everything after ``snapshot()``.
    """

    def __init__(self, accounts: Optional[dict[str, Account]] = None) -> None:
        self.accounts: dict[str, Account] = accounts if accounts is not None else {}
        self._journal: list[tuple] = []

    # -- journal ---------------------------------------------------------

    def snapshot(self) -> int:
        return len(self._journal)

    def revert(self, mark: int) -> None:
        while len(self._journal) > mark:
            entry = self._journal.pop()
            kind, address = entry[0], entry[1]
            if kind == "create":
                del self.accounts[address]
            elif kind == "balance":
                self.accounts[address].balance = entry[2]
            elif kind == "nonce":
                self.accounts[address].nonce = entry[2]
            elif kind == "contract":
                self.accounts[address].contract = entry[2]
            elif kind == "storage":
                key, old = entry[2], entry[3]
                if old is None:
                    self.accounts[address].storage.pop(key, None)
                else:
                    self.accounts[address].storage[key] = old

    def clear_journal(self) -> None:
        self._journal.clear()

    # -- accounts --------------------------------------------------------

    def __contains__(self, address: str) -> bool:
        return address in self.accounts

    def __iter__(self) -> Iterator[str]:
        return iter(self.accounts)

    def get(self, address: str) -> Optional[Account]:
        return self.accounts.get(address)

    def ensure(self, address: str) -> Account:
        acct = self.accounts.get(address)
        if acct is None:
            acct = self.accounts[address] = Account()
            self._journal.append(("create", address))
        return acct

    def balance(self, address: str) -> int:
        acct = self.accounts.get(address)
        return acct.balance if acct else 0

    def nonce(self, address: str) -> int:
        acct = self.accounts.get(address)
        return acct.nonce if acct else 0

    def set_balance(self, address: str, value: int) -> None:
        if value < 0:
            raise ValueError("negative balance")
        acct = self.ensure(address)
        self._journal.append(("balance", address, acct.balance))
        acct.balance = value

    def add_balance(self, address: str, delta: int) -> None:
        self.set_balance(address, self.balance(address) + delta)

    def transfer(self, sender: str, recipient: str, value: int) -> bool:
        if value < 0 or self.balance(sender) < value:
            return False
        self.add_balance(sender, -value)
        self.add_balance(recipient, value)
        return True

    def increment_nonce(self, address: str) -> int:
        acct = self.ensure(address)
        self._journal.append(("nonce", address, acct.nonce))
        acct.nonce += 1
        return acct.nonce

    def set_contract(self, address: str, identity: ContractIdentity) -> None:
        acct = self.ensure(address)
        self._journal.append(("contract", address, acct.contract))
        acct.contract = identity

    def contract(self, address: str) -> Optional[ContractIdentity]:
        acct = self.accounts.get(address)
        return acct.contract if acct else None

    # -- storage ---------------------------------------------------------

    def load(self, address: str, key: str) -> Optional[bytes]:
        acct = self.accounts.get(address)
        return acct.storage.get(key) if acct else None

    def store(self, address: str, key: str, value: Optional[bytes]) -> None:
        acct = self.ensure(address)
        if acct.contract is None:
            raise ValueError("storage of non-contract accounts must stay empty")
        self._journal.append(("storage", address, key, acct.storage.get(key)))
        if value is None:
            acct.storage.pop(key, None)
        else:
            acct.storage[key] = value

    # -- whole-state views ---------------------------------------------

    def total_supply(self) -> int:
        return sum(a.balance for a in self.accounts.values())

    def to_json(self) -> dict[str, Any]:
        return {addr: self.accounts[addr].to_json() for addr in sorted(self.accounts)}

    def digest(self) -> str:
        return crypto.digest_hex(canonical_json(self.to_json()))

    def copy(self) -> "WorldState":
        return WorldState(copy.deepcopy(self.accounts))

    @classmethod
    def from_allocations(cls, alloc: dict[str, int]) -> "WorldState":
        return cls({addr: Account(balance=bal) for addr, bal in alloc.items()})
