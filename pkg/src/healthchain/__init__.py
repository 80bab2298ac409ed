"""Deterministic mini-blockchain and design patterns for health data sharing."""

from .chain import (
    Block,
    Chain,
    ChainConfig,
    Receipt,
    Transaction,
    apply_transaction,
    load_chain,
    mine_block,
    new_transaction,
    save_chain,
    verify_chain,
    verify_file,
)
from .crypto import KeyPair
from .state import WorldState, address_from_public_key, contract_address
from .vm import GasSchedule, LogEvent, MessageCall, TraceRecorder, execute_call

__version__ = "0.1.0"
