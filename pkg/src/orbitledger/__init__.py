"""Blockchain-coordinated satellite network simulator."""

from .common import KinematicState, Orbit
from .ledger import (
    Block,
    BlockHeader,
    Chain,
    Transaction,
    append_block,
    block_hash,
    mine_block,
    mine_genesis,
    resolve_fork,
    validate_chain,
    verify_block,
)
from .tokens import decode_token, encode_token, mint_token, tokenize_asset

__version__ = "0.1.0"
