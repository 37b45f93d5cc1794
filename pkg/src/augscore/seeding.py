"""Deterministic seed derivation and keyed-hash shuffles.

Every randomized selection in the pipeline (splits, pool sampling, mixing)
is realized by sorting stable keys by sha256 over ``domain:seed:key``. That
makes results identical across runs, platforms, and Python versions, and
independent of input file ordering.
"""
from __future__ import annotations

import hashlib
from typing import Iterable, Sequence, TypeVar

T = TypeVar("T")

_MASK64 = (1 << 64) - 1


def stable_hash(*parts: object) -> int:
    """64-bit integer hash of the string forms of ``parts``."""
    raw = ":".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(raw).digest()[:8], "big")


def derive_seed(domain: str, base_seed: int) -> int:
    """Per-use-site seed derived from one base seed."""
    return stable_hash("seed", domain, base_seed) & _MASK64


def shuffle_key(domain: str, seed: int, key: str) -> str:
    raw = f"{domain}:{seed}:{key}".encode("utf-8")
    return hashlib.sha256(raw).hexdigest()


def keyed_order(domain: str, seed: int, keys: Iterable[str]) -> list[str]:
    """Seeded shuffle of ``keys`` that depends only on the key values."""
    return sorted(keys, key=lambda k: shuffle_key(domain, seed, k))


def keyed_sample(domain: str, seed: int, items: Sequence[T], key_of, n: int) -> list[T]:
    """First ``n`` items of the keyed shuffle; prefixes nest as ``n`` grows."""
    ordered = sorted(items, key=lambda it: shuffle_key(domain, seed, key_of(it)))
    return ordered[:n]
