"""
Streams aleatorios derivados de una semilla raíz.

Cada stream se identifica por (réplica, período, propósito), de modo que
cualquier período de cualquier réplica se puede regenerar de forma aislada.
"""
from __future__ import annotations

import hashlib
from typing import Union

import numpy as np

Key = Union[int, str]


def purpose_code(tag: str) -> int:
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def _key_to_int(key: Key) -> int:
    if isinstance(key, str):
        return purpose_code(key)
    if key < 0:
        raise ValueError(f"Las claves de stream deben ser no negativas (recibido {key})")
    return int(key)


def child_seed(root_seed: int, *keys: Key) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(root_seed), spawn_key=tuple(_key_to_int(k) for k in keys))


def child_stream(root_seed: int, *keys: Key) -> np.random.Generator:
    """Generator determinista para la clave dada."""
    return np.random.default_rng(child_seed(root_seed, *keys))


def derive_seed(root_seed: int, *keys: Key) -> int:
    """Semilla entera (para réplicas completas que luego derivan sus propios streams)."""
    return int(child_seed(root_seed, *keys).generate_state(1, dtype=np.uint32)[0])
