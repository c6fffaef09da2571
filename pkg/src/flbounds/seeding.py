"""Hierarchical seed paths feeding a counter-based generator.

Every random draw in the package is addressed by (master seed, path),
where the path is a tuple of strings and non-negative ints naming the
draw: e.g. ("experiment", 20, 50, "data", 2, "cell", 3, 1).  Two draws
with different paths are statistically independent, and a draw depends
only on its own path, never on execution order or worker count.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


def _key_component(part) -> int:
    """Map one path component to a stable 64-bit integer."""
    if isinstance(part, (bool, float)):
        raise ParameterError(f"seed path components must be int or str, got {part!r}")
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ParameterError(f"integer path components must be >= 0, got {part}")
        return int(part)
    if isinstance(part, str):
        # sha256 rather than hash(): stable across processes and platforms
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise ParameterError(f"seed path components must be int or str, got {part!r}")


@dataclass(frozen=True)
class SeedPath:
    """Address of one random draw: a master seed plus a path of names."""

    master: int
    path: tuple = ()

    def child(self, *parts) -> "SeedPath":
        return SeedPath(self.master, self.path + tuple(parts))

    def generator(self) -> np.random.Generator:
        key = tuple(_key_component(p) for p in self.path)
        seq = np.random.SeedSequence(self.master, spawn_key=key)
        return np.random.Generator(np.random.Philox(seq))
