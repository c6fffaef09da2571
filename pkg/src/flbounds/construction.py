"""Superclient grid, supersamples, selection bits and training sets.

The grid holds K rows of two client distributions each; one column per
row participates in training, chosen by the participation bit of that
row.  Each cell owns an n-by-2 array of instances whose training column
is chosen row-wise by membership bits.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .distributions import (
    UNLABELED,
    ClientDistribution,
    MetaDistribution,
    draw_client,
    sample_batch,
    shard_partition,
)
from .errors import ParameterError, StructuralError
from .seeding import SeedPath

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SuperClientGrid:
    """K rows by 2 columns of realized client distributions."""

    meta: MetaDistribution
    clients: tuple  # clients[i][b] -> ClientDistribution
    k: int

    def __post_init__(self):
        if len(self.clients) != self.k or any(len(row) != 2 for row in self.clients):
            raise StructuralError("grid must have exactly K rows of 2 clients")

    def client(self, i: int, b: int) -> ClientDistribution:
        return self.clients[i][b]


@dataclass(frozen=True)
class SuperSampleTensor:
    """Instances for every grid cell: features (K, 2, n, 2, d), labels (K, 2, n, 2)."""

    features: np.ndarray
    labels: np.ndarray
    domain_radius: float
    clamp_fraction: float = 0.0

    def __post_init__(self):
        if self.features.ndim != 5 or self.features.shape[1] != 2 or self.features.shape[3] != 2:
            raise StructuralError("features must have shape (K, 2, n, 2, d)")
        if self.labels.shape != self.features.shape[:4]:
            raise StructuralError("labels must have shape (K, 2, n, 2)")

    @property
    def k(self) -> int:
        return self.features.shape[0]

    @property
    def n(self) -> int:
        return self.features.shape[2]

    @property
    def dim(self) -> int:
        return self.features.shape[4]


@dataclass(frozen=True)
class SelectionAssignment:
    """Participation bits v (K,) and membership bits u (K, 2, n)."""

    v: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        if self.v.ndim != 1 or self.u.shape != (len(self.v), 2, self.u.shape[2]):
            raise StructuralError("v must be (K,) and u must be (K, 2, n)")
        for bits in (self.v, self.u):
            if not np.isin(bits, (0, 1)).all():
                raise StructuralError("selection bits must be 0 or 1")

    @property
    def k(self) -> int:
        return len(self.v)

    @property
    def n(self) -> int:
        return self.u.shape[2]


def build_superclient(meta: MetaDistribution, k: int, seed: SeedPath) -> SuperClientGrid:
    """Draw the K-by-2 grid of client distributions.

    Cells of the stochastic families are mutually independent draws,
    each addressed by its own seed path.  The fixed-dataset family
    instead allocates 2K disjoint shard pools from a single partition so
    that no two cells share data.
    """
    if k < 1:
        raise ParameterError("K must be >= 1")
    if meta.family == "fixed-dataset-shards":
        plan = shard_partition(
            meta.dataset.labels,
            int(meta.params["num_shards"]),
            int(meta.params["shards_per_client"]),
            seed.child("shards"),
        )
        if plan.num_clients < 2 * k:
            raise ParameterError(
                f"shard plan provides {plan.num_clients} clients, grid needs {2 * k}"
            )
        rows = tuple(
            tuple(
                ClientDistribution(
                    meta.family,
                    meta.domain_radius,
                    pool=plan.client_pool(2 * i + b),
                    dataset=meta.dataset,
                )
                for b in range(2)
            )
            for i in range(k)
        )
        return SuperClientGrid(meta, rows, k)
    rows = tuple(
        tuple(draw_client(meta, seed.child("cell", i, b)) for b in range(2)) for i in range(k)
    )
    return SuperClientGrid(meta, rows, k)


def build_supersamples(grid: SuperClientGrid, n: int, seed: SeedPath) -> SuperSampleTensor:
    """Fill every cell with an n-by-2 array of i.i.d. instances."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    k = grid.k
    dim = grid.client(0, 0).dim
    features = np.empty((k, 2, n, 2, dim))
    labels = np.full((k, 2, n, 2), UNLABELED, dtype=np.int64)
    clamped = 0
    for i in range(k):
        for b in range(2):
            x, y, c = sample_batch(grid.client(i, b), 2 * n, seed.child("cell", i, b))
            features[i, b] = x.reshape(n, 2, dim)
            labels[i, b] = y.reshape(n, 2)
            clamped += c
    frac = clamped / (k * 2 * n * 2)
    if frac > 0.01:
        logger.warning("%.2f%% of supersample draws were clamped to the domain ball", 100 * frac)
    return SuperSampleTensor(features, labels, grid.meta.domain_radius, clamp_fraction=frac)


def draw_selection(k: int, n: int, seed: SeedPath) -> SelectionAssignment:
    """Draw fair participation and membership bits, independent of data."""
    if k < 1 or n < 1:
        raise ParameterError("K and n must be >= 1")
    rng = seed.generator()
    v = rng.integers(0, 2, size=k, dtype=np.uint8)
    u = rng.integers(0, 2, size=(k, 2, n), dtype=np.uint8)
    return SelectionAssignment(v, u)


def materialize_training_sets(z: SuperSampleTensor, a: SelectionAssignment) -> list:
    """Select each participating client's training set.

    Client i trains on row entries of cell (i, v_i) picked column-wise by
    its membership bits, preserving row order.  Returns a list of
    (features (n, d), labels (n,)) pairs.
    """
    if z.k != a.k or z.n != a.n:
        raise StructuralError(
            f"supersample ({z.k}, {z.n}) and selection ({a.k}, {a.n}) shapes disagree"
        )
    rows = np.arange(z.n)
    sets = []
    for i in range(z.k):
        b = int(a.v[i])
        cols = a.u[i, b]
        sets.append((z.features[i, b, rows, cols], z.labels[i, b, rows, cols]))
    return sets


def heldout_test_sets(z: SuperSampleTensor, a: SelectionAssignment) -> list:
    """Complementary columns of the training sets, same layout."""
    if z.k != a.k or z.n != a.n:
        raise StructuralError("shapes disagree")
    rows = np.arange(z.n)
    sets = []
    for i in range(z.k):
        b = int(a.v[i])
        cols = 1 - a.u[i, b]
        sets.append((z.features[i, b, rows, cols], z.labels[i, b, rows, cols]))
    return sets
