"""Client-distribution families, shard partitioning and data ingestion.

A meta-distribution describes how per-client data distributions are
drawn.  Five families are supported:

    gaussian-classification   labelled Gaussian blobs; per-client class
                              means are perturbed around a fixed layout
    gaussian-mean-estimation  unlabelled Gaussians; client centers are
                              drawn around the origin
    point-regression-interp   unlabelled point masses
    homogeneous               a single fixed labelled distribution
                              shared by every client
    fixed-dataset-shards      clients own disjoint label-sorted shards
                              of a fixed dataset

All instances live in the closed Euclidean ball of radius
``domain_radius``; Gaussian draws falling outside are radially clamped
onto the sphere and the clamp fraction is tracked by the caller.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CapabilityError, FormatError, ParameterError
from .seeding import SeedPath

logger = logging.getLogger(__name__)

UNLABELED = -1

FAMILIES = (
    "gaussian-classification",
    "gaussian-mean-estimation",
    "point-regression-interp",
    "homogeneous",
    "fixed-dataset-shards",
)

_REQUIRED_PARAMS = {
    "gaussian-classification": {"dim", "num_classes", "class_spread", "noise"},
    "gaussian-mean-estimation": {"dim", "mean_spread", "noise"},
    "point-regression-interp": {"dim", "point_spread"},
    "homogeneous": {"dim", "num_classes", "noise"},
    "fixed-dataset-shards": {"num_shards", "shards_per_client"},
}

_VARIANCE_PARAMS = ("class_spread", "noise", "mean_spread", "point_spread")


@dataclass(frozen=True)
class FixedDataset:
    """An in-memory dataset with features scaled to [0, 1]."""

    features: np.ndarray  # (N, D) float64
    labels: np.ndarray  # (N,) int64

    def __post_init__(self):
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise ParameterError("features must be (N, D) with one label per row")

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class MetaDistribution:
    """Distribution over client data distributions."""

    family: str
    params: dict
    domain_radius: float = 1.0
    dataset: FixedDataset | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        required = _REQUIRED_PARAMS[self.family]
        missing = required - set(self.params)
        if missing:
            raise ParameterError(f"{self.family} requires parameters {sorted(missing)}")
        unknown = set(self.params) - required
        if unknown:
            raise ParameterError(f"{self.family} does not accept parameters {sorted(unknown)}")
        if self.domain_radius <= 0:
            raise ParameterError("domain_radius must be > 0")
        for name in _VARIANCE_PARAMS:
            if name in self.params and name != "noise" and self.params[name] < 0:
                raise ParameterError(f"{name} must be >= 0")
        if self.params.get("noise", 1.0) < 0:
            raise ParameterError("noise must be >= 0")
        if self.family == "gaussian-mean-estimation" and self.params["noise"] <= 0:
            # the population/client KL is only defined for positive noise
            raise ParameterError("gaussian-mean-estimation requires noise > 0")
        if self.family == "fixed-dataset-shards" and self.dataset is None:
            raise ParameterError("fixed-dataset-shards requires an attached dataset")
        for name in ("dim", "num_classes", "num_shards", "shards_per_client"):
            if name in self.params and int(self.params[name]) < 1:
                raise ParameterError(f"{name} must be a positive integer")

    @property
    def dim(self) -> int:
        if self.family == "fixed-dataset-shards":
            return self.dataset.dim
        return int(self.params["dim"])

    @property
    def labeled(self) -> bool:
        return self.family in ("gaussian-classification", "homogeneous", "fixed-dataset-shards")


@dataclass(frozen=True)
class ClientDistribution:
    """One realized client: enough state to sample instances from it."""

    family: str
    domain_radius: float
    noise: float = 0.0
    class_means: np.ndarray | None = None  # (C, d) for labelled Gaussian families
    center: np.ndarray | None = None  # (d,) for mean estimation / point mass
    pool: np.ndarray | None = None  # index pool for fixed-dataset clients
    dataset: FixedDataset | None = None

    def __post_init__(self):
        if self.noise < 0:
            raise ParameterError("noise must be >= 0")
        for arr in (self.class_means, self.center):
            if arr is not None and np.linalg.norm(arr, axis=-1).max() > self.domain_radius * (1 + 1e-9):
                raise ParameterError("client parameters must lie inside the domain ball")

    @property
    def dim(self) -> int:
        if self.pool is not None:
            return self.dataset.dim
        if self.center is not None:
            return len(self.center)
        return self.class_means.shape[1]


def clamp_to_ball(x: np.ndarray, radius: float) -> tuple[np.ndarray, int]:
    """Radially project rows of ``x`` onto the ball; returns (points, #clamped)."""
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    over = norms > radius
    n_clamped = int(np.count_nonzero(over))
    if n_clamped:
        x = np.where(over, x * (radius / norms), x)
    return x, n_clamped


def class_mean_layout(num_classes: int, dim: int, radius: float) -> np.ndarray:
    """Fixed, well-separated class means: evenly spaced on a circle of
    radius radius/2 in the first two coordinates (a segment for dim=1)."""
    means = np.zeros((num_classes, dim))
    r = radius / 2.0
    if dim == 1:
        means[:, 0] = np.linspace(-r, r, num_classes)
    else:
        angles = 2 * np.pi * np.arange(num_classes) / num_classes
        means[:, 0] = r * np.cos(angles)
        means[:, 1] = r * np.sin(angles)
    return means


def draw_client(meta: MetaDistribution, seed: SeedPath) -> ClientDistribution:
    """Draw one client distribution from the meta-distribution.

    ``fixed-dataset-shards`` clients are not drawn one at a time; use
    :func:`flbounds.construction.build_superclient`, which allocates
    disjoint shard pools across the whole grid.
    """
    r = meta.domain_radius
    if meta.family == "homogeneous":
        means = class_mean_layout(int(meta.params["num_classes"]), meta.dim, r)
        return ClientDistribution("homogeneous", r, noise=meta.params["noise"], class_means=means)
    rng = seed.generator()
    if meta.family == "gaussian-classification":
        c = int(meta.params["num_classes"])
        base = class_mean_layout(c, meta.dim, r)
        means = base + meta.params["class_spread"] * rng.standard_normal((c, meta.dim))
        means, _ = clamp_to_ball(means, r)
        return ClientDistribution(meta.family, r, noise=meta.params["noise"], class_means=means)
    if meta.family == "gaussian-mean-estimation":
        center = meta.params["mean_spread"] * rng.standard_normal(meta.dim)
        center, _ = clamp_to_ball(center[None, :], r)
        return ClientDistribution(meta.family, r, noise=meta.params["noise"], center=center[0])
    if meta.family == "point-regression-interp":
        point = meta.params["point_spread"] * rng.standard_normal(meta.dim)
        point, _ = clamp_to_ball(point[None, :], r)
        return ClientDistribution(meta.family, r, center=point[0])
    raise CapabilityError(f"draw_client does not support family {meta.family!r}")


def sample_batch(
    client: ClientDistribution, count: int, seed: SeedPath
) -> tuple[np.ndarray, np.ndarray, int]:
    """Draw ``count`` i.i.d. instances; returns (features, labels, #clamped).

    Labels are ``UNLABELED`` for the unlabelled families.  Fixed-dataset
    clients draw *without replacement* from their shard pool so that the
    train and test roles of a supersample never share an instance.
    """
    if count < 1:
        raise ParameterError("count must be >= 1")
    labels = np.full(count, UNLABELED, dtype=np.int64)
    if client.family == "point-regression-interp":
        return np.tile(client.center, (count, 1)), labels, 0
    rng = seed.generator()
    if client.family == "gaussian-mean-estimation":
        x = client.center + client.noise * rng.standard_normal((count, len(client.center)))
        x, clamped = clamp_to_ball(x, client.domain_radius)
        return x, labels, clamped
    if client.family in ("gaussian-classification", "homogeneous"):
        num_classes = len(client.class_means)
        labels = rng.integers(0, num_classes, size=count)
        x = client.class_means[labels] + client.noise * rng.standard_normal(
            (count, client.class_means.shape[1])
        )
        x, clamped = clamp_to_ball(x, client.domain_radius)
        return x, labels.astype(np.int64), clamped
    if client.family == "fixed-dataset-shards":
        if count > len(client.pool):
            raise ParameterError(
                f"requested {count} instances without replacement from a pool of {len(client.pool)}"
            )
        picks = rng.choice(client.pool, size=count, replace=False)
        return client.dataset.features[picks].copy(), client.dataset.labels[picks].copy(), 0
    raise CapabilityError(f"unknown client family {client.family!r}")


def sample_instance(client: ClientDistribution, seed: SeedPath):
    """Draw a single instance: returns (x, label)."""
    x, y, _ = sample_batch(client, 1, seed)
    return x[0], int(y[0])


@dataclass(frozen=True)
class ShardPlan:
    """Label-sorted shards and their random assignment to clients."""

    num_shards: int
    shards_per_client: int
    shard_size: int
    shards: tuple  # tuple of index arrays, label-contiguous
    assignment: tuple  # assignment[c] = tuple of shard indices owned by client c

    @property
    def num_clients(self) -> int:
        return len(self.assignment)

    def client_pool(self, client: int) -> np.ndarray:
        return np.concatenate([self.shards[s] for s in self.assignment[client]])


def shard_partition(
    labels, num_shards: int, shards_per_client: int, seed: SeedPath
) -> ShardPlan:
    """Sort indices by label, slice into equal shards, assign disjoint
    shard groups to clients at random."""
    labels = np.asarray(labels)
    n = len(labels)
    if num_shards < 1 or shards_per_client < 1:
        raise ParameterError("num_shards and shards_per_client must be >= 1")
    if n % num_shards != 0:
        raise ParameterError(f"dataset size {n} is not divisible into {num_shards} shards")
    if num_shards % shards_per_client != 0:
        raise ParameterError("num_shards must be a multiple of shards_per_client")
    shard_size = n // num_shards
    order = np.argsort(labels, kind="stable")
    shards = tuple(order[k * shard_size : (k + 1) * shard_size] for k in range(num_shards))
    perm = seed.generator().permutation(num_shards)
    num_clients = num_shards // shards_per_client
    assignment = tuple(
        tuple(int(s) for s in perm[c * shards_per_client : (c + 1) * shards_per_client])
        for c in range(num_clients)
    )
    return ShardPlan(num_shards, shards_per_client, shard_size, shards, assignment)


_IDX_IMAGE_MAGIC = 0x00000803
_IDX_LABEL_MAGIC = 0x00000801


def _read_be32(f, path) -> int:
    data = f.read(4)
    if len(data) != 4:
        raise FormatError(f"{path}: truncated header")
    return struct.unpack(">I", data)[0]


def load_idx(images_path, labels_path) -> FixedDataset:
    """Load an IDX image/label file pair, bit-exactly.

    Pixels are scaled to [0, 1]; image and label counts must agree.
    """
    with open(images_path, "rb") as f:
        magic = _read_be32(f, images_path)
        if magic != _IDX_IMAGE_MAGIC:
            raise FormatError(
                f"{images_path}: image magic mismatch (got {magic:#010x}, want {_IDX_IMAGE_MAGIC:#010x})"
            )
        count = _read_be32(f, images_path)
        rows = _read_be32(f, images_path)
        cols = _read_be32(f, images_path)
        payload = f.read()
        if len(payload) != count * rows * cols:
            raise FormatError(
                f"{images_path}: payload holds {len(payload)} bytes, header promises {count * rows * cols}"
            )
        pixels = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols)
    with open(labels_path, "rb") as f:
        magic = _read_be32(f, labels_path)
        if magic != _IDX_LABEL_MAGIC:
            raise FormatError(
                f"{labels_path}: label magic mismatch (got {magic:#010x}, want {_IDX_LABEL_MAGIC:#010x})"
            )
        label_count = _read_be32(f, labels_path)
        raw = f.read()
        if len(raw) != label_count:
            raise FormatError(f"{labels_path}: payload holds {len(raw)} labels, header promises {label_count}")
        labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
    if count != label_count:
        raise FormatError(f"image count {count} != label count {label_count}")
    return FixedDataset(features=pixels.astype(np.float64) / 255.0, labels=labels)


def kl_population_vs_client(meta: MetaDistribution, client: ClientDistribution) -> float:
    """KL divergence (nats) between the population data distribution and
    one client's distribution, in closed form for the conjugate Gaussian
    mean-estimation family: the population marginal is N(0, (noise^2 +
    spread^2) I) and the client is N(center, noise^2 I)."""
    if meta.family != "gaussian-mean-estimation" or client.family != meta.family:
        raise CapabilityError(
            "population/client KL is only available in closed form for gaussian-mean-estimation"
        )
    d = meta.dim
    sig2 = float(meta.params["noise"]) ** 2
    tau2 = float(meta.params["mean_spread"]) ** 2
    shift2 = float(np.dot(client.center, client.center))
    val = 0.5 * (d * (sig2 + tau2) / sig2 - d + shift2 / sig2 + d * np.log(sig2 / (sig2 + tau2)))
    return max(val, 0.0)
