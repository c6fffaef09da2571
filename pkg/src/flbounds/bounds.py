"""Generalization bounds computed from estimated CMI tables.

Conventions shared by every bound here:

* all information quantities are in nats;
* loss-difference variables of a [0, 1] loss lie in [-1, 1], hence are
  1-sub-Gaussian; the sigma parameters default to 1 accordingly;
* a bound is monotone nondecreasing in every MI input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapabilityError, DomainError, ParameterError, StructuralError

LN2 = math.log(2.0)


@dataclass(frozen=True)
class FastRateConstants:
    """Multipliers of the fast-rate bound and their exponential budget.

    Valid constants satisfy c1, c2 > 1, c3, c4 > 0 and
    exp(-2*c3*c1) + exp(2*c3) <= 2 (same for c2, c4).
    """

    c1: float
    c2: float
    c3: float
    c4: float

    def __post_init__(self):
        if not (self.c1 > 1 and self.c2 > 1 and self.c3 > 0 and self.c4 > 0):
            raise ParameterError("need c1, c2 > 1 and c3, c4 > 0")
        for big, small in ((self.c1, self.c3), (self.c2, self.c4)):
            if math.exp(-2 * small * big) + math.exp(2 * small) > 2 + 1e-12:
                raise ParameterError("constants violate the exponential constraint")


@dataclass(frozen=True)
class CmiEstimates:
    """Estimated MI tables for one experiment.

    Tables that a given run does not produce are ``None``; each bound
    states which ones it needs.  ``og_delta_mi_by_v`` keeps the
    membership-variable MI separately per participation stratum (NaN
    for an empty stratum), with the empirical stratum weights in
    ``v_weights``; summing weight-by-MI recovers the conditional MI.
    """

    k: int
    n: int
    n_samples: int
    pg_level_mi: np.ndarray | None = None  # (K,)
    pg_delta_mi: np.ndarray | None = None  # (K,)
    og_level_cmi: np.ndarray | None = None  # (K, n)
    og_delta_mi_by_v: np.ndarray | None = None  # (K, n, 2)
    v_weights: np.ndarray | None = None  # (K, 2)
    local_v_mi: np.ndarray | None = None  # (K,)
    local_u_cmi: np.ndarray | None = None  # (K, n)
    level_bins: int | None = None
    notes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.k < 1 or self.n < 1:
            raise ParameterError("K and n must be >= 1")
        for name in ("pg_level_mi", "pg_delta_mi", "local_v_mi"):
            arr = getattr(self, name)
            if arr is not None and arr.shape != (self.k,):
                raise StructuralError(f"{name} must have shape (K,)")
        for name in ("og_level_cmi", "local_u_cmi"):
            arr = getattr(self, name)
            if arr is not None and arr.shape != (self.k, self.n):
                raise StructuralError(f"{name} must have shape (K, n)")
        if self.og_delta_mi_by_v is not None and self.og_delta_mi_by_v.shape != (self.k, self.n, 2):
            raise StructuralError("og_delta_mi_by_v must have shape (K, n, 2)")
        if self.v_weights is not None and self.v_weights.shape != (self.k, 2):
            raise StructuralError("v_weights must have shape (K, 2)")
        for name in ("pg_level_mi", "pg_delta_mi", "og_level_cmi", "local_v_mi", "local_u_cmi"):
            arr = getattr(self, name)
            if arr is not None and np.any(arr < 0):
                raise StructuralError(f"{name} entries must be >= 0")


def sqrt_ecmi_bound(e: CmiEstimates) -> float:
    """Square-root bound from loss-difference MI tables.

    Mean over clients of sqrt(2 * participation MI), plus the mean over
    (client, row) of the stratum-weighted sqrt(2 * membership MI); the
    weighting is by the observed participation-bit frequencies, so an
    empty stratum contributes zero weight.
    """
    if e.pg_delta_mi is None or e.og_delta_mi_by_v is None or e.v_weights is None:
        raise CapabilityError("square-root bound needs the loss-difference MI tables")
    part = float(np.mean(np.sqrt(2.0 * e.pg_delta_mi)))
    per_stratum = np.sqrt(2.0 * np.where(np.isnan(e.og_delta_mi_by_v), 0.0, e.og_delta_mi_by_v))
    weighted = np.einsum("ijs,is->ij", per_stratum, e.v_weights)
    return part + float(weighted.mean())


def solve_c_max(c_big: float, tol: float = 1e-10) -> float:
    """Largest t > 0 with exp(-2*t*c_big) + exp(2*t) <= 2.

    Bisection on (0, ln2/2]; the constraint function is negative just
    above 0 for c_big > 1 and positive at ln2/2, so the root is interior
    and unique.  Returns the lower end of the final bracket so the
    constraint always holds.  Monotone in c_big with limit ln2/2.
    """
    if c_big <= 1:
        raise ParameterError("c_big must be > 1 (at 1 the only solution is t = 0)")
    if tol <= 0:
        raise ParameterError("tol must be > 0")
    lo, hi = 0.0, LN2 / 2.0
    while hi - lo > tol:
        mid = (lo + hi) / 2.0
        if math.exp(-2.0 * mid * c_big) + math.exp(2.0 * mid) <= 2.0:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class FastRateResult:
    risk_bound: float
    gap_bound: float
    constants: FastRateConstants


def fastrate_bound(
    e: CmiEstimates,
    emp_risk: float,
    grid_min: float = 1.001,
    grid_max: float = 1000.0,
    grid_points: int = 60,
    tol: float = 1e-10,
) -> FastRateResult:
    """Fast-rate risk bound from level-variable MI tables.

    Minimizes ``c1*c2*emp_risk + sum_i pgMI_i / (c3*K) +
    sum_ij c1*ogMI_ij / (c4*K*n)`` over a log grid of (c1, c2), where c3
    and c4 are the largest multipliers admissible for c1 and c2.  Ties
    resolve to the smallest c1, then smallest c2.
    """
    if e.pg_level_mi is None or e.og_level_cmi is None:
        raise CapabilityError("fast-rate bound needs the level-variable MI tables")
    if not (0 <= emp_risk <= 1):
        raise ParameterError("empirical risk must lie in [0, 1]")
    if grid_min <= 1 or grid_max < grid_min or grid_points < 2:
        raise ParameterError("need 1 < grid_min <= grid_max and at least 2 grid points")
    grid = np.geomspace(grid_min, grid_max, grid_points)
    t_star = [solve_c_max(c, tol) for c in grid]
    pg_term = float(e.pg_level_mi.sum()) / e.k
    og_term = float(e.og_level_cmi.sum()) / (e.k * e.n)
    best = None
    for a, c1 in enumerate(grid):
        for b, c2 in enumerate(grid):
            value = float(c1 * c2 * emp_risk + pg_term / t_star[a] + c1 * og_term / t_star[b])
            if best is None or value < best[0]:
                best = (value, a, b)
    value, a, b = best
    constants = FastRateConstants(float(grid[a]), float(grid[b]), t_star[a], t_star[b])
    return FastRateResult(value, value - emp_risk, constants)


def _dp_budget(eps: float) -> float:
    return min(eps, (math.exp(eps) - 1.0) * eps)


def dp_bound(eps_global: float, eps_local, k: int, n: int) -> float:
    """Generalization guarantee implied by differential privacy.

    ``eps_global`` constrains the whole training pipeline (participation
    term); each ``eps_local[i]`` constrains client i's local algorithm
    (membership term).
    """
    if k < 1 or n < 1:
        raise ParameterError("K and n must be >= 1")
    eps_local = np.asarray(eps_local, dtype=np.float64)
    if eps_local.shape != (k,):
        raise StructuralError(f"need exactly K={k} local epsilons, got shape {eps_local.shape}")
    if eps_global < 0 or np.any(eps_local < 0):
        raise ParameterError("epsilons must be >= 0")
    part = math.sqrt(2.0 * _dp_budget(eps_global) / k)
    oos = float(np.mean([math.sqrt(2.0 * _dp_budget(float(eps)) / n) for eps in eps_local]))
    return part + oos


def bregman_aggregation_bound(e: CmiEstimates, sigma_part: float = 1.0, sigma_oos: float = 1.0) -> float:
    """Model-averaging bound under a Bregman loss, from local-model MI.

    Both terms carry an extra 1/K over the square-root bound; the MI is
    measured on quantized local models rather than the global one.
    """
    if e.local_v_mi is None or e.local_u_cmi is None:
        raise CapabilityError("Bregman aggregation bound needs quantized local-model MI tables")
    if sigma_part <= 0 or sigma_oos <= 0:
        raise ParameterError("sub-Gaussian proxies must be > 0")
    part = float(np.sum(np.sqrt(2.0 * sigma_part**2 * e.local_v_mi))) / e.k**2
    oos = float(np.sum(np.sqrt(2.0 * sigma_oos**2 * e.local_u_cmi))) / (e.k**2 * e.n)
    return part + oos


def comm_constraint_bound(bits: int, sigma: float, k: int, n: int) -> float:
    """Bregman aggregation bound with every MI capped at bits * ln 2,
    the most a model transmitted in ``bits`` bits can reveal."""
    if bits < 1:
        raise ParameterError("bits must be >= 1")
    if sigma <= 0:
        raise ParameterError("sigma must be > 0")
    if k < 1 or n < 1:
        raise ParameterError("K and n must be >= 1")
    cap = math.sqrt(2.0 * sigma**2 * bits * LN2)
    return cap / k + cap / k


def convex_smooth_bound(
    e: CmiEstimates,
    train_losses_of_global: np.ndarray,
    alpha: float,
    smoothness: float,
    interpolating: bool,
) -> float:
    """Out-of-sample bound for interpolating clients under a smooth,
    strongly convex loss.

    ``train_losses_of_global[i, j]`` is the mean training loss of the
    global model on client i's j-th slot; the theorem's hypothesis
    requires every local model to interpolate its own training set,
    asserted by the caller through ``interpolating``.
    """
    if not interpolating:
        raise CapabilityError("convex-smooth bound requires interpolating local algorithms")
    if e.local_u_cmi is None:
        raise CapabilityError("convex-smooth bound needs quantized local-model MI tables")
    if not (0 < alpha <= smoothness):
        raise ParameterError("need 0 < alpha <= smoothness")
    train_losses_of_global = np.asarray(train_losses_of_global, dtype=np.float64)
    if train_losses_of_global.shape != (e.k, e.n):
        raise StructuralError("train losses must have shape (K, n)")
    if np.any(train_losses_of_global < 0):
        raise DomainError("training losses must be >= 0")
    gamma = 2.0 * smoothness / (alpha * LN2)
    linear = gamma * float(e.local_u_cmi.sum()) / (e.k**3 * e.n)
    cross = (
        2.0
        * math.sqrt(gamma)
        * float(np.sum(np.sqrt(train_losses_of_global * e.local_u_cmi)))
        / (e.k**2 * e.n)
    )
    return linear + cross


def heterogeneity_kl_bound(kls, sigma: float, k: int) -> float:
    """Participation-gap term driven by client-vs-population divergence.

    The companion membership term of the full bound needs model-data MI,
    which this artifact does not estimate; callers report it as
    unavailable.
    """
    if k < 1:
        raise ParameterError("K must be >= 1")
    if sigma <= 0:
        raise ParameterError("sigma must be > 0")
    kls = np.asarray(kls, dtype=np.float64)
    if kls.shape != (k,):
        raise StructuralError(f"need exactly K={k} KL values, got shape {kls.shape}")
    if np.any(kls < 0):
        raise DomainError("KL divergences must be >= 0")
    return float(np.mean(np.sqrt(2.0 * sigma**2 * kls)))
