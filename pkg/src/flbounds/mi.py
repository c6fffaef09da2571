"""Plug-in mutual information estimation for discrete variables.

Estimates substitute empirical cell frequencies into the MI formula; no
bias correction is applied by default.  The plug-in estimator carries a
positive small-sample bias of roughly (|X|-1)(|Y|-1)/(2N) nats, which
:func:`plugin_bias_hint` reports for display next to estimates.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import ParameterError


def _factorize(values: np.ndarray) -> tuple[np.ndarray, int]:
    uniq, inverse = np.unique(values, return_inverse=True)
    return inverse, len(uniq)


def plugin_mi(x, y, miller_madow: bool = False) -> float:
    """Plug-in mutual information (nats) between two discrete samples.

    Degenerate inputs (a single observation, or a constant variable)
    estimate zero and emit a RuntimeWarning.  With ``miller_madow`` the
    Miller-Madow entropy corrections are applied (off for all headline
    numbers; useful for sensitivity checks only).
    """
    x = np.asarray(x).reshape(-1)
    y = np.asarray(y).reshape(-1)
    if len(x) != len(y):
        raise ParameterError("x and y must have the same length")
    n = len(x)
    if n == 0:
        raise ParameterError("need at least one sample")
    ix, kx = _factorize(x)
    iy, ky = _factorize(y)
    if n == 1 or kx == 1 or ky == 1:
        warnings.warn("degenerate sample for plug-in MI; estimating 0", RuntimeWarning, stacklevel=2)
        return 0.0
    joint = np.bincount(ix * ky + iy, minlength=kx * ky).reshape(kx, ky) / n
    px = joint.sum(axis=1)
    py = joint.sum(axis=0)
    mask = joint > 0
    outer = px[:, None] * py[None, :]
    val = float(np.sum(joint[mask] * np.log(joint[mask] / outer[mask])))
    if miller_madow:
        k_joint = int(np.count_nonzero(mask))
        val += (kx - 1) / (2 * n) + (ky - 1) / (2 * n) - (k_joint - 1) / (2 * n)
    return max(val, 0.0)


def stratified_mi(x, y, z, miller_madow: bool = False):
    """Per-stratum plug-in MI of (x, y) within each value of z.

    Returns (strata values, empirical weights, per-stratum MI).  The
    conditional MI is the weight-MI dot product; keeping the strata
    separate also serves bounds that average a function of the
    per-stratum MI instead.
    """
    x = np.asarray(x).reshape(-1)
    y = np.asarray(y).reshape(-1)
    z = np.asarray(z).reshape(-1)
    if not (len(x) == len(y) == len(z)):
        raise ParameterError("x, y and z must have the same length")
    if len(x) == 0:
        raise ParameterError("need at least one sample")
    strata, counts = np.unique(z, return_counts=True)
    weights = counts / len(z)
    mis = np.empty(len(strata))
    for s, val in enumerate(strata):
        sel = z == val
        if counts[s] == 1:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                mis[s] = plugin_mi(x[sel], y[sel], miller_madow)
        else:
            mis[s] = plugin_mi(x[sel], y[sel], miller_madow)
    return strata, weights, mis


def plugin_cmi(x, y, z, miller_madow: bool = False) -> float:
    """Plug-in conditional mutual information (nats) of x and y given z."""
    strata, weights, mis = stratified_mi(x, y, z, miller_madow)
    if len(strata) == 1:
        return float(weights[0] * mis[0])
    return float(np.dot(weights, mis))


def plugin_bias_hint(support_x: int, support_y: int, n: int) -> float:
    """First-order positive bias of the plug-in MI estimate, in nats."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    return (support_x - 1) * (support_y - 1) / (2.0 * n)
