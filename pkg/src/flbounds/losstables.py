"""Loss tensors, unbiased gap estimators and CMI sample extraction.

Per repetition the full K-by-2-by-n-by-2 loss table of the global model
is materialized once; both gap estimators and every CMI sample variable
are pure index expressions over it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .construction import SelectionAssignment, SuperSampleTensor
from .errors import ParameterError, StructuralError
from .models import Hypothesis, LossSpec, eval_losses

ANCHOR_ROW = 0  # participation-gap variables are anchored at the first supersample row


@dataclass(frozen=True)
class LossTensor:
    """Evaluated losses, shape (K, 2, n, 2), entries in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 4 or self.values.shape[1] != 2 or self.values.shape[3] != 2:
            raise StructuralError("loss tensor must have shape (K, 2, n, 2)")
        if not np.isfinite(self.values).all():
            raise StructuralError("loss tensor must be finite")
        if self.values.min() < 0 or self.values.max() > 1:
            raise StructuralError("loss tensor entries must lie in [0, 1]")

    @property
    def k(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[2]


def evaluate_loss_tensor(w: Hypothesis, z: SuperSampleTensor, spec: LossSpec) -> LossTensor:
    """Evaluate the global model on every supersample entry."""
    k, n, d = z.k, z.n, z.dim
    flat_x = z.features.reshape(-1, d)
    flat_y = z.labels.reshape(-1)
    vals = eval_losses(w, flat_x, flat_y, spec)
    return LossTensor(vals.reshape(k, 2, n, 2))


def _check_pair(t: LossTensor, a: SelectionAssignment):
    if t.k != a.k or t.n != a.n:
        raise StructuralError(f"tensor ({t.k}, {t.n}) and selection ({a.k}, {a.n}) shapes disagree")


def heldout_losses(t: LossTensor, a: SelectionAssignment, column: int) -> np.ndarray:
    """Losses on the held-out entries of one grid column, shape (K, n)."""
    rows = np.arange(t.n)
    out = np.empty((t.k, t.n))
    for i in range(t.k):
        out[i] = t.values[i, column, rows, 1 - a.u[i, column]]
    return out


def estimate_pg(t: LossTensor, a: SelectionAssignment, average_over_j: bool = True) -> float:
    """Unbiased participation-gap estimate.

    Signed difference of the held-out losses of the two grid columns,
    anchored at the first supersample row, or averaged over all rows
    when ``average_over_j`` is set (the anchor row is arbitrary, so
    averaging only reduces variance).
    """
    _check_pair(t, a)
    signs = np.where(a.v == 0, 1.0, -1.0)
    diff = heldout_losses(t, a, 1) - heldout_losses(t, a, 0)  # (K, n)
    per_row = signs[:, None] * diff
    if average_over_j:
        return float(per_row.mean())
    return float(per_row[:, ANCHOR_ROW].mean())


def estimate_og(t: LossTensor, a: SelectionAssignment) -> float:
    """Unbiased out-of-sample gap estimate for the participating column."""
    _check_pair(t, a)
    rows = np.arange(t.n)
    total = 0.0
    for i in range(t.k):
        b = int(a.v[i])
        signs = np.where(a.u[i, b] == 0, 1.0, -1.0)
        total += float(np.sum(signs * (t.values[i, b, rows, 1] - t.values[i, b, rows, 0])))
    return total / (t.k * t.n)


def training_losses(t: LossTensor, a: SelectionAssignment) -> np.ndarray:
    """Losses of the global model on the selected training entries, (K, n)."""
    _check_pair(t, a)
    rows = np.arange(t.n)
    out = np.empty((t.k, t.n))
    for i in range(t.k):
        b = int(a.v[i])
        out[i] = t.values[i, b, rows, a.u[i, b]]
    return out


@dataclass(frozen=True)
class RepetitionRecord:
    """One repetition's loss tensor, selection, and optional local codes."""

    tensor: LossTensor
    assignment: SelectionAssignment
    code_ids: np.ndarray | None = None  # (K,) packed quantized local models


@dataclass(frozen=True)
class CmiSampleTable:
    """Per-repetition one-dimensional loss variables, stacked over reps.

    Participation variables anchor at the first supersample row of the
    two cells of row i; membership variables live on the participating
    cell, one per row j.  Shapes: (R, K) or (R, K, n).
    """

    v: np.ndarray
    level_pg: np.ndarray  # held-out loss of column 0 at the anchor row
    delta_pg: np.ndarray  # column-1 minus column-0 held-out anchor losses
    level_og: np.ndarray  # participating-cell column-0 losses
    delta_og: np.ndarray  # participating-cell column-1 minus column-0 losses
    u_sel: np.ndarray  # membership bits of the participating cell
    codes: np.ndarray | None = None  # (R, K) packed local-model codes

    @property
    def reps(self) -> int:
        return self.v.shape[0]

    @property
    def k(self) -> int:
        return self.v.shape[1]

    @property
    def n(self) -> int:
        return self.level_og.shape[2]


def extract_cmi_samples(records: list) -> CmiSampleTable:
    """Assemble the one-dimensional CMI variables from repetitions."""
    if not records:
        raise ParameterError("need at least one repetition")
    v_rows, lp_rows, dp_rows, lo_rows, do_rows, u_rows, code_rows = [], [], [], [], [], [], []
    with_codes = records[0].code_ids is not None
    for rec in records:
        t, a = rec.tensor, rec.assignment
        _check_pair(t, a)
        held0 = heldout_losses(t, a, 0)[:, ANCHOR_ROW]
        held1 = heldout_losses(t, a, 1)[:, ANCHOR_ROW]
        v_rows.append(a.v.astype(np.int64))
        lp_rows.append(held0)
        dp_rows.append(held1 - held0)
        rows = np.arange(t.n)
        lo = np.empty((t.k, t.n))
        do = np.empty((t.k, t.n))
        us = np.empty((t.k, t.n), dtype=np.int64)
        for i in range(t.k):
            b = int(a.v[i])
            lo[i] = t.values[i, b, rows, 0]
            do[i] = t.values[i, b, rows, 1] - t.values[i, b, rows, 0]
            us[i] = a.u[i, b]
        lo_rows.append(lo)
        do_rows.append(do)
        u_rows.append(us)
        if with_codes != (rec.code_ids is not None):
            raise StructuralError("either all repetitions carry codes or none do")
        if with_codes:
            code_rows.append(np.asarray(rec.code_ids, dtype=np.int64))
    return CmiSampleTable(
        v=np.stack(v_rows),
        level_pg=np.stack(lp_rows),
        delta_pg=np.stack(dp_rows),
        level_og=np.stack(lo_rows),
        delta_og=np.stack(do_rows),
        u_sel=np.stack(u_rows),
        codes=np.stack(code_rows) if with_codes else None,
    )


def discretize_levels(x: np.ndarray, bins: int) -> np.ndarray:
    """Bin values in [0, 1] onto a uniform grid of ``bins`` cells."""
    if bins < 1:
        raise ParameterError("bins must be >= 1")
    return np.clip(np.floor(x * bins), 0, bins - 1).astype(np.int64)


def discretize_diffs(x: np.ndarray, bins: int) -> np.ndarray:
    """Bin values in [-1, 1] onto a uniform grid of ``bins`` cells."""
    if bins < 1:
        raise ParameterError("bins must be >= 1")
    return np.clip(np.floor((x + 1.0) / 2.0 * bins), 0, bins - 1).astype(np.int64)
