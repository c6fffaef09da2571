"""Experiment orchestration: repetition loops, estimation, bounds, reports.

One experiment draws ``num_z_draws`` supersample/superclient realizations
(together with participation bits), trains the federated protocol once
per membership draw under each of them, and pools the resulting loss
variables into MI tables.  Bounds are then pure functions of those
tables, so they can be recomputed from a stored report without
retraining.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import bounds as bnd
from .construction import (
    SelectionAssignment,
    build_superclient,
    build_supersamples,
    draw_selection,
    materialize_training_sets,
)
from .distributions import FixedDataset, MetaDistribution, kl_population_vs_client, load_idx
from .errors import CapabilityError, ParameterError, StructuralError
from .losstables import (
    CmiSampleTable,
    RepetitionRecord,
    discretize_diffs,
    discretize_levels,
    estimate_og,
    estimate_pg,
    evaluate_loss_tensor,
    extract_cmi_samples,
    training_losses,
)
from .mi import plugin_mi, stratified_mi
from .models import LossSpec, code_to_id, eval_losses, init_hypothesis, quantize_model
from .seeding import SeedPath
from .training import TrainConfig, run_protocol

PACKAGE_VERSION = "0.1.0"


@dataclass(frozen=True)
class EstimationProtocol:
    """Repetition budget: outer supersample draws times inner membership
    draws.  Participation bits are drawn with the outer draw unless
    ``redraw_v_with_u`` enlarges the participation sample count."""

    num_z_draws: int = 3
    num_u_draws: int = 15
    redraw_v_with_u: bool = False
    level_bins: int = 64
    diff_bins: int = 129

    def __post_init__(self):
        if self.num_z_draws < 1 or self.num_u_draws < 1:
            raise ParameterError("draw counts must be >= 1")
        if self.level_bins < 1 or self.diff_bins < 1:
            raise ParameterError("bin counts must be >= 1")

    @property
    def total_reps(self) -> int:
        return self.num_z_draws * self.num_u_draws


@dataclass(frozen=True)
class BoundSettings:
    """Which bounds to evaluate and their constants."""

    sqrt_ecmi: bool = True
    fastrate: bool = True
    sigma: float = 1.0
    sigma_part: float = 1.0
    sigma_oos: float = 1.0
    dp_eps_global: float | None = None
    dp_eps_local: float | None = None
    comm_bits: int | None = None
    bregman: bool = False
    convex_smooth: bool = False
    heterogeneity: bool = False
    fastrate_grid_points: int = 60
    fastrate_grid_max: float = 1000.0


@dataclass(frozen=True)
class ExperimentConfig:
    meta: MetaDistribution
    k: int
    n: int
    train: TrainConfig
    loss: LossSpec
    estimation: EstimationProtocol = EstimationProtocol()
    bound_settings: BoundSettings = BoundSettings()
    quantization_bits: int | None = None
    seed: int = 0
    output_dir: str = "out"
    experiment_id: str = "experiment"
    workers: int = 1
    architecture: str | None = None
    hidden_units: int = 16

    def __post_init__(self):
        if self.k < 1 or self.n < 1:
            raise ParameterError("K and n must be >= 1")
        if self.workers < 1:
            raise ParameterError("workers must be >= 1")
        if self.quantization_bits is not None and self.quantization_bits < 1:
            raise ParameterError("quantization bits must be >= 1")
        if self.loss.radius < self.meta.domain_radius * (1 - 1e-12):
            raise ParameterError("loss radius must cover the meta-distribution domain")
        if (self.bound_settings.bregman or self.bound_settings.convex_smooth) and (
            self.quantization_bits is None
        ):
            raise ParameterError("local-model bounds require quantization bits")

    def resolved_architecture(self) -> str:
        if self.architecture is not None:
            return self.architecture
        return "linear-softmax" if self.meta.labeled else "mean-vector"

    def num_classes(self) -> int:
        if not self.meta.labeled:
            return 0
        if self.meta.family == "fixed-dataset-shards":
            return int(self.meta.dataset.labels.max()) + 1
        return int(self.meta.params["num_classes"])


@dataclass(frozen=True)
class GapEstimates:
    pg: float
    og: float
    total: float
    pg_stderr: float
    og_stderr: float
    total_stderr: float
    per_rep_pg: tuple
    per_rep_og: tuple


@dataclass(frozen=True)
class BoundResult:
    name: str
    value: float
    kind: str  # which gap the bound controls: "total", "og" or "pg"
    valid: bool
    inputs: dict = field(default_factory=dict)
    notes: str = ""

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value >= 0):
            raise StructuralError(f"bound {self.name} produced an invalid value {self.value}")


@dataclass
class ExperimentReport:
    experiment_id: str
    seed: int
    config: dict
    counts: dict
    gaps: GapEstimates
    emp_risk: float
    cmi: bnd.CmiEstimates
    aux: dict
    bound_results: list
    environment: dict
    wall_clock_seconds: float = 0.0  # volatile; kept out of report.json


@dataclass(frozen=True)
class _OuterResult:
    records: list
    pg: list
    og: list
    emp: list
    train_slots: np.ndarray  # summed (K, n) training losses of the global model
    max_local_risk: float
    kls: list  # per-rep participating-client KL lists (may be empty)
    clamp_fraction: float


def _experiment_root(cfg: ExperimentConfig) -> SeedPath:
    # namespacing by (K, n) makes sweep members reproduce standalone runs
    return SeedPath(cfg.seed, ("experiment", cfg.k, cfg.n))


def _run_outer(cfg: ExperimentConfig, z_idx: int) -> _OuterResult:
    root = _experiment_root(cfg)
    grid = build_superclient(cfg.meta, cfg.k, root.child("grid", z_idx))
    z = build_supersamples(grid, cfg.n, root.child("data", z_idx))
    base_selection = draw_selection(cfg.k, cfg.n, root.child("select", z_idx))
    w0 = init_hypothesis(
        cfg.resolved_architecture(), cfg.meta.dim, cfg.num_classes(), cfg.hidden_units
    )
    records, pg, og, emp, kls = [], [], [], [], []
    train_slots = np.zeros((cfg.k, cfg.n))
    max_local_risk = 0.0
    want_kls = cfg.bound_settings.heterogeneity and cfg.meta.family == "gaussian-mean-estimation"
    for u_idx in range(cfg.estimation.num_u_draws):
        inner = draw_selection(cfg.k, cfg.n, root.child("select", z_idx, u_idx))
        v = inner.v if cfg.estimation.redraw_v_with_u else base_selection.v
        assignment = SelectionAssignment(v, inner.u)
        train_sets = materialize_training_sets(z, assignment)
        global_model, local_models = run_protocol(
            train_sets, w0, cfg.train, cfg.loss, root.child("train", z_idx, u_idx)
        )
        tensor = evaluate_loss_tensor(global_model, z, cfg.loss)
        code_ids = None
        if cfg.quantization_bits is not None:
            codes = [
                quantize_model(m, cfg.quantization_bits, cfg.loss.radius) for m in local_models
            ]
            code_ids = np.array(
                [code_to_id(c, cfg.quantization_bits, len(local_models[i].params)) for i, c in enumerate(codes)],
                dtype=np.int64,
            )
        records.append(RepetitionRecord(tensor, assignment, code_ids))
        pg.append(estimate_pg(tensor, assignment, average_over_j=True))
        og.append(estimate_og(tensor, assignment))
        slot_losses = training_losses(tensor, assignment)
        train_slots += slot_losses
        emp.append(float(slot_losses.mean()))
        for i, (x, y) in enumerate(train_sets):
            max_local_risk = max(max_local_risk, float(eval_losses(local_models[i], x, y, cfg.loss).max()))
        if want_kls:
            kls.append(
                [kl_population_vs_client(cfg.meta, grid.client(i, int(v[i]))) for i in range(cfg.k)]
            )
    return _OuterResult(records, pg, og, emp, train_slots, max_local_risk, kls, z.clamp_fraction)


def estimate_cmi_tables(
    table: CmiSampleTable, spec: LossSpec, protocol: EstimationProtocol
) -> bnd.CmiEstimates:
    """Estimate every MI table from pooled repetition samples.

    Zero-one losses are already discrete; continuous losses are binned
    (levels on [0, 1], differences on [-1, 1]) before counting.
    """
    k, n = table.k, table.n
    discrete = spec.evaluation == "zero-one"
    if discrete:
        lvl_pg, dlt_pg = table.level_pg, table.delta_pg
        lvl_og, dlt_og = table.level_og, table.delta_og
        level_bins = None
    else:
        lvl_pg = discretize_levels(table.level_pg, protocol.level_bins)
        dlt_pg = discretize_diffs(table.delta_pg, protocol.diff_bins)
        lvl_og = discretize_levels(table.level_og, protocol.level_bins)
        dlt_og = discretize_diffs(table.delta_og, protocol.diff_bins)
        level_bins = protocol.level_bins
    pg_level_mi = np.empty(k)
    pg_delta_mi = np.empty(k)
    og_level_cmi = np.empty((k, n))
    og_delta_by_v = np.full((k, n, 2), np.nan)
    v_weights = np.zeros((k, 2))
    local_v_mi = np.empty(k) if table.codes is not None else None
    local_u_cmi = np.empty((k, n)) if table.codes is not None else None
    notes = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # constant tables legitimately occur
        for i in range(k):
            vi = table.v[:, i]
            for s in (0, 1):
                v_weights[i, s] = float(np.mean(vi == s))
            pg_level_mi[i] = plugin_mi(lvl_pg[:, i], vi)
            pg_delta_mi[i] = plugin_mi(dlt_pg[:, i], vi)
            if table.codes is not None:
                local_v_mi[i] = plugin_mi(table.codes[:, i], vi)
            for j in range(n):
                strata, weights, mis = stratified_mi(lvl_og[:, i, j], table.u_sel[:, i, j], vi)
                og_level_cmi[i, j] = float(np.dot(weights, mis))
                strata_d, weights_d, mis_d = stratified_mi(dlt_og[:, i, j], table.u_sel[:, i, j], vi)
                for s_val, m in zip(strata_d, mis_d):
                    og_delta_by_v[i, j, int(s_val)] = m
                if table.codes is not None:
                    _, wq, mq = stratified_mi(table.codes[:, i], table.u_sel[:, i, j], vi)
                    local_u_cmi[i, j] = float(np.dot(wq, mq))
    if np.any(v_weights == 0):
        notes.append("empty participation stratum for some client; its weight is 0")
    notes.append(
        f"plug-in estimates carry a positive bias of about (|X|-1)(|Y|-1)/(2N) nats at N={table.reps}"
    )
    return bnd.CmiEstimates(
        k=k,
        n=n,
        n_samples=table.reps,
        pg_level_mi=pg_level_mi,
        pg_delta_mi=pg_delta_mi,
        og_level_cmi=og_level_cmi,
        og_delta_mi_by_v=og_delta_by_v,
        v_weights=v_weights,
        local_v_mi=local_v_mi,
        local_u_cmi=local_u_cmi,
        level_bins=level_bins,
        notes=tuple(notes),
    )


def compute_bounds(
    cmi: bnd.CmiEstimates,
    gaps: GapEstimates,
    emp_risk: float,
    settings: BoundSettings,
    spec: LossSpec,
    aux: dict,
) -> list:
    """Evaluate every enabled bound against the estimated gaps."""
    results = []
    k, n = cmi.k, cmi.n

    def saturation_note(tables) -> str:
        for t in tables:
            if t is not None and np.any(np.asarray(t) >= bnd.LN2 * (1 - 1e-9)):
                return "some MI entries sit at the ln 2 cap"
        return ""

    if settings.sqrt_ecmi and cmi.pg_delta_mi is not None:
        value = bnd.sqrt_ecmi_bound(cmi)
        note = "loss-difference form; lower-bounds the hypothesis-level version by data processing"
        sat = saturation_note([cmi.pg_delta_mi, cmi.og_delta_mi_by_v])
        results.append(
            BoundResult(
                "sqrt_ecmi",
                value,
                "total",
                valid=bool(value >= abs(gaps.total)),
                inputs={"n_mi_samples": cmi.n_samples},
                notes=f"{note}; {sat}" if sat else note,
            )
        )
    if settings.fastrate and cmi.pg_level_mi is not None:
        fr = bnd.fastrate_bound(
            cmi,
            emp_risk,
            grid_points=settings.fastrate_grid_points,
            grid_max=settings.fastrate_grid_max,
        )
        results.append(
            BoundResult(
                "fastrate",
                fr.gap_bound,
                "total",
                valid=bool(fr.gap_bound >= gaps.total),
                inputs={
                    "risk_bound": fr.risk_bound,
                    "emp_risk": emp_risk,
                    "c1": fr.constants.c1,
                    "c2": fr.constants.c2,
                    "c3": fr.constants.c3,
                    "c4": fr.constants.c4,
                },
            )
        )
    if settings.dp_eps_global is not None and settings.dp_eps_local is not None:
        value = bnd.dp_bound(settings.dp_eps_global, [settings.dp_eps_local] * k, k, n)
        results.append(
            BoundResult(
                "dp",
                value,
                "total",
                valid=bool(value >= abs(gaps.total)),
                inputs={"eps_global": settings.dp_eps_global, "eps_local": settings.dp_eps_local},
            )
        )
    if settings.comm_bits is not None:
        value = bnd.comm_constraint_bound(settings.comm_bits, settings.sigma, k, n)
        results.append(
            BoundResult(
                "comm_constraint",
                value,
                "total",
                valid=bool(value >= abs(gaps.total)),
                inputs={"bits": settings.comm_bits, "sigma": settings.sigma},
            )
        )
    if settings.bregman:
        if cmi.local_v_mi is None:
            raise CapabilityError("Bregman bound requested but no quantized local models were recorded")
        value = bnd.bregman_aggregation_bound(cmi, settings.sigma_part, settings.sigma_oos)
        results.append(
            BoundResult(
                "bregman_aggregation",
                value,
                "total",
                valid=bool(value >= abs(gaps.total)),
                inputs={"sigma_part": settings.sigma_part, "sigma_oos": settings.sigma_oos},
                notes=saturation_note([cmi.local_v_mi, cmi.local_u_cmi]),
            )
        )
    if settings.convex_smooth:
        if spec.alpha is None:
            raise CapabilityError("convex-smooth bound needs a loss with curvature constants")
        value = bnd.convex_smooth_bound(
            cmi,
            np.asarray(aux["train_loss_by_slot"]),
            spec.alpha,
            spec.smoothness,
            aux["interpolating"],
        )
        results.append(
            BoundResult(
                "convex_smooth",
                value,
                "og",
                valid=bool(value >= abs(gaps.og)),
                inputs={"alpha": spec.alpha, "smoothness": spec.smoothness},
            )
        )
    if settings.heterogeneity and aux.get("client_kls_per_rep"):
        per_rep = [
            bnd.heterogeneity_kl_bound(kls, settings.sigma, k) for kls in aux["client_kls_per_rep"]
        ]
        value = float(np.mean(per_rep))
        results.append(
            BoundResult(
                "heterogeneity_kl",
                value,
                "pg",
                valid=bool(value >= abs(gaps.pg)),
                inputs={"sigma": settings.sigma},
                notes="membership term unavailable (model-data MI is not estimated)",
            )
        )
    return results


def _gap_estimates(pg_by_outer: list, og_by_outer: list) -> GapEstimates:
    pg_all = np.concatenate(pg_by_outer)
    og_all = np.concatenate(og_by_outer)
    total_all = pg_all + og_all

    def stderr(groups):
        means = np.array([np.mean(g) for g in groups])
        if len(means) < 2:
            return 0.0
        return float(np.std(means, ddof=1) / np.sqrt(len(means)))

    return GapEstimates(
        pg=float(pg_all.mean()),
        og=float(og_all.mean()),
        total=float(total_all.mean()),
        pg_stderr=stderr(pg_by_outer),
        og_stderr=stderr(og_by_outer),
        total_stderr=stderr(
            [np.asarray(p) + np.asarray(o) for p, o in zip(pg_by_outer, og_by_outer)]
        ),
        per_rep_pg=tuple(float(x) for x in pg_all),
        per_rep_og=tuple(float(x) for x in og_all),
    )


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Run the full estimation protocol and compute every enabled bound.

    Deterministic given the master seed; the worker count only changes
    how outer draws are scheduled, never any result.
    """
    start = time.monotonic()
    outer_indices = list(range(cfg.estimation.num_z_draws))
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            outer = list(pool.map(lambda z: _run_outer(cfg, z), outer_indices))
    else:
        outer = [_run_outer(cfg, z) for z in outer_indices]
    records = [rec for o in outer for rec in o.records]
    table = extract_cmi_samples(records)
    cmi = estimate_cmi_tables(table, cfg.loss, cfg.estimation)
    gaps = _gap_estimates([o.pg for o in outer], [o.og for o in outer])
    emp_risk = float(np.mean([e for o in outer for e in o.emp]))
    total_reps = cfg.estimation.total_reps
    train_loss_by_slot = sum(o.train_slots for o in outer) / total_reps
    max_local_risk = max(o.max_local_risk for o in outer)
    aux = {
        "train_loss_by_slot": train_loss_by_slot.tolist(),
        "max_local_empirical_risk": max_local_risk,
        "interpolating": max_local_risk == 0.0,
        "client_kls_per_rep": [kl for o in outer for kl in o.kls],
        "clamp_fraction": float(np.mean([o.clamp_fraction for o in outer])),
    }
    results = compute_bounds(cmi, gaps, emp_risk, cfg.bound_settings, cfg.loss, aux)
    report = ExperimentReport(
        experiment_id=cfg.experiment_id,
        seed=cfg.seed,
        config=config_to_dict(cfg),
        counts={
            "num_z_draws": cfg.estimation.num_z_draws,
            "num_u_draws": cfg.estimation.num_u_draws,
            "total_reps": total_reps,
            "mi_samples_per_client": cmi.n_samples,
        },
        gaps=gaps,
        emp_risk=emp_risk,
        cmi=cmi,
        aux=aux,
        bound_results=results,
        environment={
            "package": PACKAGE_VERSION,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
    )
    report.wall_clock_seconds = time.monotonic() - start
    return report


def run_sweep(cfg: ExperimentConfig, axis: str, values: list) -> list:
    """One experiment per axis value; returns [(value, report), ...]."""
    if axis not in ("n", "K"):
        raise ParameterError("axis must be 'n' or 'K'")
    if not values:
        raise ParameterError("values must be nonempty")
    if list(values) != sorted(values):
        raise ParameterError("values must be ascending")
    out = []
    for value in values:
        if value < 1:
            raise ParameterError("axis values must be >= 1")
        sub = replace(
            cfg,
            k=value if axis == "K" else cfg.k,
            n=value if axis == "n" else cfg.n,
            experiment_id=f"{cfg.experiment_id}-{axis}{value}",
        )
        out.append((value, run_experiment(sub)))
    return out


# ---------------------------------------------------------------------------
# serialization


_TOP_LEVEL_KEYS = {
    "meta",
    "k",
    "n",
    "train",
    "loss",
    "estimation",
    "bounds",
    "quantization",
    "seed",
    "output_dir",
    "experiment_id",
    "workers",
}

_META_KEYS = {"family", "params", "domain_radius", "images_path", "labels_path"}
_TRAIN_EXTRA_KEYS = {"architecture", "hidden_units"}


def _strict_dataclass(cls, data: dict, what: str):
    known = {f for f in cls.__dataclass_fields__}
    unknown = set(data) - known
    if unknown:
        raise ParameterError(f"unknown {what} keys: {sorted(unknown)}")
    return cls(**data)


def config_from_dict(raw: dict, base_dir: str = ".") -> ExperimentConfig:
    unknown = set(raw) - _TOP_LEVEL_KEYS
    if unknown:
        raise ParameterError(f"unknown config keys: {sorted(unknown)}")
    for key in ("meta", "k", "n"):
        if key not in raw:
            raise ParameterError(f"config is missing required key {key!r}")
    meta_raw = dict(raw["meta"])
    unknown = set(meta_raw) - _META_KEYS
    if unknown:
        raise ParameterError(f"unknown meta keys: {sorted(unknown)}")
    dataset = None
    if meta_raw.get("family") == "fixed-dataset-shards":
        if "images_path" not in meta_raw or "labels_path" not in meta_raw:
            raise ParameterError("fixed-dataset-shards config needs images_path and labels_path")
        dataset = load_idx(
            os.path.join(base_dir, meta_raw["images_path"]),
            os.path.join(base_dir, meta_raw["labels_path"]),
        )
    meta = MetaDistribution(
        family=meta_raw.get("family", ""),
        params=dict(meta_raw.get("params", {})),
        domain_radius=float(meta_raw.get("domain_radius", 1.0)),
        dataset=dataset,
    )
    train_raw = dict(raw.get("train", {}))
    architecture = train_raw.pop("architecture", None)
    hidden_units = int(train_raw.pop("hidden_units", 16))
    train = _strict_dataclass(TrainConfig, train_raw, "train")
    loss_raw = dict(raw.get("loss", {}))
    loss_raw.setdefault("radius", meta.domain_radius)
    loss = _strict_dataclass(LossSpec, loss_raw, "loss")
    estimation = _strict_dataclass(EstimationProtocol, dict(raw.get("estimation", {})), "estimation")
    settings = _strict_dataclass(BoundSettings, dict(raw.get("bounds", {})), "bounds")
    quant = raw.get("quantization")
    if isinstance(quant, dict):
        unknown = set(quant) - {"bits"}
        if unknown:
            raise ParameterError(f"unknown quantization keys: {sorted(unknown)}")
        quant = quant.get("bits")
    return ExperimentConfig(
        meta=meta,
        k=int(raw["k"]),
        n=int(raw["n"]),
        train=train,
        loss=loss,
        estimation=estimation,
        bound_settings=settings,
        quantization_bits=None if quant is None else int(quant),
        seed=int(raw.get("seed", 0)),
        output_dir=str(raw.get("output_dir", "out")),
        experiment_id=str(raw.get("experiment_id", "experiment")),
        workers=int(raw.get("workers", 1)),
        architecture=architecture,
        hidden_units=hidden_units,
    )


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ParameterError(f"{path} must hold a JSON object")
    return config_from_dict(raw, base_dir=os.path.dirname(os.path.abspath(path)))


def config_to_dict(cfg: ExperimentConfig) -> dict:
    meta = {
        "family": cfg.meta.family,
        "params": dict(cfg.meta.params),
        "domain_radius": cfg.meta.domain_radius,
    }
    out = {
        "meta": meta,
        "k": cfg.k,
        "n": cfg.n,
        "train": asdict(cfg.train),
        "loss": asdict(cfg.loss),
        "estimation": asdict(cfg.estimation),
        "bounds": asdict(cfg.bound_settings),
        "quantization": cfg.quantization_bits,
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
        "experiment_id": cfg.experiment_id,
        # workers is a scheduling knob, not an experiment input; leaving it
        # out keeps report bytes identical across worker counts
    }
    if cfg.architecture is not None:
        out["train"]["architecture"] = cfg.architecture
        out["train"]["hidden_units"] = cfg.hidden_units
    return out


def _nan_to_none(obj):
    if isinstance(obj, list):
        return [_nan_to_none(x) for x in obj]
    if isinstance(obj, float) and math.isnan(obj):
        return None
    return obj


def _none_to_nan(obj):
    if isinstance(obj, list):
        return [_none_to_nan(x) for x in obj]
    return math.nan if obj is None else obj


def _cmi_to_dict(cmi: bnd.CmiEstimates) -> dict:
    def conv(arr):
        if arr is None:
            return None
        return _nan_to_none(np.asarray(arr, dtype=np.float64).tolist())

    return {
        "k": cmi.k,
        "n": cmi.n,
        "n_samples": cmi.n_samples,
        "pg_level_mi": conv(cmi.pg_level_mi),
        "pg_delta_mi": conv(cmi.pg_delta_mi),
        "og_level_cmi": conv(cmi.og_level_cmi),
        "og_delta_mi_by_v": conv(cmi.og_delta_mi_by_v),
        "v_weights": conv(cmi.v_weights),
        "local_v_mi": conv(cmi.local_v_mi),
        "local_u_cmi": conv(cmi.local_u_cmi),
        "level_bins": cmi.level_bins,
        "notes": list(cmi.notes),
    }


def _cmi_from_dict(d: dict) -> bnd.CmiEstimates:
    def conv(val):
        if val is None:
            return None
        return np.asarray(_none_to_nan(val), dtype=np.float64)

    return bnd.CmiEstimates(
        k=int(d["k"]),
        n=int(d["n"]),
        n_samples=int(d["n_samples"]),
        pg_level_mi=conv(d["pg_level_mi"]),
        pg_delta_mi=conv(d["pg_delta_mi"]),
        og_level_cmi=conv(d["og_level_cmi"]),
        og_delta_mi_by_v=conv(d["og_delta_mi_by_v"]),
        v_weights=conv(d["v_weights"]),
        local_v_mi=conv(d["local_v_mi"]),
        local_u_cmi=conv(d["local_u_cmi"]),
        level_bins=d.get("level_bins"),
        notes=tuple(d.get("notes", ())),
    )


def report_to_dict(report: ExperimentReport) -> dict:
    """JSON form of a report; excludes volatile timing so that identical
    seeds yield identical bytes."""
    return {
        "experiment_id": report.experiment_id,
        "seed": report.seed,
        "config": report.config,
        "counts": report.counts,
        "gaps": asdict(report.gaps),
        "emp_risk": report.emp_risk,
        "cmi": _cmi_to_dict(report.cmi),
        "aux": report.aux,
        "bounds": [asdict(b) for b in report.bound_results],
        "environment": report.environment,
    }


_CSV_COLUMNS = [
    "experiment_id",
    "axis",
    "axis_value",
    "seed",
    "emp_risk",
    "pg_est",
    "og_est",
    "gap_est",
    "gap_stderr",
    "bound_name",
    "bound_value",
    "c1",
    "c2",
    "c3",
    "c4",
    "n_mi_samples",
    "notes",
]


def _fmt(x) -> str:
    if x is None or x == "":
        return ""
    if isinstance(x, float):
        return f"{x:.9g}"
    return str(x)


def _csv_rows(report_dict: dict, axis: str = "none", axis_value="") -> list:
    gaps = report_dict["gaps"]
    rows = []
    for bound in report_dict["bounds"]:
        inputs = bound.get("inputs", {})
        rows.append(
            [
                report_dict["experiment_id"],
                axis,
                _fmt(axis_value),
                report_dict["seed"],
                _fmt(report_dict["emp_risk"]),
                _fmt(gaps["pg"]),
                _fmt(gaps["og"]),
                _fmt(gaps["total"]),
                _fmt(gaps["total_stderr"]),
                bound["name"],
                _fmt(bound["value"]),
                _fmt(inputs.get("c1", "")),
                _fmt(inputs.get("c2", "")),
                _fmt(inputs.get("c3", "")),
                _fmt(inputs.get("c4", "")),
                report_dict["cmi"]["n_samples"],
                bound.get("notes", ""),
            ]
        )
    return rows


def _write_csv(path: str, rows: list):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    writer.writerows(rows)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(buf.getvalue())


def write_report(report, out_dir: str) -> dict:
    """Write report.json, metrics.csv and the volatile run_meta.json.

    Accepts an ExperimentReport or an already-serialized report dict.
    Overwrites idempotently.  Returns {name: path}.
    """
    os.makedirs(out_dir, exist_ok=True)
    rep_dict = report if isinstance(report, dict) else report_to_dict(report)
    paths = {"report.json": _write_json(os.path.join(out_dir, "report.json"), rep_dict)}
    _write_csv(os.path.join(out_dir, "metrics.csv"), _csv_rows(rep_dict))
    paths["metrics.csv"] = os.path.join(out_dir, "metrics.csv")
    wall = 0.0 if isinstance(report, dict) else report.wall_clock_seconds
    _write_meta(out_dir, wall)
    return paths


def write_sweep_report(axis: str, results: list, out_dir: str) -> dict:
    """Write a sweep's report.json plus a long-format metrics.csv with
    one row per (axis value, bound)."""
    os.makedirs(out_dir, exist_ok=True)
    payload = []
    rows = []
    wall = 0.0
    for value, rep in results:
        rep_dict = rep if isinstance(rep, dict) else report_to_dict(rep)
        if not isinstance(rep, dict):
            wall += rep.wall_clock_seconds
        payload.append({"axis": axis, "axis_value": value, "report": rep_dict})
        rows.extend(_csv_rows(rep_dict, axis=axis, axis_value=value))
    paths = {"report.json": _write_json(os.path.join(out_dir, "report.json"), payload)}
    _write_csv(os.path.join(out_dir, "metrics.csv"), rows)
    paths["metrics.csv"] = os.path.join(out_dir, "metrics.csv")
    _write_meta(out_dir, wall)
    return paths


def _write_json(path: str, payload) -> str:
    with open(path, "w", encoding="utf-8", newline="") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def _write_meta(out_dir: str, wall: float):
    with open(os.path.join(out_dir, "run_meta.json"), "w", encoding="utf-8", newline="") as f:
        json.dump({"wall_clock_seconds": wall, "written_at": time.time()}, f, indent=2)
        f.write("\n")


def recompute_bounds_from_report(
    report_dict: dict,
    sigma: float | None = None,
    sigma_part: float | None = None,
    sigma_oos: float | None = None,
) -> dict:
    """Re-evaluate bounds of a stored report without retraining.

    Gap estimates, MI tables and every other field are passed through
    untouched; only the bounds list is replaced.
    """
    cmi = _cmi_from_dict(report_dict["cmi"])
    cfg = report_dict["config"]
    settings_kwargs = dict(cfg["bounds"])
    if sigma is not None:
        settings_kwargs["sigma"] = sigma
    if sigma_part is not None:
        settings_kwargs["sigma_part"] = sigma_part
    if sigma_oos is not None:
        settings_kwargs["sigma_oos"] = sigma_oos
    settings = BoundSettings(**settings_kwargs)
    loss_raw = dict(cfg["loss"])
    spec = LossSpec(**loss_raw)
    gaps = GapEstimates(**report_dict["gaps"])
    results = compute_bounds(cmi, gaps, report_dict["emp_risk"], settings, spec, report_dict["aux"])
    out = dict(report_dict)
    out["bounds"] = [asdict(b) for b in results]
    out["config"] = dict(cfg)
    out["config"]["bounds"] = asdict(settings)
    return out
