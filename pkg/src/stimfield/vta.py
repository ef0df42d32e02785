"""Activation-volume masks, dual-lead approximations, and comparison reports.

Given activation fields from a global dual-lead solve and from per-lead
independent solves, four approximations of the dual activation volume are
formed:

* V (per metric): union of the two single-lead masks, equivalently
  thresholding the nodewise max of the metric values.
* C_EF: threshold the norm of the summed EF vectors.
* C_AF: threshold the maximum of |sum of tangential AFs| along each axon.

Comparisons count exclusive activations (method minus dual) and missed
activations (dual minus method), normalized to the dual total; coverage
reports the activated share of a target region and of its complement,
normalized to the dual model's shares.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .activation import ActivationField, EvaluationGrid
from .volume import MaskVolume

REPORT_COLUMNS = (
    "method",
    "total",
    "exclusive",
    "missed",
    "total_pct_of_dual",
    "target_pct",
    "nontarget_pct",
    "target_pct_of_dual",
    "nontarget_pct_of_dual",
)


@dataclass(frozen=True)
class VtaMask:
    eval_grid: EvaluationGrid
    active: np.ndarray
    provenance: str
    metric: str
    threshold: float

    def __post_init__(self):
        active = np.ascontiguousarray(self.active, dtype=bool)
        if active.shape != (self.eval_grid.n_nodes,):
            raise ValueError("mask length does not match the evaluation grid")
        active.flags.writeable = False
        object.__setattr__(self, "active", active)

    @property
    def count(self) -> int:
        return int(self.active.sum())

    def as_volume(self) -> MaskVolume:
        return MaskVolume(
            self.eval_grid.as_voxel_grid(),
            self.eval_grid.node_values_to_array(self.active),
        )


@dataclass(frozen=True)
class TargetSpec:
    """Target node set and its complement on the evaluation grid."""

    eval_grid: EvaluationGrid
    target: np.ndarray

    def __post_init__(self):
        target = np.ascontiguousarray(self.target, dtype=bool)
        if target.shape != (self.eval_grid.n_nodes,):
            raise ValueError("target length does not match the evaluation grid")
        target.flags.writeable = False
        object.__setattr__(self, "target", target)

    @property
    def complement(self) -> np.ndarray:
        return ~self.target

    @property
    def n_target(self) -> int:
        return int(self.target.sum())


def target_from_mask_volume(mask: MaskVolume, eval_grid: EvaluationGrid) -> TargetSpec:
    """Resample a mask volume onto the evaluation nodes by nearest neighbor."""
    pts = eval_grid.node_coords()
    idx = np.rint(mask.grid.world_to_index(pts)).astype(np.int64)
    dims = np.asarray(mask.grid.dims)
    inside = np.all((idx >= 0) & (idx < dims), axis=1)
    values = np.zeros(pts.shape[0], dtype=bool)
    ii = idx[inside]
    values[inside] = mask.values[ii[:, 0], ii[:, 1], ii[:, 2]]
    return TargetSpec(eval_grid, values)


def _require_same_grid(a, b):
    if a.eval_grid != b.eval_grid:
        raise ValueError("operands live on different evaluation grids")


def threshold_vta(field: ActivationField, metric: str, threshold: float,
                  provenance: str = "single") -> VtaMask:
    """Nodes whose metric value meets or exceeds the threshold (inclusive)."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    values = field.metric_values(metric)
    return VtaMask(field.eval_grid, values >= threshold, provenance, metric, threshold)


def superpose_vtas(m1: VtaMask, m2: VtaMask) -> VtaMask:
    """Simple superposition of activation regions: the set union."""
    _require_same_grid(m1, m2)
    if m1.metric != m2.metric:
        raise ValueError("cannot superpose masks of different metrics")
    return VtaMask(m1.eval_grid, m1.active | m2.active,
                   f"V_{m1.metric}", m1.metric, m1.threshold)


def combined_ef_vta(f1: ActivationField, f2: ActivationField,
                    threshold: float) -> VtaMask:
    """Threshold the norm of the vector-summed electric fields."""
    _require_same_grid(f1, f2)
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    norm = np.linalg.norm(f1.ef + f2.ef, axis=1)
    return VtaMask(f1.eval_grid, norm >= threshold, "C_EF", "EF", threshold)


def combined_af_vta(f1: ActivationField, f2: ActivationField,
                    threshold: float) -> VtaMask:
    """Threshold max_s |sum of tangential AFs| along each shared axon."""
    _require_same_grid(f1, f2)
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if not np.array_equal(f1.axon_offsets, f2.axon_offsets):
        raise ValueError("fields were sampled with different axon offsets")
    if not np.array_equal(f1.axon_dirs, f2.axon_dirs):
        raise ValueError("fields use different axon orientations")
    combined = np.max(np.abs(f1.af_tan + f2.af_tan), axis=1)
    return VtaMask(f1.eval_grid, combined >= threshold, "C_AF", "AF", threshold)


@dataclass(frozen=True)
class MethodComparison:
    method: str
    total: int
    exclusive: int
    missed: int
    total_pct_of_dual: float | None


@dataclass(frozen=True)
class ComparisonReport:
    dual_total: int
    normalization_valid: bool
    rows: tuple


def compare_to_dual(dual: VtaMask, methods) -> ComparisonReport:
    """Set statistics of each method mask against the dual-model mask."""
    rows = []
    n_dual = dual.count
    valid = n_dual > 0
    for m in methods:
        _require_same_grid(dual, m)
        total = m.count
        exclusive = int((m.active & ~dual.active).sum())
        missed = int((dual.active & ~m.active).sum())
        pct = 100.0 * total / n_dual if valid else None
        rows.append(MethodComparison(m.provenance, total, exclusive, missed, pct))
    return ComparisonReport(n_dual, valid, tuple(rows))


@dataclass(frozen=True)
class CoverageRow:
    method: str
    target_pct: float
    nontarget_pct: float
    target_pct_of_dual: float | None
    nontarget_pct_of_dual: float | None


@dataclass(frozen=True)
class CoverageReport:
    rows: tuple


def coverage(mask: VtaMask, target: TargetSpec, dual: VtaMask) -> CoverageRow:
    """Activated share of the target and of its complement, dual-normalized."""
    _require_same_grid(mask, target)
    _require_same_grid(mask, dual)
    n_t = target.n_target
    if n_t == 0:
        raise ValueError("target region is empty")
    n_c = target.target.size - n_t
    t_pct = 100.0 * int((mask.active & target.target).sum()) / n_t
    nt_pct = 100.0 * int((mask.active & target.complement).sum()) / n_c if n_c else 0.0
    dual_t = 100.0 * int((dual.active & target.target).sum()) / n_t
    dual_nt = 100.0 * int((dual.active & target.complement).sum()) / n_c if n_c else 0.0
    t_norm = 100.0 * t_pct / dual_t if dual_t > 0 else None
    nt_norm = 100.0 * nt_pct / dual_nt if dual_nt > 0 else None
    return CoverageRow(mask.provenance, t_pct, nt_pct, t_norm, nt_norm)


def coverage_report(masks, target: TargetSpec, dual: VtaMask) -> CoverageReport:
    return CoverageReport(tuple(coverage(m, target, dual) for m in masks))


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_comparison_csv(path, *reports: ComparisonReport) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = REPORT_COLUMNS[:5]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for report in reports:
            for row in report.rows:
                writer.writerow([
                    row.method, row.total, row.exclusive, row.missed,
                    _fmt(row.total_pct_of_dual),
                ])


def write_coverage_csv(path, *reports: CoverageReport) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = (REPORT_COLUMNS[0],) + REPORT_COLUMNS[5:]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for report in reports:
            for row in report.rows:
                writer.writerow([
                    row.method, _fmt(row.target_pct), _fmt(row.nontarget_pct),
                    _fmt(row.target_pct_of_dual), _fmt(row.nontarget_pct_of_dual),
                ])
