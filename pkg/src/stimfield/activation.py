"""Activation metrics on an evaluation node grid.

Two per-node metrics are computed from a solved potential:

* EF-norm: Euclidean norm of E = -grad(u), by central differences of the
  trilinearly sampled potential.
* AF-Max: each node carries a straight axon segment; the tangential
  activating function along it is -t^T H t with H the potential Hessian,
  and AF-Max is the maximum absolute value over the axon samples.

The differencing step equals the solver grid spacing rather than the axon
sample step: trilinear interpolation is piecewise linear, so sub-voxel
second-difference steps would alias to zero.  Axon samples finer than the
step reuse the locally differenced Hessian, which varies continuously with
the sample position.

Axon orientation is either a fixed unit vector or the worst-case direction
perpendicular to a reference axis (the direction maximizing |t^T H t| at the
node center, from the eigen-decomposition of the 2x2 restriction of H to the
perpendicular plane).  Per-node directions can also be supplied explicitly
so that several models are evaluated on identical axon geometry.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import average_lead_axis
from .solver import FieldSolution
from .volume import VoxelGrid

# Fixed work-unit size: results are written into disjoint preallocated
# slices, so outputs are identical for any worker count.
_CHUNK_NODES = 32768

ORIENT_FIXED = "fixed"
ORIENT_WORST_PERPENDICULAR = "worst_case_perpendicular"


@dataclass(frozen=True)
class EvaluationGrid:
    """Cubic node grid for activation metrics, centered between the leads."""

    center: tuple[float, float, float]
    side_mm: float = 20.0
    spacing_mm: float = 0.4

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.spacing_mm <= 0 or self.side_mm <= 0:
            raise ValueError("side and spacing must be positive")
        steps = self.side_mm / self.spacing_mm
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError(
                f"node spacing {self.spacing_mm} does not divide side {self.side_mm}"
            )

    @property
    def n_per_axis(self) -> int:
        return int(round(self.side_mm / self.spacing_mm)) + 1

    @property
    def n_nodes(self) -> int:
        return self.n_per_axis**3

    def as_voxel_grid(self) -> VoxelGrid:
        n = self.n_per_axis
        origin = tuple(c - 0.5 * self.side_mm for c in self.center)
        return VoxelGrid((n, n, n), (self.spacing_mm,) * 3, origin)

    def node_coords(self) -> np.ndarray:
        """(n_nodes, 3) node positions, x-fastest order."""
        n = self.n_per_axis
        ax = [c - 0.5 * self.side_mm + self.spacing_mm * np.arange(n)
              for c in self.center]
        zz, yy, xx = np.meshgrid(ax[2], ax[1], ax[0], indexing="ij")
        return np.ascontiguousarray(
            np.stack([xx, yy, zz], axis=-1).reshape(-1, 3)
        )

    def node_values_to_array(self, flat: np.ndarray) -> np.ndarray:
        """Reshape x-fastest node values into (nx, ny, nz) for volume export."""
        n = self.n_per_axis
        return np.ascontiguousarray(flat.reshape(n, n, n).transpose(2, 1, 0))


@dataclass(frozen=True)
class AxonPolicy:
    length_mm: float = 1.0
    sample_step_mm: float = 0.1
    orientation: str = ORIENT_WORST_PERPENDICULAR
    direction: tuple[float, float, float] | None = None
    reference_axis: tuple[float, float, float] | None = None

    def __post_init__(self):
        if self.length_mm <= 0 or self.sample_step_mm <= 0:
            raise ValueError("axon length and sample step must be positive")
        steps = self.length_mm / self.sample_step_mm
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("sample step must divide the axon length")
        if self.orientation == ORIENT_FIXED:
            if self.direction is None:
                raise ValueError("fixed orientation requires a direction")
            _require_unit(self.direction, "direction")
        elif self.orientation == ORIENT_WORST_PERPENDICULAR:
            if self.reference_axis is not None:
                _require_unit(self.reference_axis, "reference_axis")
        else:
            raise ValueError(f"unknown orientation {self.orientation!r}")

    @property
    def n_samples(self) -> int:
        return int(round(self.length_mm / self.sample_step_mm)) + 1

    def sample_offsets(self) -> np.ndarray:
        return np.linspace(-0.5 * self.length_mm, 0.5 * self.length_mm, self.n_samples)


def _require_unit(vec, name):
    norm = float(np.linalg.norm(vec))
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"{name} must be a unit vector, |{name}| = {norm}")


@dataclass(frozen=True)
class ThresholdTable:
    """Pulse-width dependent activation thresholds, linearly interpolated."""

    metric: str
    pairs: tuple

    def __post_init__(self):
        if self.metric not in ("EF", "AF"):
            raise ValueError(f"metric must be 'EF' or 'AF', got {self.metric!r}")
        pairs = tuple((float(pw), float(th)) for pw, th in self.pairs)
        if not pairs:
            raise ValueError("threshold table needs at least one entry")
        pws = [p for p, _ in pairs]
        if any(b <= a for a, b in zip(pws, pws[1:])):
            raise ValueError("pulse widths must be strictly increasing")
        if any(th <= 0 for _, th in pairs):
            raise ValueError("thresholds must be positive")
        object.__setattr__(self, "pairs", pairs)


def threshold_for(table: ThresholdTable, pulse_width_us: float) -> float:
    pws = [p for p, _ in table.pairs]
    if not pws[0] <= pulse_width_us <= pws[-1]:
        raise ValueError(
            f"pulse width {pulse_width_us} outside table span [{pws[0]}, {pws[-1]}]"
        )
    return float(np.interp(pulse_width_us, pws, [t for _, t in table.pairs]))


@dataclass(frozen=True)
class ActivationField:
    """Per-node metrics plus the raw samples needed to combine two fields."""

    eval_grid: EvaluationGrid
    ef: np.ndarray            # (n, 3) electric field vectors, V/mm
    ef_norm: np.ndarray       # (n,)
    axon_dirs: np.ndarray     # (n, 3) unit tangents
    axon_offsets: np.ndarray  # (s,) arc-length offsets, mm
    af_tan: np.ndarray        # (n, s) tangential AF along each axon, V/mm^2
    af_max: np.ndarray        # (n,)
    hessians: np.ndarray      # (n, s, 6) potential Hessian samples
    step_mm: tuple[float, float, float]

    @property
    def n_nodes(self) -> int:
        return self.ef.shape[0]

    def metric_values(self, metric: str) -> np.ndarray:
        if metric == "EF":
            return self.ef_norm
        if metric == "AF":
            return self.af_max
        raise ValueError(f"unknown metric {metric!r}")


def _run_chunked(n: int, work, threads: int = 1) -> None:
    spans = [(i, min(i + _CHUNK_NODES, n)) for i in range(0, n, _CHUNK_NODES)]
    if threads <= 1 or len(spans) <= 1:
        for span in spans:
            work(span)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, spans))


def _grid_arrays(solution: FieldSolution):
    grid = solution.potential.grid
    return (
        solution.potential.values,
        np.asarray(grid.origin, dtype=np.float64),
        np.asarray(grid.spacing, dtype=np.float64),
    )


def _resolve_step(solution: FieldSolution, step_mm) -> np.ndarray:
    if step_mm is None:
        return np.asarray(solution.potential.grid.spacing, dtype=np.float64)
    step = np.asarray(step_mm, dtype=np.float64)
    if step.ndim == 0:
        step = np.full(3, float(step))
    if step.shape != (3,) or np.any(step <= 0):
        raise ValueError("step_mm must be a positive scalar or 3-vector")
    return step


def ef_field(solution: FieldSolution, eval_grid: EvaluationGrid, *,
             step_mm=None, threads: int = 1):
    """E = -grad(u) and its norm at every evaluation node."""
    values, origin, spacing = _grid_arrays(solution)
    step = _resolve_step(solution, step_mm)
    pts = eval_grid.node_coords()
    n = pts.shape[0]
    ef = np.empty((n, 3), dtype=np.float64)

    def work(span):
        i, j = span
        ef[i:j] = -kernels.gradient_many(values, origin, spacing, pts[i:j], step)

    _run_chunked(n, work, threads)
    return ef, np.linalg.norm(ef, axis=1)


def _perp_basis(reference_axis: np.ndarray):
    ref = np.asarray(reference_axis, dtype=np.float64)
    ref = ref / np.linalg.norm(ref)
    seed = np.zeros(3)
    seed[int(np.argmin(np.abs(ref)))] = 1.0
    e1 = seed - (seed @ ref) * ref
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(ref, e1)
    return ref, e1, e2


def _quadform(h6: np.ndarray, t: np.ndarray) -> np.ndarray:
    """t^T H t for component-packed Hessians; t is (n, 3) or (3,)."""
    tx, ty, tz = t[..., 0], t[..., 1], t[..., 2]
    return (h6[..., 0] * tx * tx + h6[..., 1] * ty * ty + h6[..., 2] * tz * tz
            + 2.0 * (h6[..., 3] * tx * ty + h6[..., 4] * tx * tz + h6[..., 5] * ty * tz))


def worst_case_directions(hessians6: np.ndarray, reference_axis) -> np.ndarray:
    """Unit directions perpendicular to the axis maximizing |t^T H t|.

    Solved per node from the 2x2 restriction of H to the perpendicular
    plane; the sign convention (first non-zero in-plane coefficient
    positive) makes the result deterministic, and AF-Max is invariant to
    the sign anyway.
    """
    _, e1, e2 = _perp_basis(reference_axis)
    b11 = _quadform(hessians6, e1)
    b22 = _quadform(hessians6, e2)
    # e1^T H e2 expanded in components
    b12 = (hessians6[..., 0] * e1[0] * e2[0]
           + hessians6[..., 1] * e1[1] * e2[1]
           + hessians6[..., 2] * e1[2] * e2[2]
           + hessians6[..., 3] * (e1[0] * e2[1] + e1[1] * e2[0])
           + hessians6[..., 4] * (e1[0] * e2[2] + e1[2] * e2[0])
           + hessians6[..., 5] * (e1[1] * e2[2] + e1[2] * e2[1]))
    mean = 0.5 * (b11 + b22)
    diff = 0.5 * (b11 - b22)
    spread = np.sqrt(diff * diff + b12 * b12)
    lam_plus = mean + spread
    lam_minus = mean - spread
    lam = np.where(np.abs(lam_plus) >= np.abs(lam_minus), lam_plus, lam_minus)

    # Eigenvector of [[b11, b12], [b12, b22]] for lam; pick the better
    # conditioned branch and fall back to e1 when the restriction is a
    # multiple of the identity (every direction is equivalent).
    v1 = np.stack([b12, lam - b11], axis=-1)
    v2 = np.stack([lam - b22, b12], axis=-1)
    n1 = np.linalg.norm(v1, axis=-1)
    n2 = np.linalg.norm(v2, axis=-1)
    v = np.where((n1 >= n2)[..., None], v1, v2)
    vnorm = np.linalg.norm(v, axis=-1)
    degenerate = vnorm <= 1e-30 * np.maximum(np.abs(lam), 1.0)
    v[degenerate] = (1.0, 0.0)
    v /= np.linalg.norm(v, axis=-1)[..., None]
    flip = (v[..., 0] < 0) | ((v[..., 0] == 0) & (v[..., 1] < 0))
    v[flip] *= -1.0
    return v[..., 0, None] * e1 + v[..., 1, None] * e2


def af_max_field(solution: FieldSolution, eval_grid: EvaluationGrid,
                 policy: AxonPolicy, leads=None, *, directions=None,
                 step_mm=None, threads: int = 1):
    """AF-Max per node plus the per-sample tangential AF and Hessians.

    Returns ``(dirs, offsets, af_tan, af_max, hessians)``.  ``directions``
    overrides the policy with explicit per-node unit tangents, which is how
    several models share one axon population.
    """
    values, origin, spacing = _grid_arrays(solution)
    step = _resolve_step(solution, step_mm)
    pts = eval_grid.node_coords()
    n = pts.shape[0]

    if directions is not None:
        dirs = np.ascontiguousarray(directions, dtype=np.float64)
        if dirs.shape != (n, 3):
            raise ValueError(f"directions must have shape ({n}, 3)")
    elif policy.orientation == ORIENT_FIXED:
        dirs = np.tile(np.asarray(policy.direction, dtype=np.float64), (n, 1))
    else:
        if policy.reference_axis is not None:
            ref = np.asarray(policy.reference_axis, dtype=np.float64)
        elif leads:
            ref = average_lead_axis(leads)
        else:
            raise ValueError(
                "worst-case orientation needs a reference axis or the lead list"
            )
        h_center = np.empty((n, 6), dtype=np.float64)

        def work_center(span):
            i, j = span
            h_center[i:j] = kernels.hessian_many(values, origin, spacing, pts[i:j], step)

        _run_chunked(n, work_center, threads)
        dirs = worst_case_directions(h_center, ref)

    offsets = policy.sample_offsets()
    s = offsets.size
    hessians = np.empty((n, s, 6), dtype=np.float64)
    af_tan = np.empty((n, s), dtype=np.float64)

    def work(span):
        i, j = span
        for si, off in enumerate(offsets):
            sample_pts = pts[i:j] + off * dirs[i:j]
            h6 = kernels.hessian_many(values, origin, spacing, sample_pts, step)
            hessians[i:j, si, :] = h6
            af_tan[i:j, si] = -_quadform(h6, dirs[i:j])

    _run_chunked(n, work, threads)
    af_max = np.max(np.abs(af_tan), axis=1)
    return dirs, offsets, af_tan, af_max, hessians


def evaluate_activation(solution: FieldSolution, eval_grid: EvaluationGrid,
                        policy: AxonPolicy, leads=None, *, directions=None,
                        step_mm=None, threads: int = 1) -> ActivationField:
    """EF and AF metrics for one solution on one evaluation grid."""
    ef, ef_norm = ef_field(solution, eval_grid, step_mm=step_mm, threads=threads)
    dirs, offsets, af_tan, af_max, hessians = af_max_field(
        solution, eval_grid, policy, leads,
        directions=directions, step_mm=step_mm, threads=threads,
    )
    step = _resolve_step(solution, step_mm)
    return ActivationField(
        eval_grid=eval_grid,
        ef=ef,
        ef_norm=ef_norm,
        axon_dirs=dirs,
        axon_offsets=offsets,
        af_tan=af_tan,
        af_max=af_max,
        hessians=hessians,
        step_mm=tuple(step),
    )
