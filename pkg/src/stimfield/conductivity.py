"""Conductivity fields: label lookup, diffusion-tensor mapping, homogeneity box.

The anisotropic tensor keeps the local trace fixed while adopting the
directional structure of a diffusion tensor:

    sigma = 3 * sigma_iso * D / tr(D)

so tr(sigma) = 3 * sigma_iso at every voxel and the mapping is invariant to
rescaling D.  Voxels whose diffusion trace is below ``trace_epsilon`` fall
back to isotropic sigma_iso * I and are counted in the returned diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .volume import ScalarVolume, TensorVolume, VoxelGrid

REQUIRED_TISSUES = ("gray", "white", "csf", "background")

# Representative low-frequency values (S/mm); a convenience preset only.
# Quantitative runs should pin their own table in the scenario config.
DEFAULT_CONDUCTIVITIES = {
    "gray": 1.23e-4,
    "white": 7.5e-5,
    "csf": 2.0e-3,
    "background": 1.0e-4,
}
DEFAULT_LABEL_CODES = {"background": 0, "gray": 1, "white": 2, "csf": 3}


@dataclass(frozen=True)
class TissueTable:
    """Isotropic conductivity per tissue name plus integer label codes."""

    conductivities: dict = field(default_factory=lambda: dict(DEFAULT_CONDUCTIVITIES))
    label_codes: dict = field(default_factory=lambda: dict(DEFAULT_LABEL_CODES))

    def __post_init__(self):
        object.__setattr__(self, "conductivities", dict(self.conductivities))
        object.__setattr__(self, "label_codes", dict(self.label_codes))
        missing = [t for t in REQUIRED_TISSUES if t not in self.conductivities]
        if missing:
            raise ValueError(f"tissue table must define {missing}")
        for name, sigma in self.conductivities.items():
            if not np.isfinite(sigma) or sigma <= 0:
                raise ValueError(f"conductivity for {name!r} must be positive, got {sigma}")
        for name in self.conductivities:
            if name not in self.label_codes:
                raise ValueError(f"no label code for tissue {name!r}")
        codes = list(self.label_codes.values())
        if len(set(codes)) != len(codes):
            raise ValueError("label codes must be unique")

    def sigma_for_code(self, code: int) -> float:
        for name, c in self.label_codes.items():
            if c == code:
                return self.conductivities[name]
        raise KeyError(f"label code {code} not present in the tissue table")


def isotropic_from_labels(labels: ScalarVolume, table: TissueTable) -> ScalarVolume:
    """Per-voxel conductivity lookup from an integer label volume."""
    codes = np.rint(labels.values).astype(np.int64)
    present = np.unique(codes)
    lut = {}
    for code in present:
        lut[int(code)] = table.sigma_for_code(int(code))
    out = np.empty(labels.values.shape, dtype=np.float64)
    for code, sigma in lut.items():
        out[codes == code] = sigma
    return ScalarVolume(labels.grid, out)


def isotropic_tensor(grid: VoxelGrid, sigma) -> TensorVolume:
    """Diagonal tensor volume from a constant or per-voxel sigma."""
    values = np.zeros(grid.dims + (6,), dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    for a in range(3):
        values[..., a] = sigma
    return TensorVolume(grid, values)


def tensor_from_diffusion(sigma_iso: ScalarVolume, diffusion: TensorVolume,
                          trace_epsilon: float = 1e-9):
    """Volume-constraint mapping of diffusion tensors to conductivity tensors.

    Returns ``(tensor, fallback_count)`` where ``fallback_count`` is the
    number of voxels with tr(D) <= trace_epsilon that were set isotropic.
    """
    if sigma_iso.grid != diffusion.grid:
        raise ValueError("sigma_iso and diffusion grids do not match")
    d = diffusion.values
    trace = d[..., 0] + d[..., 1] + d[..., 2]
    good = trace > trace_epsilon
    fallback_count = int(np.size(good) - np.count_nonzero(good))
    scale = np.zeros_like(trace)
    np.divide(3.0 * sigma_iso.values, trace, out=scale, where=good)
    out = d * scale[..., np.newaxis]
    if fallback_count:
        iso = sigma_iso.values[~good]
        for a in range(3):
            out[..., a][~good] = iso
        for a in range(3, 6):
            out[..., a][~good] = 0.0
    return TensorVolume(diffusion.grid, out), fallback_count


def restrict_heterogeneity_box(tensor: TensorVolume, center, half_width_mm: float,
                               sigma_background: float) -> TensorVolume:
    """Replace tensors outside an axis-aligned cube by isotropic background."""
    grid = tensor.grid
    center = np.asarray(center, dtype=np.float64)
    lo, hi = grid.hull()
    if np.any(center + half_width_mm < lo) or np.any(center - half_width_mm > hi):
        raise ValueError("heterogeneity box does not intersect the grid")
    cx = np.abs(grid.axis_centers(0) - center[0])[:, None, None]
    cy = np.abs(grid.axis_centers(1) - center[1])[None, :, None]
    cz = np.abs(grid.axis_centers(2) - center[2])[None, None, :]
    outside = (cx > half_width_mm) | (cy > half_width_mm) | (cz > half_width_mm)
    out = np.array(tensor.values)
    for a in range(3):
        out[..., a][outside] = sigma_background
    for a in range(3, 6):
        out[..., a][outside] = 0.0
    return TensorVolume(grid, out)


def heterogeneity_box_center(leads) -> np.ndarray:
    """Box center rule: lowest contact (one lead) or midpoint of lowest contacts."""
    from .geometry import lowest_contact_midpoint

    return lowest_contact_midpoint(leads)
