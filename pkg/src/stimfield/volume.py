"""Regular-grid volume containers, coordinate transforms, interpolation, I/O.

Volumes are cell-centered: ``origin`` is the world position (mm) of the
center of voxel (0, 0, 0) and values live at voxel centers.  Arrays are
immutable after construction so volumes can be shared across threads.

Files come in pairs: a plain-text header (UTF-8 ``key=value`` lines) and a
raw little-endian binary payload referenced by the header's ``data`` key.
Scalar and tensor payloads are 32-bit floats, masks are 8-bit 0/1.  Voxels
are serialized x-fastest; multi-component volumes store the components of
each voxel consecutively.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import OutOfDomainError, VolumeFormatError

HEADER_KEYS = ("dims", "spacing_mm", "origin_mm", "dtype", "components", "order", "data")
TENSOR_COMPONENTS = ("xx", "yy", "zz", "xy", "xz", "yz")


@dataclass(frozen=True)
class VoxelGrid:
    """Geometry of a regular grid: axis dimensions, spacing and origin (mm)."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise ValueError(f"dims must be 3 positive integers, got {self.dims}")
        if len(spacing) != 3 or any(not np.isfinite(s) or s <= 0 for s in spacing):
            raise ValueError(f"spacing must be positive on all axes, got {self.spacing}")
        if len(origin) != 3 or any(not np.isfinite(o) for o in origin):
            raise ValueError(f"origin must be finite, got {self.origin}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def world_to_index(self, points: np.ndarray) -> np.ndarray:
        """Fractional voxel indices of world points; no clamping."""
        points = np.asarray(points, dtype=np.float64)
        return (points - np.array(self.origin)) / np.array(self.spacing)

    def index_to_world(self, indices: np.ndarray) -> np.ndarray:
        """World coordinates (mm) of fractional voxel indices."""
        indices = np.asarray(indices, dtype=np.float64)
        return np.array(self.origin) + indices * np.array(self.spacing)

    def axis_centers(self, axis: int) -> np.ndarray:
        """1D array of voxel-center coordinates along one axis."""
        return self.origin[axis] + self.spacing[axis] * np.arange(self.dims[axis])

    def hull(self) -> tuple[np.ndarray, np.ndarray]:
        """(min, max) corners of the voxel-center bounding box."""
        lo = np.array(self.origin)
        hi = lo + (np.array(self.dims) - 1) * np.array(self.spacing)
        return lo, hi

    def contains(self, points: np.ndarray, margin_mm: float = 0.0) -> np.ndarray:
        """Boolean per point: inside the center hull shrunk by ``margin_mm``."""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        lo, hi = self.hull()
        ok = (points >= lo + margin_mm) & (points <= hi - margin_mm)
        return np.all(ok, axis=1)


def _freeze(values: np.ndarray) -> np.ndarray:
    values.flags.writeable = False
    return values


@dataclass(frozen=True)
class ScalarVolume:
    """One real value per voxel, indexed ``values[ix, iy, iz]``."""

    grid: VoxelGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.shape != self.grid.dims:
            raise ValueError(
                f"value shape {values.shape} does not match grid dims {self.grid.dims}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("scalar volume contains non-finite values")
        object.__setattr__(self, "values", _freeze(values))


@dataclass(frozen=True)
class TensorVolume:
    """Six symmetric-tensor components per voxel, ordered xx, yy, zz, xy, xz, yz."""

    grid: VoxelGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.shape != self.grid.dims + (6,):
            raise ValueError(
                f"value shape {values.shape} does not match grid dims {self.grid.dims} + (6,)"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("tensor volume contains non-finite values")
        object.__setattr__(self, "values", _freeze(values))

    def as_matrices(self) -> np.ndarray:
        """Full (nx, ny, nz, 3, 3) symmetric matrices."""
        v = self.values
        m = np.empty(v.shape[:3] + (3, 3), dtype=np.float64)
        m[..., 0, 0] = v[..., 0]
        m[..., 1, 1] = v[..., 1]
        m[..., 2, 2] = v[..., 2]
        m[..., 0, 1] = m[..., 1, 0] = v[..., 3]
        m[..., 0, 2] = m[..., 2, 0] = v[..., 4]
        m[..., 1, 2] = m[..., 2, 1] = v[..., 5]
        return m

    def min_eigenvalue(self) -> float:
        eigs = np.linalg.eigvalsh(self.as_matrices().reshape(-1, 3, 3))
        return float(eigs.min())

    def assert_psd(self, tol: float = 0.0) -> None:
        """Raise if any voxel tensor has an eigenvalue below ``-tol``."""
        m = self.min_eigenvalue()
        if m < -tol:
            raise ValueError(
                f"tensor volume is not positive semi-definite (min eigenvalue {m:g})"
            )


@dataclass(frozen=True)
class MaskVolume:
    """One boolean per voxel."""

    grid: VoxelGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=bool)
        if values.shape != self.grid.dims:
            raise ValueError(
                f"mask shape {values.shape} does not match grid dims {self.grid.dims}"
            )
        object.__setattr__(self, "values", _freeze(values))

    @property
    def count(self) -> int:
        return int(self.values.sum())


def world_to_index(grid: VoxelGrid, point) -> np.ndarray:
    return grid.world_to_index(point)


def index_to_world(grid: VoxelGrid, index) -> np.ndarray:
    return grid.index_to_world(index)


def trilinear_sample(vol: ScalarVolume, point) -> float:
    """Trilinear interpolation of the 8 voxel values surrounding ``point``."""
    return float(trilinear_sample_many(vol, np.asarray(point, dtype=np.float64)[np.newaxis, :])[0])


def trilinear_sample_many(vol: ScalarVolume, points: np.ndarray) -> np.ndarray:
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError(f"expected (n, 3) points, got {points.shape}")
    return kernels.trilinear_many(
        vol.values,
        np.asarray(vol.grid.origin, dtype=np.float64),
        np.asarray(vol.grid.spacing, dtype=np.float64),
        points,
    )


# ---------------------------------------------------------------------------
# File I/O


def _format_floats(vals) -> str:
    return " ".join(repr(float(v)) for v in vals)


def _payload_order(values: np.ndarray) -> np.ndarray:
    """Flatten voxel data x-fastest, components (if any) fastest of all."""
    if values.ndim == 3:
        return values.transpose(2, 1, 0).reshape(-1)
    return values.transpose(2, 1, 0, 3).reshape(-1)


def _payload_unorder(flat: np.ndarray, dims, components: int) -> np.ndarray:
    nx, ny, nz = dims
    if components == 1:
        return np.ascontiguousarray(flat.reshape(nz, ny, nx).transpose(2, 1, 0))
    return np.ascontiguousarray(
        flat.reshape(nz, ny, nx, components).transpose(2, 1, 0, 3)
    )


def save_volume(vol, path) -> None:
    """Write the header at ``path`` and the payload next to it (same stem, .raw)."""
    path = Path(path)
    payload_path = path.with_suffix(".raw")
    if isinstance(vol, ScalarVolume):
        dtype, components = "f32", 1
        payload = _payload_order(vol.values).astype("<f4")
    elif isinstance(vol, TensorVolume):
        dtype, components = "f32", 6
        payload = _payload_order(vol.values).astype("<f4")
    elif isinstance(vol, MaskVolume):
        dtype, components = "u8", 1
        payload = _payload_order(vol.values).astype(np.uint8)
    else:
        raise TypeError(f"cannot save object of type {type(vol).__name__}")
    grid = vol.grid
    lines = [
        "dims=" + " ".join(str(d) for d in grid.dims),
        "spacing_mm=" + _format_floats(grid.spacing),
        "origin_mm=" + _format_floats(grid.origin),
        f"dtype={dtype}",
        f"components={components}",
        "order=x-fastest",
        f"data={payload_path.name}",
    ]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    payload_path.write_bytes(payload.tobytes())


def _parse_header(path: Path) -> dict:
    fields = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if "=" not in line:
            raise VolumeFormatError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    missing = [k for k in HEADER_KEYS if k not in fields]
    if missing:
        raise VolumeFormatError(f"{path}: missing header keys {missing}")
    unknown = [k for k in fields if k not in HEADER_KEYS]
    if unknown:
        raise VolumeFormatError(f"{path}: unknown header keys {unknown}")
    return fields


def load_volume(path):
    """Load a volume pair; returns ScalarVolume, TensorVolume, or MaskVolume."""
    path = Path(path)
    fields = _parse_header(path)
    try:
        dims = tuple(int(t) for t in fields["dims"].split())
        spacing = tuple(float(t) for t in fields["spacing_mm"].split())
        origin = tuple(float(t) for t in fields["origin_mm"].split())
        components = int(fields["components"])
    except ValueError as exc:
        raise VolumeFormatError(f"{path}: malformed header value ({exc})") from exc
    if len(dims) != 3 or len(spacing) != 3 or len(origin) != 3:
        raise VolumeFormatError(f"{path}: dims/spacing_mm/origin_mm must have 3 entries")
    if fields["order"] != "x-fastest":
        raise VolumeFormatError(f"{path}: unsupported order {fields['order']!r}")
    dtype = fields["dtype"]
    if dtype == "f32":
        np_dtype = np.dtype("<f4")
    elif dtype == "u8":
        np_dtype = np.dtype(np.uint8)
    else:
        raise VolumeFormatError(f"{path}: unknown dtype {dtype!r}")
    if components not in (1, 6):
        raise VolumeFormatError(f"{path}: components must be 1 or 6, got {components}")
    if dtype == "u8" and components != 1:
        raise VolumeFormatError(f"{path}: masks must have a single component")

    payload_path = path.parent / fields["data"]
    raw = payload_path.read_bytes()
    expected = dims[0] * dims[1] * dims[2] * components * np_dtype.itemsize
    if len(raw) != expected:
        raise VolumeFormatError(
            f"{payload_path}: payload holds {len(raw)} bytes, header implies {expected}"
        )
    flat = np.frombuffer(raw, dtype=np_dtype)
    grid = VoxelGrid(dims, spacing, origin)
    if dtype == "u8":
        bad = np.setdiff1d(np.unique(flat), [0, 1])
        if bad.size:
            raise VolumeFormatError(f"{payload_path}: mask payload has values {bad.tolist()}")
        return MaskVolume(grid, _payload_unorder(flat, dims, 1).astype(bool))
    data = _payload_unorder(flat.astype(np.float64), dims, components)
    if not np.all(np.isfinite(data)):
        raise VolumeFormatError(f"{payload_path}: payload contains non-finite values")
    if components == 1:
        return ScalarVolume(grid, data)
    return TensorVolume(grid, data)
