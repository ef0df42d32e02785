"""Finite-volume discretization and iterative solve of div(sigma grad u) = 0.

Cell-centered structured-grid scheme:

* Diagonal tensor components use two-point fluxes with harmonic face
  averaging of the half-cell resistances.  An insulator voxel has infinite
  half-resistance (no flux); a metal conductor voxel has zero
  half-resistance, which places its potential on the tissue-metal face.
* Off-diagonal tensor components enter through face fluxes built from
  per-voxel centered-difference gradients averaged to the face (one-sided
  next to insulators and at the domain edge).  The scheme is exact for
  linear fields under a constant tensor; where the off-diagonal components
  vary it is asymmetric at O(h), so the assembled matrix is explicitly
  symmetrized (equivalent to corner-averaging the tensor), keeping the
  operator CG-compatible at the cost of the discrete maximum principle,
  which only the diagonal part guarantees.
* Active contacts are Dirichlet voxels (cathodes at their set voltage,
  anodes at 0); the outer voxel shell is Dirichlet as well (grounded by
  default).  Every floating conductor collapses to a single unknown whose
  row is the sum of its member-voxel balance equations, which is exactly
  the discrete zero-net-current condition for that conductor.

The solve is a preconditioned conjugate-gradient iteration; serial and
deterministic for fixed inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, ConvergenceError
from .geometry import ROLE_ANODE, ROLE_CATHODE, ConductorMap, StimulationSetting
from .volume import ScalarVolume, TensorVolume, VoxelGrid

_KIND_UNKNOWN = 0
_KIND_DIRICHLET = 1
_KIND_INSULATOR = 2


@dataclass(frozen=True)
class SolverConfig:
    relative_tolerance: float = 1e-8
    max_iterations: int = 20000
    preconditioner: str = "diagonal"

    def __post_init__(self):
        if not 0.0 < self.relative_tolerance < 1.0:
            raise ValueError("relative_tolerance must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.preconditioner not in ("none", "diagonal"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass(frozen=True)
class DiscreteSystem:
    grid: VoxelGrid
    operator: sp.csr_matrix
    rhs: np.ndarray
    unknown_index: np.ndarray
    dirichlet_mask: np.ndarray
    dirichlet_values: np.ndarray
    insulator_mask: np.ndarray
    n_tissue_unknowns: int
    conductor_keys: tuple
    floating_keys: tuple
    floating_slots: dict
    driven_values: dict
    contact_faces: dict

    @property
    def n_unknowns(self) -> int:
        return self.rhs.size


@dataclass(frozen=True)
class FieldSolution:
    """Potential volume plus per-conductor potentials and solve metadata."""

    potential: ScalarVolume
    conductor_potentials: dict
    floating_keys: frozenset
    residual_norm: float | None
    iterations: int | None

    @property
    def floating_potentials(self) -> dict:
        return {k: v for k, v in self.conductor_potentials.items()
                if k in self.floating_keys}


def _check_conductivity_psd(values: np.ndarray) -> None:
    """Necessary-and-sufficient PSD test via principal minors, vectorized."""
    xx, yy, zz = values[..., 0], values[..., 1], values[..., 2]
    xy, xz, yz = values[..., 3], values[..., 4], values[..., 5]
    scale = float(np.max(np.abs(values))) or 1.0
    tol = 1e-12 * scale
    bad = (xx < -tol) | (yy < -tol) | (zz < -tol)
    bad |= (xx * yy - xy * xy) < -(tol * scale)
    bad |= (xx * zz - xz * xz) < -(tol * scale)
    bad |= (yy * zz - yz * yz) < -(tol * scale)
    det = (xx * (yy * zz - yz * yz) - xy * (xy * zz - yz * xz)
           + xz * (xy * yz - yy * xz))
    bad |= det < -(tol * scale * scale)
    if bad.any():
        idx = np.unravel_index(int(np.argmax(bad)), bad.shape)
        raise AssemblyError(f"conductivity tensor at voxel {idx} is not PSD")


def _shell_mask(dims) -> np.ndarray:
    shell = np.ones(dims, dtype=bool)
    if all(d > 2 for d in dims):
        shell[1:-1, 1:-1, 1:-1] = False
    return shell


def _boundary_values(grid: VoxelGrid, shell: np.ndarray, boundary_potential) -> np.ndarray:
    if callable(boundary_potential):
        idx = np.argwhere(shell)
        pts = grid.index_to_world(idx)
        vals = np.asarray(boundary_potential(pts), dtype=np.float64)
        if vals.shape != (idx.shape[0],):
            raise ValueError("boundary_potential callable must return one value per point")
        return vals
    arr = np.asarray(boundary_potential, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(int(shell.sum()), float(arr))
    if arr.shape == grid.dims:
        return arr[shell]
    raise ValueError("boundary_potential must be a scalar, callable, or full grid array")


def assemble(grid: VoxelGrid, sigma, conductors: ConductorMap | None = None,
             setting: StimulationSetting | None = None, *,
             boundary_potential=0.0, extra_dirichlet=None) -> DiscreteSystem:
    """Build the symmetric positive definite system for one stimulation state.

    ``boundary_potential`` sets the Dirichlet value on the outer voxel shell
    (scalar, callable on points, or full-grid array); ``None`` leaves the
    outer boundary no-flux.  ``extra_dirichlet`` is an optional
    ``(mask, values)`` pair for injecting Dirichlet regions directly, used by
    the analytic validation scenarios.
    """
    dims = grid.dims
    if isinstance(sigma, ScalarVolume):
        if sigma.grid != grid:
            raise ValueError("sigma grid does not match the domain grid")
        sdiag = (sigma.values, sigma.values, sigma.values)
        soff = None
        if np.any(sigma.values < 0):
            raise AssemblyError("negative isotropic conductivity")
    elif isinstance(sigma, TensorVolume):
        if sigma.grid != grid:
            raise ValueError("sigma grid does not match the domain grid")
        _check_conductivity_psd(sigma.values)
        v = sigma.values
        sdiag = (v[..., 0], v[..., 1], v[..., 2])
        soff = v[..., 3:6] if np.any(v[..., 3:6] != 0.0) else None
    else:
        raise TypeError("sigma must be a ScalarVolume or TensorVolume")

    kind = np.zeros(dims, dtype=np.int8)
    gval = np.zeros(dims, dtype=np.float64)
    conductor_voxels = np.zeros(dims, dtype=bool)
    float_slot = np.full(dims, -1, dtype=np.int32)

    if boundary_potential is not None:
        shell = _shell_mask(dims)
        kind[shell] = _KIND_DIRICHLET
        gval[shell] = _boundary_values(grid, shell, boundary_potential)

    floating_keys: list = []
    driven_values: dict = {}
    conductor_keys: tuple = ()
    if conductors is not None:
        if conductors.grid != grid:
            raise ValueError("conductor map grid does not match the domain grid")
        if setting is None:
            raise ValueError("a StimulationSetting is required when conductors are present")
        labels = conductors.labels
        ins = labels < 0
        kind[ins] = _KIND_INSULATOR
        conductor_keys = conductors.conductors
        for i, key in enumerate(conductor_keys):
            mask = labels == i + 1
            role = setting.role_of(*key)
            if role.role == ROLE_CATHODE:
                kind[mask] = _KIND_DIRICHLET
                gval[mask] = role.voltage
                driven_values[key] = float(role.voltage)
            elif role.role == ROLE_ANODE:
                kind[mask] = _KIND_DIRICHLET
                gval[mask] = 0.0
                driven_values[key] = 0.0
            else:
                kind[mask] = _KIND_UNKNOWN
                float_slot[mask] = len(floating_keys)
                floating_keys.append(key)
            conductor_voxels |= mask

    if extra_dirichlet is not None:
        mask, values = extra_dirichlet
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != dims:
            raise ValueError("extra_dirichlet mask shape does not match the grid")
        if conductors is not None and np.any(mask & (conductors.labels != 0)):
            raise ValueError("extra_dirichlet overlaps lead voxels")
        kind[mask] = _KIND_DIRICHLET
        gval[mask] = np.broadcast_to(np.asarray(values, dtype=np.float64), dims)[mask]

    dirichlet_mask = kind == _KIND_DIRICHLET
    if not dirichlet_mask.any():
        raise AssemblyError(
            "no Dirichlet surface (no cathode, ground, or grounded boundary); "
            "the system is singular"
        )

    insulator_mask = kind == _KIND_INSULATOR
    tissue_unknown = (kind == _KIND_UNKNOWN) & (float_slot < 0)
    n_tissue = int(tissue_unknown.sum())
    unknown_index = np.full(dims, -1, dtype=np.int64)
    unknown_index[tissue_unknown] = np.arange(n_tissue, dtype=np.int64)
    is_float = float_slot >= 0
    unknown_index[is_float] = n_tissue + float_slot[is_float].astype(np.int64)
    n_unknowns = n_tissue + len(floating_keys)

    h = np.asarray(grid.spacing, dtype=np.float64)
    vol = float(h[0] * h[1] * h[2])

    rows: list = []
    cols: list = []
    vals: list = []
    b = np.zeros(n_unknowns, dtype=np.float64)

    face_T = {key: [] for key in conductor_keys}
    face_other = {key: [] for key in conductor_keys}
    flat = np.arange(int(np.prod(dims)), dtype=np.int64).reshape(dims)
    labels_arr = conductors.labels if conductors is not None else None

    def slab(arr, axis, side):
        sl = [slice(None)] * 3
        sl[axis] = slice(None, -1) if side == 0 else slice(1, None)
        return arr[tuple(sl)]

    for axis in range(3):
        s = np.array(sdiag[axis], dtype=np.float64)
        with np.errstate(divide="ignore"):
            rhalf = np.where(s > 0.0, h[axis] / (2.0 * s), np.inf)
        rhalf[conductor_voxels] = 0.0
        rhalf[insulator_mask] = np.inf
        area = vol / h[axis]

        r_i, r_j = slab(rhalf, axis, 0), slab(rhalf, axis, 1)
        denom = r_i + r_j
        with np.errstate(divide="ignore", invalid="ignore"):
            T = np.where((denom > 0.0) & np.isfinite(denom), area / denom, 0.0)

        k_i, k_j = slab(kind, axis, 0), slab(kind, axis, 1)
        u_i, u_j = slab(unknown_index, axis, 0), slab(unknown_index, axis, 1)
        g_i, g_j = slab(gval, axis, 0), slab(gval, axis, 1)
        active = T > 0.0

        uu = active & (u_i >= 0) & (u_j >= 0)
        if uu.any():
            a, bcol, t = u_i[uu], u_j[uu], T[uu]
            rows += [a, bcol, a, bcol]
            cols += [a, bcol, bcol, a]
            vals += [t, t, -t, -t]
        ud = active & (u_i >= 0) & (k_j == _KIND_DIRICHLET)
        if ud.any():
            a, t, g = u_i[ud], T[ud], g_j[ud]
            rows.append(a)
            cols.append(a)
            vals.append(t)
            np.add.at(b, a, t * g)
        du = active & (u_j >= 0) & (k_i == _KIND_DIRICHLET)
        if du.any():
            a, t, g = u_j[du], T[du], g_i[du]
            rows.append(a)
            cols.append(a)
            vals.append(t)
            np.add.at(b, a, t * g)

        if labels_arr is not None:
            l_i, l_j = slab(labels_arr, axis, 0), slab(labels_arr, axis, 1)
            f_i, f_j = slab(flat, axis, 0), slab(flat, axis, 1)
            for ci, key in enumerate(conductor_keys):
                code = ci + 1
                mine = active & (l_i == code) & (l_j != code)
                if mine.any():
                    face_T[key].append(T[mine])
                    face_other[key].append(f_j[mine])
                mine = active & (l_j == code) & (l_i != code)
                if mine.any():
                    face_T[key].append(T[mine])
                    face_other[key].append(f_i[mine])

    if rows:
        row_cat = np.concatenate(rows)
        col_cat = np.concatenate(cols)
        val_cat = np.concatenate(vals)
        A = sp.coo_matrix((val_cat, (row_cat, col_cat)),
                          shape=(n_unknowns, n_unknowns)).tocsr()
    else:
        A = sp.csr_matrix((n_unknowns, n_unknowns))

    if soff is not None:
        A_cross, b_cross = _cross_terms(grid, soff, kind, unknown_index,
                                        conductor_voxels, gval, n_unknowns)
        A = A + A_cross
        b = b + b_cross

    diag = A.diagonal()
    if n_unknowns and np.any(diag <= 0.0):
        n_bad = int(np.count_nonzero(diag <= 0.0))
        raise AssemblyError(
            f"{n_bad} unknowns have a non-positive diagonal "
            "(tissue isolated by insulators or degenerate conductivity)"
        )

    contact_faces = {
        key: (
            np.concatenate(face_T[key]) if face_T[key] else np.zeros(0),
            np.concatenate(face_other[key]) if face_other[key] else np.zeros(0, dtype=np.int64),
        )
        for key in conductor_keys
    }

    return DiscreteSystem(
        grid=grid,
        operator=A,
        rhs=b,
        unknown_index=unknown_index,
        dirichlet_mask=dirichlet_mask,
        dirichlet_values=gval,
        insulator_mask=insulator_mask,
        n_tissue_unknowns=n_tissue,
        conductor_keys=tuple(conductor_keys),
        floating_keys=tuple(floating_keys),
        floating_slots={k: n_tissue + i for i, k in enumerate(floating_keys)},
        driven_values=driven_values,
        contact_faces=contact_faces,
    )


_OFF_COMPONENT = {(0, 1): 0, (1, 0): 0, (0, 2): 1, (2, 0): 1, (1, 2): 2, (2, 1): 2}


def _cell_gradient_op(dims, axis, h_axis, usable: np.ndarray) -> sp.csr_matrix:
    """Per-cell difference along one axis over flat cell indices.

    Centered where both neighbors are usable, one-sided toward the usable
    side otherwise, zero when isolated.  Rows for unusable cells are empty.
    """
    n_cells = int(np.prod(dims))
    flat = np.arange(n_cells, dtype=np.int64).reshape(dims)
    ok = usable

    def shifted(side):
        avail = np.zeros(dims, dtype=bool)
        nb = np.zeros(dims, dtype=np.int64)
        sl_c = [slice(None)] * 3
        sl_n = [slice(None)] * 3
        if side > 0:
            sl_c[axis] = slice(None, -1)
            sl_n[axis] = slice(1, None)
        else:
            sl_c[axis] = slice(1, None)
            sl_n[axis] = slice(None, -1)
        avail[tuple(sl_c)] = ok[tuple(sl_n)]
        nb[tuple(sl_c)] = flat[tuple(sl_n)]
        return avail, nb

    up_ok, up_nb = shifted(+1)
    dn_ok, dn_nb = shifted(-1)
    up_ok &= ok
    dn_ok &= ok

    rows, cols, vals = [], [], []
    centered = up_ok & dn_ok
    if centered.any():
        r = flat[centered]
        rows += [r, r]
        cols += [up_nb[centered], dn_nb[centered]]
        vals += [np.full(r.size, 0.5 / h_axis), np.full(r.size, -0.5 / h_axis)]
    only_up = up_ok & ~dn_ok
    if only_up.any():
        r = flat[only_up]
        rows += [r, r]
        cols += [up_nb[only_up], r]
        vals += [np.full(r.size, 1.0 / h_axis), np.full(r.size, -1.0 / h_axis)]
    only_dn = dn_ok & ~up_ok
    if only_dn.any():
        r = flat[only_dn]
        rows += [r, r]
        cols += [r, dn_nb[only_dn]]
        vals += [np.full(r.size, 1.0 / h_axis), np.full(r.size, -1.0 / h_axis)]
    if not rows:
        return sp.csr_matrix((n_cells, n_cells))
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_cells, n_cells),
    ).tocsr()


def _cross_terms(grid, soff, kind, unknown_index, conductor_voxels, gval, n_unknowns):
    """Off-diagonal tensor fluxes: -div over faces of sigma_ab * du/db.

    Per-cell centered gradients are averaged to faces and weighted by the
    face tensor component (taken from the non-metal side at conductor
    surfaces).  The result is symmetrized, which matches the as-built
    operator exactly for constant tensors.
    """
    dims = grid.dims
    h = np.asarray(grid.spacing, dtype=np.float64)
    n_cells = int(np.prod(dims))
    flat = np.arange(n_cells, dtype=np.int64).reshape(dims)

    usable = kind != _KIND_INSULATOR
    # metal carries no off-diagonal conductivity of its own
    off_masked = np.where((usable & ~conductor_voxels)[..., None], soff, 0.0)

    grads = {
        b: _cell_gradient_op(dims, b, h[b], usable) for b in range(3)
    }

    rows_sel = unknown_index.reshape(-1)
    unknown_cells = rows_sel >= 0
    sel = sp.coo_matrix(
        (np.ones(int(unknown_cells.sum())),
         (rows_sel[unknown_cells], flat.reshape(-1)[unknown_cells])),
        shape=(n_unknowns, n_cells),
    ).tocsr()

    r0 = np.where(kind.reshape(-1) == _KIND_DIRICHLET, gval.reshape(-1), 0.0)

    C = sp.csr_matrix((n_cells, n_cells))
    for a in range(3):
        area = float(np.prod(h) / h[a])
        sl_lo = [slice(None)] * 3
        sl_hi = [slice(None)] * 3
        sl_lo[a] = slice(None, -1)
        sl_hi[a] = slice(1, None)
        sl_lo, sl_hi = tuple(sl_lo), tuple(sl_hi)
        lo_flat = flat[sl_lo].reshape(-1)
        hi_flat = flat[sl_hi].reshape(-1)
        both = (usable[sl_lo] & usable[sl_hi]).reshape(-1)
        lo_flat, hi_flat = lo_flat[both], hi_flat[both]
        n_faces = lo_flat.size
        if n_faces == 0:
            continue
        face_rows = np.arange(n_faces, dtype=np.int64)
        # face average of per-cell gradients
        avg = sp.coo_matrix(
            (np.full(2 * n_faces, 0.5),
             (np.concatenate([face_rows, face_rows]),
              np.concatenate([lo_flat, hi_flat]))),
            shape=(n_faces, n_cells),
        ).tocsr()
        # divergence: row(cell) -= area * (F_plus - F_minus)
        div = sp.coo_matrix(
            (np.concatenate([np.full(n_faces, -area), np.full(n_faces, area)]),
             (np.concatenate([lo_flat, hi_flat]),
              np.concatenate([face_rows, face_rows]))),
            shape=(n_cells, n_faces),
        ).tocsr()
        tissue_lo = (~conductor_voxels).reshape(-1)[lo_flat].astype(np.float64)
        tissue_hi = (~conductor_voxels).reshape(-1)[hi_flat].astype(np.float64)
        weight = np.maximum(tissue_lo + tissue_hi, 1.0)
        for b in range(3):
            if b == a:
                continue
            comp = off_masked[..., _OFF_COMPONENT[(a, b)]].reshape(-1)
            face_sigma = (comp[lo_flat] * tissue_lo + comp[hi_flat] * tissue_hi) / weight
            if not np.any(face_sigma):
                continue
            flux = sp.diags(face_sigma) @ (avg @ grads[b])
            C = C + div @ flux

    rect = sel @ C
    A_cross = rect @ sel.T
    A_cross = ((A_cross + A_cross.T) * 0.5).tocsr()
    b_cross = -(rect @ r0)
    return A_cross, b_cross


def solve(system: DiscreteSystem, cfg: SolverConfig | None = None) -> FieldSolution:
    """Preconditioned CG solve; raises ConvergenceError on failure."""
    cfg = cfg or SolverConfig()
    A, b = system.operator, system.rhs
    n = system.n_unknowns
    x = np.zeros(n, dtype=np.float64)
    iterations = 0
    residual = 0.0
    b_norm = float(np.linalg.norm(b))
    if n > 0 and b_norm > 0.0:
        x, iterations, residual = _pcg(A, b, cfg)
    return _make_solution(system, x, iterations, residual)


def _pcg(A, b, cfg: SolverConfig):
    b_norm = float(np.linalg.norm(b))
    target = cfg.relative_tolerance * b_norm
    use_jacobi = cfg.preconditioner == "diagonal"
    inv_diag = 1.0 / A.diagonal() if use_jacobi else None

    x = np.zeros_like(b)
    r = b.copy()
    z = inv_diag * r if use_jacobi else r.copy()
    p = z.copy()
    rz = float(r @ z)
    res = float(np.linalg.norm(r))
    iterations = 0
    while res > target:
        if iterations >= cfg.max_iterations:
            raise ConvergenceError(
                f"no convergence after {iterations} iterations "
                f"(relative residual {res / b_norm:.3e}, target {cfg.relative_tolerance:.3e})",
                iterations=iterations,
                relative_residual=res / b_norm,
            )
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise ConvergenceError(
                "operator is not positive definite along the search direction "
                "(extreme anisotropy can break the discrete form)",
                iterations=iterations,
                relative_residual=res / b_norm,
            )
        alpha = rz / pAp
        x += alpha * p
        iterations += 1
        if iterations % 50 == 0:
            r = b - A @ x
        else:
            r -= alpha * Ap
        z = inv_diag * r if use_jacobi else r
        rz_new = float(r @ z)
        beta = rz_new / rz
        p = z + beta * p
        rz = rz_new
        res = float(np.linalg.norm(r))
    return x, iterations, res


def _make_solution(system: DiscreteSystem, x: np.ndarray, iterations, residual):
    u = np.array(system.dirichlet_values, dtype=np.float64)
    mask = system.unknown_index >= 0
    u[mask] = x[system.unknown_index[mask]]
    if system.insulator_mask.any():
        _fill_insulator(u, system.insulator_mask)

    conductor_potentials = dict(system.driven_values)
    for key, slot in system.floating_slots.items():
        conductor_potentials[key] = float(x[slot])

    return FieldSolution(
        potential=ScalarVolume(system.grid, u),
        conductor_potentials=conductor_potentials,
        floating_keys=frozenset(system.floating_keys),
        residual_norm=float(residual),
        iterations=iterations,
    )


def _fill_insulator(u: np.ndarray, insulator: np.ndarray) -> None:
    """Fill non-physical insulator voxels by layered neighbor averaging.

    Each pass assigns every insulator voxel adjacent to known values the mean
    of those values, simultaneously, so the result is deterministic and
    respects any mirror symmetry of the solution.
    """
    known = ~insulator
    remaining = insulator.copy()
    while remaining.any():
        total = np.zeros_like(u)
        count = np.zeros(u.shape, dtype=np.int32)
        for axis in range(3):
            for side in (1, -1):
                sl_to = [slice(None)] * 3
                sl_from = [slice(None)] * 3
                if side > 0:
                    sl_to[axis] = slice(None, -1)
                    sl_from[axis] = slice(1, None)
                else:
                    sl_to[axis] = slice(1, None)
                    sl_from[axis] = slice(None, -1)
                sl_to, sl_from = tuple(sl_to), tuple(sl_from)
                k = known[sl_from]
                total[sl_to] += np.where(k, u[sl_from], 0.0)
                count[sl_to] += k
        frontier = remaining & (count > 0)
        if not frontier.any():
            break
        u[frontier] = total[frontier] / count[frontier]
        known |= frontier
        remaining &= ~frontier


def contact_net_current(solution: FieldSolution, system: DiscreteSystem, key) -> float:
    """Signed current (A) out of a contact through its boundary faces."""
    if key not in system.contact_faces:
        raise KeyError(f"no contact {key} in the assembled system")
    T, other = system.contact_faces[key]
    u_self = solution.conductor_potentials[key]
    u_other = solution.potential.values.reshape(-1)[other]
    return float(np.sum(T * (u_self - u_other)))


def floating_net_current(solution: FieldSolution, system: DiscreteSystem, key) -> float:
    """Zero-net-current check value for a floating conductor."""
    if key not in system.floating_keys:
        raise ValueError(f"contact {key} is not floating in this system")
    return contact_net_current(solution, system, key)


def total_driven_current(solution: FieldSolution, system: DiscreteSystem) -> float:
    """Sum of |current| over all driven (Dirichlet) contacts."""
    return sum(abs(contact_net_current(solution, system, key))
               for key in system.driven_values)


def superpose_solutions(solutions, weights) -> FieldSolution:
    """Weighted combination of solutions over identical grids and geometry.

    Exactly reproduces a direct multi-contact solve when every contact that
    is driven in the combination is Dirichlet (possibly at 0 V) in each
    constituent solve; contacts floating in all constituents stay floating.
    """
    solutions = list(solutions)
    weights = [float(w) for w in weights]
    if not solutions or len(solutions) != len(weights):
        raise ValueError("need matching non-empty solutions and weights")
    grid = solutions[0].potential.grid
    keys = set(solutions[0].conductor_potentials)
    for s in solutions[1:]:
        if s.potential.grid != grid:
            raise ValueError("solutions live on different grids")
        if set(s.conductor_potentials) != keys:
            raise ValueError("solutions have different conductor sets")
    u = np.zeros(grid.dims, dtype=np.float64)
    for s, w in zip(solutions, weights):
        u += w * s.potential.values
    cp = {k: sum(w * s.conductor_potentials[k] for s, w in zip(solutions, weights))
          for k in keys}
    floating = frozenset.intersection(*[frozenset(s.floating_keys) for s in solutions])
    return FieldSolution(
        potential=ScalarVolume(grid, u),
        conductor_potentials=cp,
        floating_keys=floating,
        residual_norm=None,
        iterations=None,
    )
