"""Discretization and solve: analytic oracles and structural properties."""

import numpy as np
import pytest

from stimfield.conductivity import isotropic_tensor
from stimfield.errors import AssemblyError, ConvergenceError
from stimfield.geometry import (
    ContactAssignment,
    StimulationSetting,
    voxelize_leads,
)
from stimfield.solver import (
    SolverConfig,
    assemble,
    contact_net_current,
    floating_net_current,
    solve,
    superpose_solutions,
    total_driven_current,
)
from stimfield.validation import (
    build_twin_leads,
    centered_grid,
    floating_sphere_map,
    shell_l2_error,
    solve_floating_sphere,
    solve_linear_field,
    solve_monopole_sphere,
    sphere_potential,
    superposition_deviation,
    twin_lead_grid,
)
from stimfield.volume import ScalarVolume, TensorVolume, VoxelGrid

SIGMA0 = 2.0e-4


def homogeneous(grid, value=SIGMA0):
    return ScalarVolume(grid, np.full(grid.dims, value))


def test_linear_boundary_is_exact_isotropic():
    err, _ = solve_linear_field(n=13, full_tensor=False)
    assert err < 1e-10


def test_linear_boundary_is_exact_full_tensor():
    err, _ = solve_linear_field(n=13, full_tensor=True)
    assert err < 1e-10


def test_operator_is_symmetric_with_cross_terms():
    grid = VoxelGrid((10, 9, 8), (0.8, 0.7, 0.9), (-4.0, -3.0, -3.0))
    rng = np.random.default_rng(8)
    a = rng.normal(size=grid.dims + (3, 3)) * 0.3
    m = a @ np.swapaxes(a, -1, -2) + 2.0 * np.eye(3)
    vals = np.stack([m[..., 0, 0], m[..., 1, 1], m[..., 2, 2],
                     m[..., 0, 1], m[..., 0, 2], m[..., 1, 2]], axis=-1) * 1e-4
    system = assemble(grid, TensorVolume(grid, vals))
    asym = np.abs((system.operator - system.operator.T)).max()
    assert asym <= 1e-15 * np.abs(system.operator).max()


def test_diagonal_dominance_for_diagonal_tensors():
    grid = VoxelGrid((8, 8, 8), (1.0,) * 3, (0.0, 0.0, 0.0))
    system = assemble(grid, homogeneous(grid))
    A = system.operator.tocsr()
    diag = A.diagonal()
    offdiag_sums = np.abs(A).sum(axis=1).A1 - np.abs(diag)
    assert np.all(diag >= offdiag_sums - 1e-15 * diag.max())


def test_floating_contact_lumps_to_one_unknown():
    grid = VoxelGrid((17, 17, 64), (0.25,) * 3, (-2.0, -2.0, -1.0))
    leads = build_twin_leads()[:1]
    cmap = voxelize_leads(grid, leads)
    setting = StimulationSetting({("lead1", 0): ContactAssignment("cathode", -1.0)})
    system = assemble(grid, homogeneous(grid), cmap, setting)
    tissue = int((cmap.labels == 0).sum()) - int(system.dirichlet_mask[cmap.labels == 0].sum())
    # three floating contacts lump to three unknowns on top of the tissue ones
    assert system.n_unknowns == tissue + 3
    for key in (("lead1", 1), ("lead1", 2), ("lead1", 3)):
        assert key in system.floating_keys


def test_no_dirichlet_surface_raises():
    grid = VoxelGrid((17, 17, 64), (0.25,) * 3, (-2.0, -2.0, -1.0))
    leads = build_twin_leads()[:1]
    cmap = voxelize_leads(grid, leads)
    with pytest.raises(AssemblyError, match="singular"):
        assemble(grid, homogeneous(grid), cmap, StimulationSetting({}),
                 boundary_potential=None)


def test_non_psd_tensor_raises():
    grid = VoxelGrid((5, 5, 5), (1.0,) * 3, (0.0, 0.0, 0.0))
    vals = np.zeros(grid.dims + (6,))
    vals[..., :3] = 1e-4
    vals[2, 2, 2, 0] = -1e-4
    with pytest.raises(AssemblyError, match="PSD"):
        assemble(grid, TensorVolume(grid, vals))


def test_uniform_field_box():
    grid = VoxelGrid((21, 21, 21), (1.0,) * 3, (-10.0, -10.0, -10.0))
    e0 = 0.15

    def boundary(points):
        return e0 * np.atleast_2d(points)[:, 0]

    system = assemble(grid, homogeneous(grid), boundary_potential=boundary)
    solution = solve(system, SolverConfig(relative_tolerance=1e-12, max_iterations=5000))
    exact = e0 * grid.axis_centers(0)[:, None, None]
    err = np.abs(solution.potential.values - exact).max()
    assert err < 1e-8 * abs(e0) * 10.0


def test_monopole_sphere_shell_accuracy():
    _, _, solution = solve_monopole_sphere(box_mm=50.0, spacing=1.25)
    err, _ = shell_l2_error(solution, sphere_potential(3.0, 0.5), 3.0, 15.0)
    assert err < 0.05


def test_grid_refinement_error_decreases_monotonically():
    errors = []
    for spacing in (2.0, 1.0, 0.5):
        _, _, solution = solve_monopole_sphere(box_mm=36.0, spacing=spacing,
                                               dirichlet_radius=3.0)
        err, _ = shell_l2_error(solution, sphere_potential(3.0, 0.5), 4.5, 14.0)
        errors.append(err)
    assert errors[0] > errors[1] > errors[2]


def test_floating_sphere_takes_center_potential():
    result = solve_floating_sphere()
    assert result["potential_error"] < 0.02
    assert result["net_current"] <= 1e-6 * result["gross_current"]


def test_floating_net_current_requires_floating_contact():
    grid = centered_grid(12.0, 0.5)
    cmap = floating_sphere_map(grid, (0.0, 0.0, 0.0), 2.0)
    setting = StimulationSetting({("sphere", 0): ContactAssignment("cathode", -1.0)})
    system = assemble(grid, homogeneous(grid), cmap, setting)
    solution = solve(system)
    with pytest.raises(ValueError, match="not floating"):
        floating_net_current(solution, system, ("sphere", 0))
    # the driven contact's current is available through the general call
    assert abs(contact_net_current(solution, system, ("sphere", 0))) > 0.0


def test_scaling_linearity_of_solve():
    grid = centered_grid(12.0, 0.5)
    cmap = floating_sphere_map(grid, (0.0, 0.0, 0.0), 2.0)
    lam = 3.7
    cfg = SolverConfig(relative_tolerance=1e-12, max_iterations=20000)
    sols = []
    for v in (-1.0, -lam):
        setting = StimulationSetting({("sphere", 0): ContactAssignment("cathode", v)})
        system = assemble(grid, homogeneous(grid), cmap, setting)
        sols.append(solve(system, cfg))
    diff = np.abs(lam * sols[0].potential.values - sols[1].potential.values)
    assert diff.max() <= 1e-10 * np.abs(sols[1].potential.values).max()


def test_mirror_symmetry_of_solution():
    spacing = 0.5
    leads = build_twin_leads()
    grid = twin_lead_grid(leads, 6.0, spacing)
    # grid symmetric in x about 0 by construction of the twin leads
    cmap = voxelize_leads(grid, leads)
    setting = StimulationSetting({("lead1", 0): ContactAssignment("cathode", -3.0)})
    sol1 = solve(assemble(grid, homogeneous(grid), cmap, setting),
                 SolverConfig(relative_tolerance=1e-10))
    setting2 = StimulationSetting({("lead2", 0): ContactAssignment("cathode", -3.0)})
    sol2 = solve(assemble(grid, homogeneous(grid), cmap, setting2),
                 SolverConfig(relative_tolerance=1e-10))
    u1 = sol1.potential.values
    u2 = sol2.potential.values[::-1, :, :]
    assert np.abs(u1 - u2).max() <= 1e-8 * np.abs(u1).max()


def test_discrete_maximum_principle():
    grid = centered_grid(10.0, 1.0)
    rng = np.random.default_rng(12)
    sigma = ScalarVolume(grid, rng.uniform(1e-4, 4e-4, size=grid.dims))

    def boundary(points):
        p = np.atleast_2d(points)
        return 0.1 * p[:, 0] - 0.05 * p[:, 1] + 0.02 * p[:, 2] ** 2

    system = assemble(grid, sigma, boundary_potential=boundary)
    solution = solve(system, SolverConfig(relative_tolerance=1e-12))
    u = solution.potential.values
    interior = ~system.dirichlet_mask
    eps = 1e-10 * np.abs(u).max()
    assert u[interior].max() <= u[system.dirichlet_mask].max() + eps
    assert u[interior].min() >= u[system.dirichlet_mask].min() - eps


def test_superpose_identity_and_cancellation():
    result = solve_floating_sphere(box_mm=16.0, spacing=0.8, radius=2.0)
    sol = result["solution"]
    same = superpose_solutions([sol, sol], [1.0, 0.0])
    assert np.array_equal(same.potential.values, sol.potential.values)
    assert same.iterations is None and same.residual_norm is None
    zero = superpose_solutions([sol, sol], [1.0, -1.0])
    assert np.all(zero.potential.values == 0.0)


def test_superpose_grid_mismatch_raises():
    r1 = solve_floating_sphere(box_mm=16.0, spacing=0.8, radius=2.0)
    r2 = solve_floating_sphere(box_mm=16.0, spacing=1.0, radius=2.0)
    with pytest.raises(ValueError, match="grid"):
        superpose_solutions([r1["solution"], r2["solution"]], [1.0, 1.0])


def test_unit_solves_superpose_to_direct_dual_solve():
    diff, scale, rtol = superposition_deviation(spacing=1.0, padding_mm=6.0)
    assert diff <= 10.0 * rtol * scale


def test_every_floating_contact_net_current_small():
    spacing = 0.5
    leads = build_twin_leads()
    grid = twin_lead_grid(leads, 8.0, spacing)
    cmap = voxelize_leads(grid, leads)
    setting = StimulationSetting({("lead1", 0): ContactAssignment("cathode", -3.0)})
    system = assemble(grid, homogeneous(grid), cmap, setting)
    solution = solve(system, SolverConfig(relative_tolerance=1e-10))
    driven = total_driven_current(solution, system)
    assert driven > 0
    assert len(system.floating_keys) == 7
    for key in system.floating_keys:
        assert abs(floating_net_current(solution, system, key)) <= 1e-6 * driven
    # lead2 is fully floating yet sees induced non-zero potentials
    for cid in range(4):
        assert abs(solution.conductor_potentials[("lead2", cid)]) > 1e-3


def test_convergence_error_carries_diagnostics():
    grid = centered_grid(20.0, 1.0)
    cmap = floating_sphere_map(grid, (0.0, 0.0, 0.0), 2.0)
    setting = StimulationSetting({("sphere", 0): ContactAssignment("cathode", -1.0)})
    system = assemble(grid, homogeneous(grid), cmap, setting)
    with pytest.raises(ConvergenceError) as err:
        solve(system, SolverConfig(relative_tolerance=1e-12, max_iterations=3))
    assert err.value.iterations == 3
    assert err.value.relative_residual > 0


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(relative_tolerance=0.0)
    with pytest.raises(ValueError):
        SolverConfig(max_iterations=0)
    with pytest.raises(ValueError):
        SolverConfig(preconditioner="ilu")


def test_insulator_voxels_excluded_and_filled():
    grid = VoxelGrid((17, 17, 60), (0.25,) * 3, (-2.0, -2.0, -1.0))
    leads = build_twin_leads()[:1]
    cmap = voxelize_leads(grid, leads)
    setting = StimulationSetting({("lead1", 0): ContactAssignment("cathode", -2.0)})
    system = assemble(grid, homogeneous(grid), cmap, setting)
    solution = solve(system, SolverConfig(relative_tolerance=1e-10))
    assert np.all(np.isfinite(solution.potential.values))
    # Dirichlet exactness on the driven contact voxels
    mask = cmap.conductor_mask("lead1", 0)
    assert np.all(solution.potential.values[mask] == -2.0)
    # floating voxels all carry their conductor's single potential
    for cid in (1, 2, 3):
        fmask = cmap.conductor_mask("lead1", cid)
        vals = solution.potential.values[fmask]
        assert np.all(vals == vals[0])
        assert vals[0] == solution.conductor_potentials[("lead1", cid)]
