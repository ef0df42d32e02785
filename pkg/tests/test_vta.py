"""VTA masks, dual-lead approximations, and reports."""

import numpy as np
import pytest

from stimfield.activation import ActivationField, EvaluationGrid
from stimfield.vta import (
    TargetSpec,
    combined_af_vta,
    combined_ef_vta,
    compare_to_dual,
    coverage,
    coverage_report,
    superpose_vtas,
    target_from_mask_volume,
    threshold_vta,
    write_comparison_csv,
    write_coverage_csv,
    VtaMask,
)
from stimfield.volume import MaskVolume, VoxelGrid

EVAL = EvaluationGrid((0.0, 0.0, 0.0), 4.0, 0.5)
N = EVAL.n_nodes
S = 11
OFFSETS = np.linspace(-0.5, 0.5, S)


def synth_field(rng=None, ef=None, af_tan=None, dirs=None):
    rng = rng or np.random.default_rng(0)
    if ef is None:
        ef = rng.normal(size=(N, 3))
    if af_tan is None:
        af_tan = rng.normal(size=(N, S))
    if dirs is None:
        dirs = np.tile([1.0, 0.0, 0.0], (N, 1))
    return ActivationField(
        eval_grid=EVAL,
        ef=ef,
        ef_norm=np.linalg.norm(ef, axis=1),
        axon_dirs=dirs,
        axon_offsets=OFFSETS,
        af_tan=af_tan,
        af_max=np.max(np.abs(af_tan), axis=1),
        hessians=np.zeros((N, S, 6)),
        step_mm=(0.5, 0.5, 0.5),
    )


def test_threshold_empty_and_full():
    field = synth_field()
    hi = field.ef_norm.max() * 2.0
    assert threshold_vta(field, "EF", hi).count == 0
    lo = field.ef_norm.min()
    if lo <= 0:
        lo = np.partition(field.ef_norm, 1)[1]
    full = threshold_vta(field, "EF", lo)
    # inclusive >=: the smallest node value activates its node
    assert full.active[np.argmin(np.abs(field.ef_norm - lo))]


def test_threshold_inclusive_boundary():
    field = synth_field()
    t = float(np.median(field.ef_norm))
    mask = threshold_vta(field, "EF", t)
    assert np.array_equal(mask.active, field.ef_norm >= t)


def test_analytic_sphere_vta_radius():
    # u = v0 a / r: EF-norm = v0 a / r^2; VTA radius sqrt(v0 a / th)
    v0, a, th = 3.0, 0.5, 0.2
    pts = EvaluationGrid((0, 0, 0), 20.0, 0.4).node_coords()
    r = np.maximum(np.linalg.norm(pts, axis=1), 1e-9)
    ef_norm = v0 * a / r**2
    n = pts.shape[0]
    field = ActivationField(
        eval_grid=EvaluationGrid((0, 0, 0), 20.0, 0.4),
        ef=np.zeros((n, 3)),
        ef_norm=ef_norm,
        axon_dirs=np.tile([1.0, 0, 0], (n, 1)),
        axon_offsets=OFFSETS,
        af_tan=np.zeros((n, S)),
        af_max=np.zeros(n),
        hessians=np.zeros((n, S, 6)),
        step_mm=(0.4, 0.4, 0.4),
    )
    mask = threshold_vta(field, "EF", th)
    r_star = np.sqrt(v0 * a / th)
    active_r = r[mask.active]
    inactive_r = r[~mask.active]
    assert active_r.max() <= r_star + 1e-9
    assert inactive_r.min() >= r_star - 1e-9
    # equivalent-volume radius lands within one node spacing of the formula
    r_eq = (3.0 * mask.count * 0.4**3 / (4.0 * np.pi)) ** (1.0 / 3.0)
    assert abs(r_eq - r_star) <= 0.4


def test_superpose_identity_and_idempotence():
    f = synth_field()
    m1 = threshold_vta(f, "EF", 1.0, "m1")
    empty = VtaMask(EVAL, np.zeros(N, dtype=bool), "m2", "EF", 1.0)
    assert np.array_equal(superpose_vtas(m1, empty).active, m1.active)
    assert np.array_equal(superpose_vtas(m1, m1).active, m1.active)


def test_superposition_equals_max_threshold_identity():
    rng = np.random.default_rng(5)
    f1, f2 = synth_field(rng), synth_field(rng)
    th = 1.2
    union = superpose_vtas(threshold_vta(f1, "EF", th), threshold_vta(f2, "EF", th))
    max_mask = np.maximum(f1.ef_norm, f2.ef_norm) >= th
    assert np.array_equal(union.active, max_mask)
    union_af = superpose_vtas(threshold_vta(f1, "AF", th), threshold_vta(f2, "AF", th))
    assert np.array_equal(union_af.active, np.maximum(f1.af_max, f2.af_max) >= th)


def test_scaling_duality():
    f = synth_field()
    lam = 2.5
    scaled = synth_field(ef=lam * f.ef, af_tan=lam * f.af_tan)
    th = 1.4
    assert np.array_equal(threshold_vta(scaled, "EF", th).active,
                          threshold_vta(f, "EF", th / lam).active)
    assert np.array_equal(threshold_vta(scaled, "AF", th).active,
                          threshold_vta(f, "AF", th / lam).active)


def test_threshold_monotonicity():
    f = synth_field()
    m_hi = threshold_vta(f, "EF", 2.0)
    m_lo = threshold_vta(f, "EF", 1.0)
    assert np.all(m_lo.active[m_hi.active])


def test_combined_ef_zero_identity_and_half_threshold():
    rng = np.random.default_rng(9)
    f1 = synth_field(rng)
    zero = synth_field(ef=np.zeros((N, 3)), af_tan=np.zeros((N, S)))
    th = 1.0
    assert np.array_equal(combined_ef_vta(f1, zero, th).active,
                          threshold_vta(f1, "EF", th).active)
    assert np.array_equal(combined_ef_vta(f1, f1, th).active,
                          threshold_vta(f1, "EF", th / 2.0).active)


def test_combined_ef_cancellation_and_symmetry():
    rng = np.random.default_rng(11)
    f1 = synth_field(rng)
    anti = synth_field(ef=-f1.ef, af_tan=-f1.af_tan)
    assert combined_ef_vta(f1, anti, 0.5).count == 0
    f2 = synth_field(rng)
    m12 = combined_ef_vta(f1, f2, 0.8)
    m21 = combined_ef_vta(f2, f1, 0.8)
    assert np.array_equal(m12.active, m21.active)


def test_combined_af_cases():
    rng = np.random.default_rng(13)
    f1 = synth_field(rng)
    zero = synth_field(ef=np.zeros((N, 3)), af_tan=np.zeros((N, S)))
    th = 0.9
    assert np.array_equal(combined_af_vta(f1, zero, th).active,
                          threshold_vta(f1, "AF", th).active)
    anti = synth_field(ef=-f1.ef, af_tan=-f1.af_tan)
    assert combined_af_vta(f1, anti, th).count == 0
    f2 = synth_field(rng)
    assert np.array_equal(combined_af_vta(f1, f2, th).active,
                          combined_af_vta(f2, f1, th).active)


def test_combined_af_quadratic_independence():
    # u1 = x^2, u2 = y^2, axon along x: the second field contributes nothing
    dirs = np.tile([1.0, 0.0, 0.0], (N, 1))
    h1 = np.zeros((N, S, 6))
    h1[..., 0] = 2.0
    f1 = synth_field(af_tan=np.full((N, S), -2.0), dirs=dirs)
    h2 = np.zeros((N, S, 6))
    h2[..., 1] = 2.0
    f2 = synth_field(af_tan=np.zeros((N, S)), dirs=dirs)
    mask = combined_af_vta(f1, f2, 1.0)
    assert mask.count == N  # |sum| = 2 >= 1 everywhere


def test_combined_af_requires_shared_axons():
    f1 = synth_field()
    other_dirs = np.tile([0.0, 1.0, 0.0], (N, 1))
    f2 = synth_field(dirs=other_dirs)
    with pytest.raises(ValueError, match="orientation"):
        combined_af_vta(f1, f2, 1.0)


def test_compare_to_dual_examples():
    active = np.zeros(N, dtype=bool)
    active[:10] = True  # dual = {0..9}
    dual = VtaMask(EVAL, active, "dual", "EF", 1.0)

    same = compare_to_dual(dual, [dual])
    assert same.rows[0].exclusive == 0
    assert same.rows[0].missed == 0
    assert same.rows[0].total_pct_of_dual == 100.0

    empty = VtaMask(EVAL, np.zeros(N, dtype=bool), "empty", "EF", 1.0)
    r = compare_to_dual(dual, [empty]).rows[0]
    assert r.missed == 10 and r.exclusive == 0 and r.total == 0

    method = np.zeros(N, dtype=bool)
    method[1:11] = True  # drops node 0, adds node 10
    r = compare_to_dual(dual, [VtaMask(EVAL, method, "m", "EF", 1.0)]).rows[0]
    assert r.total == 10 and r.exclusive == 1 and r.missed == 1
    # total = |dual & method| + exclusive
    assert r.total == 9 + r.exclusive


def test_compare_empty_dual_flags_normalization():
    empty = VtaMask(EVAL, np.zeros(N, dtype=bool), "dual", "EF", 1.0)
    m = VtaMask(EVAL, np.ones(N, dtype=bool), "m", "EF", 1.0)
    rep = compare_to_dual(empty, [m])
    assert not rep.normalization_valid
    assert rep.rows[0].total == N
    assert rep.rows[0].total_pct_of_dual is None


def test_coverage_examples():
    target = np.zeros(N, dtype=bool)
    target[: N // 4] = True
    tspec = TargetSpec(EVAL, target)

    full = VtaMask(EVAL, np.ones(N, dtype=bool), "full", "EF", 1.0)
    row = coverage(full, tspec, full)
    assert row.target_pct == 100.0 and row.nontarget_pct == 100.0

    exact = VtaMask(EVAL, target.copy(), "exact", "EF", 1.0)
    row = coverage(exact, tspec, full)
    assert row.target_pct == 100.0 and row.nontarget_pct == 0.0

    rng = np.random.default_rng(3)
    dual_mask = np.zeros(N, dtype=bool)
    t_idx = np.flatnonzero(target)
    dual_mask[t_idx[: int(0.4 * t_idx.size)]] = True
    meth_mask = np.zeros(N, dtype=bool)
    meth_mask[t_idx[: int(0.3 * t_idx.size)]] = True
    dual = VtaMask(EVAL, dual_mask, "dual", "EF", 1.0)
    meth = VtaMask(EVAL, meth_mask, "m", "EF", 1.0)
    row = coverage(meth, tspec, dual)
    assert row.target_pct_of_dual == pytest.approx(
        100.0 * meth_mask.sum() / dual_mask.sum())


def test_coverage_empty_target_raises():
    tspec_empty = np.zeros(N, dtype=bool)
    m = VtaMask(EVAL, np.ones(N, dtype=bool), "m", "EF", 1.0)
    with pytest.raises(ValueError, match="target"):
        coverage(m, TargetSpec(EVAL, tspec_empty), m)


def test_target_resampling_nearest_neighbor():
    grid = VoxelGrid((5, 5, 5), (1.0, 1.0, 1.0), (-2.0, -2.0, -2.0))
    vals = np.zeros(grid.dims, dtype=bool)
    vals[2, 2, 2] = True  # 1 mm cube centered at origin
    tspec = target_from_mask_volume(MaskVolume(grid, vals), EVAL)
    pts = EVAL.node_coords()
    inside = np.all(np.abs(pts) <= 0.5, axis=1)
    assert np.array_equal(tspec.target, inside)


def test_csv_reports_deterministic(tmp_path):
    f = synth_field()
    dual = threshold_vta(f, "EF", 1.0, "dual_EF")
    v = threshold_vta(f, "EF", 1.5, "V_EF")
    rep = compare_to_dual(dual, [dual, v])
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_comparison_csv(p1, rep)
    write_comparison_csv(p2, rep)
    assert p1.read_bytes() == p2.read_bytes()
    header = p1.read_text().splitlines()[0]
    assert header == "method,total,exclusive,missed,total_pct_of_dual"

    target = np.zeros(N, dtype=bool)
    target[:50] = True
    cov = coverage_report([dual, v], TargetSpec(EVAL, target), dual)
    write_coverage_csv(tmp_path / "c.csv", cov)
    header = (tmp_path / "c.csv").read_text().splitlines()[0]
    assert header == ("method,target_pct,nontarget_pct,"
                      "target_pct_of_dual,nontarget_pct_of_dual")


def test_mask_volume_round_trip():
    f = synth_field()
    mask = threshold_vta(f, "EF", 1.0, "dual_EF")
    vol = mask.as_volume()
    assert vol.count == mask.count
    back = vol.values
    assert back.shape == (EVAL.n_per_axis,) * 3
