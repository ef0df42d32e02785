"""Agreement between the compiled kernels and the numpy fallback."""

import numpy as np
import pytest

from stimfield import kernels
from stimfield.errors import OutOfDomainError

BACKENDS = kernels.available_backends()


@pytest.fixture
def volume():
    rng = np.random.default_rng(123)
    vals = np.ascontiguousarray(rng.normal(size=(15, 13, 17)))
    origin = np.array([-2.0, 1.0, -3.0])
    spacing = np.array([0.5, 0.7, 0.4])
    lo = origin
    hi = origin + (np.array(vals.shape) - 1) * spacing
    pts = np.ascontiguousarray(rng.uniform(lo + 0.8, hi - 0.8, size=(500, 3)))
    return vals, origin, spacing, pts


def test_both_backends_available_note():
    # the compiled extension is expected in the built package; the fallback
    # is always importable
    assert "python" in BACKENDS


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")
def test_trilinear_backends_agree(volume):
    vals, origin, spacing, pts = volume
    results = [impl.trilinear_many(vals, origin, spacing, pts)
               for impl in BACKENDS.values()]
    assert np.allclose(results[0], results[1], rtol=1e-14, atol=1e-14)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")
def test_gradient_backends_agree(volume):
    vals, origin, spacing, pts = volume
    step = np.array([0.5, 0.7, 0.4])
    results = [impl.gradient_many(vals, origin, spacing, pts, step)
               for impl in BACKENDS.values()]
    assert np.allclose(results[0], results[1], rtol=1e-13, atol=1e-13)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")
def test_hessian_backends_agree(volume):
    vals, origin, spacing, pts = volume
    step = np.array([0.5, 0.7, 0.4])
    results = [impl.hessian_many(vals, origin, spacing, pts, step)
               for impl in BACKENDS.values()]
    assert np.allclose(results[0], results[1], rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_out_of_domain_raises_per_backend(volume, name):
    vals, origin, spacing, _ = volume
    impl = BACKENDS[name]
    bad = np.array([[1e6, 0.0, 0.0]])
    with pytest.raises(OutOfDomainError):
        impl.trilinear_many(vals, origin, spacing, bad)
    with pytest.raises(OutOfDomainError):
        impl.gradient_many(vals, origin, spacing, bad, spacing)
    with pytest.raises(OutOfDomainError):
        impl.hessian_many(vals, origin, spacing, bad, spacing)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_hull_boundary_points_are_valid(volume, name):
    vals, origin, spacing, _ = volume
    impl = BACKENDS[name]
    hi = origin + (np.array(vals.shape) - 1) * spacing
    corners = np.array([origin, hi])
    got = impl.trilinear_many(vals, origin, spacing, corners)
    assert got[0] == pytest.approx(vals[0, 0, 0])
    assert got[1] == pytest.approx(vals[-1, -1, -1])
