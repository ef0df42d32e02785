"""Backend selection for the sampling kernels.

Prefers the compiled extension (``stimfield._kernels``) and falls back to the
numpy implementation when the extension is absent or when the environment
variable ``STIMFIELD_PURE_PYTHON`` is set to a non-empty value.  Both backends
implement the same contracts; ``tests/test_kernels.py`` pins their agreement.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("STIMFIELD_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

trilinear_many = _impl.trilinear_many
gradient_many = _impl.gradient_many
hessian_many = _impl.hessian_many


def backend_name() -> str:
    """Name of the active kernel backend ('cython' or 'python')."""
    return _impl.BACKEND_NAME


def available_backends() -> dict:
    """All importable backends, keyed by name (used by tests/benchmarks)."""
    backends = {_kernels_py.BACKEND_NAME: _kernels_py}
    try:
        from . import _kernels

        backends[_kernels.BACKEND_NAME] = _kernels
    except ImportError:
        pass
    return backends
