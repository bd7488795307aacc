"""Hot kernels with a compiled backend and a numpy fallback.

The Cython extension is used when it was built and importable; setting the
environment variable ``SWINGCVX_PURE_PYTHON=1`` forces the numpy versions.
``BACKEND`` names the active implementation.
"""

import os

from . import _pykernels as py

if os.environ.get("SWINGCVX_PURE_PYTHON") == "1":
    _impl = py
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = py
        BACKEND = "python"

transition_matrix = _impl.transition_matrix
bellman = _impl.bellman
choose_controls = _impl.choose_controls
euler_affine_paths = _impl.euler_affine_paths


def compiled():
    """Return the compiled module, or None when it is unavailable."""
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels
