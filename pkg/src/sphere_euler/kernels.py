"""Backend selection for the hot loops.

The Cython extension is used when it is importable; otherwise the numpy
versions are used. Set SPHERE_EULER_PURE=1 to force the numpy path.
"""
import os

from . import _kernels_py
from ._kernels_py import smoothstep  # noqa: F401  (shared helper)

BACKEND = "numpy"
_impl = _kernels_py
if os.environ.get("SPHERE_EULER_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py


def direct_velocity(tx, sx, swo, delta, width):
    import numpy as np
    return _impl.direct_velocity(np.ascontiguousarray(tx, dtype=float),
                                 np.ascontiguousarray(sx, dtype=float),
                                 np.ascontiguousarray(swo, dtype=float),
                                 float(delta), float(width))


def sample_padded(P, u, v, cubic=True, clip=True):
    import numpy as np
    return _impl.sample_padded(np.ascontiguousarray(P, dtype=float),
                               np.ascontiguousarray(u, dtype=float),
                               np.ascontiguousarray(v, dtype=float),
                               int(bool(cubic)), int(bool(clip)))
