"""Hot-loop kernel selection.

The compiled Cython module is used when it has been built; otherwise the
numpy fallback is imported. Setting ``MMDDPG_PURE_PYTHON=1`` forces the
fallback, which the test-suite uses to check both paths agree.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("MMDDPG_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None
    else:
        _impl = _compiled
        BACKEND = "cython"
else:
    _compiled = None


def compiled_module():
    """The compiled kernel module, or ``None`` when unavailable."""
    if _compiled is not None:
        return _compiled
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


point_mass_step = _impl.point_mass_step
two_link_step = _impl.two_link_step
two_link_fk = _impl.two_link_fk
two_link_mass_matrix = _impl.two_link_mass_matrix
adam_update = _impl.adam_update
lerp_inplace = _impl.lerp_inplace
