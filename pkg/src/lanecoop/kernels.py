"""Back-end selection for the hot loops.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
pure-Python ``_pykernels`` module. Set ``LANECOOP_PURE_PYTHON=1`` to force the
fallback.
"""

import os

from lanecoop import _pykernels

if os.environ.get("LANECOOP_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from lanecoop import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

rolling_median = _impl.rolling_median
mpc_cost = _impl.mpc_cost
mpc_gradient = _impl.mpc_gradient
potential = _impl.potential
rollout = _impl.rollout

P_LEN = _pykernels.P_LEN
