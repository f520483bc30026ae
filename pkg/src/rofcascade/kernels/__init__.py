"""Hot-loop kernels with a compiled core and a numpy fallback.

``cascade_stages(x, beta, gain, lam, n_stages, literal=False)`` runs a batch
of time-domain frames ``x`` (shape ``(B, N)``) through ``n_stages`` repeats of

    u_n = sum_l beta_l x_{(n - l) mod N}
    y_n = gain * (u_n + lam * v_n * |v_n|**2)

where ``v = u`` normally and ``v = u - beta_0 x`` with ``literal=True``. It
returns every stage output, shape ``(n_stages, B, N)``.

The compiled extension is used when importable; set ``ROFCASCADE_PURE=1``
to force the fallback.
"""

import os

from . import _pure

try:
    if os.environ.get("ROFCASCADE_PURE", "") not in ("", "0"):
        raise ImportError("pure backend forced by ROFCASCADE_PURE")
    from . import _ckernels as _impl

    BACKEND = "compiled"
except ImportError:
    _impl = _pure
    BACKEND = "pure"

cascade_stages = _impl.cascade_stages

__all__ = ["BACKEND", "cascade_stages"]
