import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rofcascade import kernels
from rofcascade.kernels import _pure

try:
    from rofcascade.kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")


def inputs(seed, B, N, L):
    rng = np.random.default_rng(seed)
    x = 0.5 * (rng.standard_normal((B, N)) + 1j * rng.standard_normal((B, N)))
    beta = 0.4 * (rng.standard_normal(L) + 1j * rng.standard_normal(L))
    return x, beta


@needs_ext
@given(seed=st.integers(0, 2 ** 32 - 1), B=st.integers(1, 6),
       N=st.sampled_from([8, 16, 30, 64, 128]), L=st.integers(1, 64),
       stages=st.integers(1, 5), literal=st.booleans())
def test_compiled_matches_pure(seed, B, N, L, stages, literal):
    L = min(L, N)
    x, beta = inputs(seed, B, N, L)
    lam = -0.2 + 0.05j
    a = _pure.cascade_stages(x, beta, 1.3, lam, stages, literal)
    b = _ckernels.cascade_stages(x, beta, 1.3, lam, stages, literal)
    assert a.shape == b.shape == (stages, B, N)
    scale = max(1.0, np.max(np.abs(a)))
    assert np.max(np.abs(a - b)) < 1e-12 * scale


def test_pure_matches_direct_loop():
    x, beta = inputs(1, 2, 16, 5)
    out = _pure.cascade_stages(x, beta, 1.1, 0.1j, 1, False)[0]
    for b in range(2):
        u = np.array([sum(beta[l] * x[b, (n - l) % 16] for l in range(5)) for n in range(16)])
        assert np.allclose(out[b], 1.1 * (u + 0.1j * u * np.abs(u) ** 2), atol=1e-13)


def test_backend_is_reported():
    assert kernels.BACKEND in ("compiled", "pure")
    if _ckernels is not None and not os.environ.get("ROFCASCADE_PURE"):
        assert kernels.BACKEND == "compiled"


def test_env_forces_pure_backend():
    env = dict(os.environ, ROFCASCADE_PURE="1")
    out = subprocess.run([sys.executable, "-c", "from rofcascade import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "pure"
