import importlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from irsnoma import _kernels_py, kernels

compiled = pytest.importorskip("irsnoma._kernels")


def test_backend_selected():
    assert kernels.BACKEND == "compiled"


def test_pure_python_override(monkeypatch):
    monkeypatch.setenv("IRSNOMA_PURE_PYTHON", "1")
    try:
        assert importlib.reload(kernels).BACKEND == "python"
    finally:
        monkeypatch.delenv("IRSNOMA_PURE_PYTHON")
        importlib.reload(kernels)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), k=st.integers(1, 8), b=st.integers(1, 20))
def test_balanced_batch_agrees(seed, k, b):
    rng = np.random.default_rng(seed)
    s = np.sort(10 ** rng.uniform(-3, 3, (b, k)), axis=1)
    snr = 10 ** rng.uniform(0, 6)
    q1, a1 = compiled.balanced_sinr_batch(s, snr)
    q2, a2 = _kernels_py.balanced_sinr_batch(s, snr)
    assert np.allclose(q1, q2, rtol=1e-12)
    assert np.allclose(a1, a2, rtol=1e-10, atol=1e-15)


@pytest.mark.parametrize("enforce", [False, True])
@pytest.mark.parametrize("shape", [(2, 1), (2, 3), (3, 2)])
def test_grid_search_agrees(shape, enforce, rng):
    k, m = shape
    J = rng.standard_normal((k, m)) + 1j * rng.standard_normal((k, m))
    v = rng.standard_normal(k) + 1j * rng.standard_normal(k)
    q1, i1 = compiled.siso_grid_search(J, v, 3.0, 8, enforce)
    q2, i2 = _kernels_py.siso_grid_search(J, v, 3.0, 8, enforce)
    if i2 < 0:
        assert i1 < 0
    else:
        assert q1 == pytest.approx(q2, rel=1e-10)


def test_grid_search_index_decodes_to_optimum(rng):
    J = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    v = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    q, idx = compiled.siso_grid_search(J, v, 2.0, 16, False)
    digits = [idx // 16, idx % 16]
    w = np.exp(2j * np.pi * np.array(digits) / 16)
    s = np.abs(J @ w + v) ** 2
    s = _kernels_py.suffix_min(s)
    q_check, _ = _kernels_py.balanced_sinr_batch(s[None], 2.0)
    assert q_check[0] == pytest.approx(q, rel=1e-12)
