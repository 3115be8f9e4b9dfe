import subprocess
import sys

import numpy as np
import pytest

from udadil import kernels


requires_numba = pytest.mark.skipif(
    "numba" not in kernels.IMPLEMENTATIONS, reason="numba not installed"
)


@requires_numba
class TestBackendAgreement:
    def test_pairwise_sqdist(self, rng):
        X, Y = rng.normal(size=(40, 7)), rng.normal(size=(33, 7))
        out_np = kernels.IMPLEMENTATIONS["numpy"]["pairwise_sqdist"](X, Y)
        out_nb = kernels.IMPLEMENTATIONS["numba"]["pairwise_sqdist"](X, Y)
        np.testing.assert_allclose(out_np, out_nb, rtol=1e-12, atol=1e-12)

    def test_sinkhorn_scaling(self, rng):
        C = rng.random((12, 9))
        K = np.exp(-C / 0.3)
        a = np.full(12, 1 / 12)
        b = np.full(9, 1 / 9)
        u1, v1, e1, i1, ok1 = kernels.IMPLEMENTATIONS["numpy"]["sinkhorn_scaling"](
            K, a, b, 1e-9, 2000, 10
        )
        u2, v2, e2, i2, ok2 = kernels.IMPLEMENTATIONS["numba"]["sinkhorn_scaling"](
            K, a, b, 1e-9, 2000, 10
        )
        assert ok1 and ok2 and i1 == i2
        P1 = u1[:, None] * K * v1[None, :]
        P2 = u2[:, None] * K * v2[None, :]
        np.testing.assert_allclose(P1, P2, atol=1e-12)

    def test_sinkhorn_log(self, rng):
        C = rng.random((10, 10))
        loga = np.log(np.full(10, 0.1))
        f1, g1, e1, i1 = kernels.IMPLEMENTATIONS["numpy"]["sinkhorn_log"](
            C, loga, loga, 0.05, 1e-8, 5000, 10
        )
        f2, g2, e2, i2 = kernels.IMPLEMENTATIONS["numba"]["sinkhorn_log"](
            C, loga, loga, 0.05, 1e-8, 5000, 10
        )
        assert i1 == i2
        P1 = np.exp((f1[:, None] + g1[None, :] - C) / 0.05)
        P2 = np.exp((f2[:, None] + g2[None, :] - C) / 0.05)
        np.testing.assert_allclose(P1, P2, atol=1e-10)

    def test_assign_nearest(self, rng):
        X = rng.normal(size=(50, 4))
        c = rng.normal(size=(6, 4))
        l1, d1 = kernels.IMPLEMENTATIONS["numpy"]["assign_nearest"](X, c)
        l2, d2 = kernels.IMPLEMENTATIONS["numba"]["assign_nearest"](X, c)
        np.testing.assert_array_equal(l1, l2)
        np.testing.assert_allclose(d1, d2, atol=1e-12)


class TestBackendSelection:
    def test_active_backend_reports_selection(self):
        assert kernels.active_backend() in ("numba", "numpy")

    def test_set_backend_round_trip(self):
        original = kernels.active_backend()
        try:
            assert kernels.set_backend("numpy") == "numpy"
            out = kernels.pairwise_sqdist(np.zeros((2, 2)), np.ones((3, 2)))
            assert out.shape == (2, 3)
        finally:
            kernels.set_backend(original)

    def test_invalid_backend_rejected(self):
        with pytest.raises(ValueError, match="UDADIL_BACKEND"):
            kernels.set_backend("fortran")

    def test_env_flag_selects_numpy(self):
        code = (
            "import udadil.kernels as k; print(k.active_backend())"
        )
        out = subprocess.run(
            [sys.executable, "-c", code],
            capture_output=True,
            text=True,
            env={"PATH": "/usr/bin:/bin", "UDADIL_BACKEND": "numpy"},
        )
        assert out.stdout.strip() == "numpy"


def test_benchmark_script_smoke():
    from pathlib import Path

    script = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    out = subprocess.run(
        [sys.executable, str(script), "--sizes", "40", "--repeats", "2"],
        capture_output=True,
        text=True,
    )
    assert out.returncode == 0, out.stderr
    assert "pairwise_sqdist" in out.stdout
