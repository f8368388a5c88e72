import os
import subprocess
import sys

import numpy as np
import pytest

from fedperl import _backend, kernels_numpy

numba_kernels = pytest.importorskip("fedperl.kernels_numba") if _backend.HAVE_NUMBA else None


@pytest.mark.skipif(not _backend.HAVE_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("arch", [(4, 3), (5, 7, 2), (6, 4, 4, 8)])
@pytest.mark.parametrize("kind", [0, 1])
def test_backends_agree(arch, kind):
    rng = np.random.default_rng(sum(arch))
    a = np.asarray(arch, dtype=np.int64)
    n_par = sum(i * o + o for i, o in zip(arch[:-1], arch[1:]))
    flat = rng.normal(size=n_par)
    X = rng.normal(size=(11, arch[0]))
    T = rng.dirichlet(np.ones(arch[-1]), size=11)
    w = rng.uniform(0, 1, size=11)
    np.testing.assert_allclose(numba_kernels.probs(flat, a, X), kernels_numpy.probs(flat, a, X), atol=1e-12)
    l1, g1 = numba_kernels.loss_grad(flat, a, X, T, w, kind)
    l2, g2 = kernels_numpy.loss_grad(flat, a, X, T, w, kind)
    assert l1 == pytest.approx(l2, rel=1e-12)
    np.testing.assert_allclose(g1, g2, atol=1e-12)


def test_env_flag_selects_numpy():
    env = dict(os.environ, FEDPERL_NUMBA="0")
    out = subprocess.run(
        [sys.executable, "-c", "import fedperl._backend as b; print(b.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"
