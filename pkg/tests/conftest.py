import numpy as np
import pytest

from mf2summ import tensor as tk
from mf2summ.features import gen_synthetic_fixture, load_manifest
from mf2summ.model import ModelConfig
from mf2summ.tensor import GradTape, Tensor2, backward, grad_of, sum_all, mul


def finite_diff_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar f at x, entrywise."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def check_primitive_grad(op, shapes, rng, rel_tol=1e-4, weight_scale=1.0, transform=None):
    """Gradient-check `op(*tensors)` against central differences.

    The output is reduced to a scalar with a fixed random weighting so the
    full Jacobian is exercised. `transform` maps raw uniforms to a valid
    input domain per argument.
    """
    raws = [rng.uniform(-2.0, 2.0, size=s) for s in shapes]
    if transform:
        raws = [t(r) if t else r for t, r in zip(transform, raws)]
    xs = [tk.tensor(r) for r in raws]
    with GradTape() as tape:
        out = op(*xs)
        w = tk.tensor(rng.uniform(-weight_scale, weight_scale, size=out.shape))
        loss = sum_all(mul(out, w))
        grads = backward(tape, loss)

    for k, raw in enumerate(raws):
        def scalar(x, k=k):
            args = [tk.tensor(x if i == k else raws[i]) for i in range(len(raws))]
            o = op(*args)
            return float((o.data * w.data).sum())

        got = grad_of(grads, xs[k])
        want = finite_diff_grad(scalar, raw)
        denom = max(np.abs(want).max(), np.abs(got).max(), 1e-8)
        rel = np.abs(got - want).max() / denom
        assert rel < rel_tol, f"gradient mismatch for arg {k}: rel err {rel:.2e}"


@pytest.fixture(scope="session")
def fixture_dataset(tmp_path_factory):
    """3-video synthetic dataset, T=48, shared across tests."""
    out = tmp_path_factory.mktemp("fixture")
    manifest = gen_synthetic_fixture(3, 48, 32, 16, seed=7, out_dir=out)
    return load_manifest(manifest)


@pytest.fixture(scope="session")
def small_config():
    return ModelConfig(d_v=32, d_a=16, d_model=16, n_heads=2, head_hidden=16)


@pytest.fixture(scope="session")
def toy_config():
    """4-frame-scale config for end-to-end gradient checks."""
    return ModelConfig(d_v=5, d_a=3, d_model=8, n_heads=2, head_hidden=4)
