import math

import numpy as np
import pytest

from ctqwalk import linalg, tensor as T
from ctqwalk.errors import ContractViolation, NumericError
from ctqwalk.linalg import ComplexMatrix, cexpm_minus_iHt, cmatmul, symmetric_eig
from ctqwalk.tensor import Tensor, backward

from conftest import assert_grads_close, numeric_grad

RNG = np.random.default_rng(77)


def random_symmetric(n, scale=1.0, rng=RNG):
    a = rng.normal(size=(n, n)) * scale
    return (a + a.T) / 2.0


def random_laplacian(n, rng=RNG):
    """Weighted graph Laplacian with weights in (0, 1)."""
    w = rng.uniform(0.05, 1.0, size=(n, n))
    w = (w + w.T) / 2.0
    mask = rng.uniform(size=(n, n)) < 0.6
    mask = np.triu(mask, 1)
    a = np.where(mask | mask.T, w, 0.0)
    np.fill_diagonal(a, 0.0)
    return np.diag(a.sum(axis=1)) - a


def as_complex(re, im):
    return ComplexMatrix(Tensor(re), Tensor(im))


# ---------------------------------------------------------------------------
# complex product

def test_cmatmul_identity():
    a = as_complex(RNG.normal(size=(4, 4)), RNG.normal(size=(4, 4)))
    eye = linalg.identity(4)
    out = cmatmul(a, eye)
    np.testing.assert_allclose(out.re.data, a.re.data, atol=1e-15)
    np.testing.assert_allclose(out.im.data, a.im.data, atol=1e-15)


def test_cmatmul_i_squared_is_minus_one():
    i_eye = as_complex(np.zeros((3, 3)), np.eye(3))
    out = cmatmul(i_eye, i_eye)
    np.testing.assert_allclose(out.re.data, -np.eye(3), atol=1e-15)
    np.testing.assert_allclose(out.im.data, 0.0, atol=1e-15)


def test_cmatmul_against_triple_loop_oracle():
    n = 4
    a = as_complex(RNG.normal(size=(n, n)), RNG.normal(size=(n, n)))
    b = as_complex(RNG.normal(size=(n, n)), RNG.normal(size=(n, n)))
    out = cmatmul(a, b)
    expect = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                expect[i, j] += (a.re.data[i, k] + 1j * a.im.data[i, k]) * \
                                (b.re.data[k, j] + 1j * b.im.data[k, j])
    assert np.abs(out.re.data + 1j * out.im.data - expect).max() <= 1e-12


def test_cmatmul_shape_mismatch():
    a = as_complex(np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(ContractViolation):
        cmatmul(a, a)


def test_cmatmul_gradients():
    def build(ar, ai, br, bi):
        out = cmatmul(ComplexMatrix(ar, ai), ComplexMatrix(br, bi))
        return T.add(T.tsum(T.mul(out.re, wr)), T.tsum(T.mul(out.im, wi)))

    wr = Tensor(RNG.normal(size=(3, 3)))
    wi = Tensor(RNG.normal(size=(3, 3)))
    leaves = [Tensor(RNG.normal(size=(3, 3)), requires_grad=True) for _ in range(4)]
    backward(build(*leaves))
    for x in leaves:
        ad = x.grad

        def f():
            T.reset_tape()
            return build(*leaves).item()

        assert_grads_close(ad, numeric_grad(f, x.data))
        x.zero_grad()


# ---------------------------------------------------------------------------
# matrix exponential

def test_cexpm_zero_hamiltonian_is_identity():
    u = cexpm_minus_iHt(Tensor(np.zeros((5, 5))), 2.0)
    np.testing.assert_allclose(u.re.data, np.eye(5), atol=1e-15)
    np.testing.assert_allclose(u.im.data, 0.0, atol=1e-15)


def test_cexpm_scalar_case():
    for h, t in ((0.7, 1.3), (2.5, 0.4), (-1.2, 3.0)):
        u = cexpm_minus_iHt(Tensor([[h]]), t)
        assert u.re.data[0, 0] == pytest.approx(math.cos(h * t), abs=1e-12)
        assert u.im.data[0, 0] == pytest.approx(-math.sin(h * t), abs=1e-12)


def test_cexpm_matches_spectral_oracle_8x8():
    h = random_symmetric(8, scale=1.5)
    u = cexpm_minus_iHt(Tensor(h), 3.0)
    oracle = linalg.expm_spectral(h, 3.0)
    assert np.abs(u.to_numpy() - oracle).max() <= 1e-9


def test_cexpm_rejects_asymmetric():
    h = RNG.normal(size=(4, 4))
    h[0, 1] = h[1, 0] + 1e-6
    with pytest.raises(ContractViolation):
        cexpm_minus_iHt(Tensor(h), 1.0)


def test_cexpm_rejects_nonfinite_time():
    with pytest.raises(ContractViolation):
        cexpm_minus_iHt(Tensor(np.zeros((2, 2))), float("inf"))


def test_unitarity_over_time_range():
    for trial in range(10):
        n = int(RNG.integers(2, 10))
        h = random_laplacian(n)
        t = float(RNG.uniform(0.01, 16.0))
        u = cexpm_minus_iHt(Tensor(h), t).to_numpy()
        assert np.abs(u @ u.conj().T - np.eye(n)).max() <= 1e-8


def test_cexpm_gradient_vs_finite_differences():
    # symmetrize on the tape so arbitrary perturbations stay legal inputs
    n = 4
    raw = Tensor(RNG.normal(size=(n, n)), requires_grad=True)
    w_re = Tensor(RNG.normal(size=(n, n)))
    w_im = Tensor(RNG.normal(size=(n, n)))

    def build():
        h = T.mul(T.add(raw, T.transpose(raw)), 0.5)
        u = cexpm_minus_iHt(h, 1.7)
        return T.add(T.tsum(T.mul(u.re, w_re)), T.tsum(T.mul(u.im, w_im)))

    backward(build())
    ad = raw.grad.copy()

    def f():
        T.reset_tape()
        return build().item()

    assert_grads_close(ad, numeric_grad(f, raw.data))


# ---------------------------------------------------------------------------
# Jacobi eigensolver

def test_eig_diagonal_input():
    lam, v = symmetric_eig(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(lam, [1.0, 3.0], atol=1e-12)
    np.testing.assert_allclose(np.abs(v), [[0, 1], [1, 0]], atol=1e-12)


def test_eig_two_node_path_laplacian():
    lam, _ = symmetric_eig(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    np.testing.assert_allclose(lam, [0.0, 2.0], atol=1e-12)


def test_eig_identity():
    lam, v = symmetric_eig(np.eye(6))
    np.testing.assert_allclose(lam, 1.0, atol=1e-14)
    np.testing.assert_allclose(v @ v.T, np.eye(6), atol=1e-12)


def test_eig_contract_on_random_matrices():
    for trial in range(25):
        n = int(RNG.integers(1, 17))
        h = random_symmetric(n, scale=float(RNG.uniform(0.1, 5.0)))
        lam, v = symmetric_eig(h)
        assert (np.diff(lam) >= -1e-12).all()
        scale = max(1.0, np.abs(h).max())
        assert np.abs(h @ v - v * lam).max() <= 1e-9 * scale
        assert np.abs(v.T @ v - np.eye(n)).max() <= 1e-9


def test_eig_agrees_with_numpy():
    for n in (3, 8, 15):
        h = random_symmetric(n)
        lam, _ = symmetric_eig(h)
        np.testing.assert_allclose(lam, np.linalg.eigvalsh(h), atol=1e-9)


def test_eig_rejects_asymmetric():
    with pytest.raises(ContractViolation):
        symmetric_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_eig_sweep_limit():
    h = random_symmetric(6)
    with pytest.raises(NumericError):
        symmetric_eig(h, max_sweeps=0)
