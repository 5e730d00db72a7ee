"""Complex matrix arithmetic on real tensor pairs, e^{-iHt}, and a
symmetric eigensolver used as a forward-only oracle.

Gradients flow through the complex operations because both parts are
ordinary real tensors; the eigensolver deliberately never touches the
tape (its gradients near degenerate eigenvalues are ill-behaved).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractViolation, NumericError
from .tensor import Tensor

SYMMETRY_TOL = 1e-10
_EXPM_TAYLOR_DEGREE = 12
_EXPM_HALVING_THRESHOLD = 0.5


@dataclass
class ComplexMatrix:
    re: Tensor
    im: Tensor

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise ContractViolation(
                f"real/imaginary shape mismatch: {self.re.shape} vs {self.im.shape}")

    @property
    def shape(self):
        return self.re.shape

    def to_numpy(self) -> np.ndarray:
        return self.re.data + 1j * self.im.data


def identity(n: int) -> ComplexMatrix:
    return ComplexMatrix(Tensor(np.eye(n)), Tensor(np.zeros((n, n))))


def cmatmul(a: ComplexMatrix, b: ComplexMatrix) -> ComplexMatrix:
    """(a.re + i a.im)(b.re + i b.im) via four real matrix products,
    fused into one tape node per output part."""
    if a.re.shape[1] != b.re.shape[0]:
        raise ContractViolation(
            f"cmatmul shape mismatch: {a.re.shape} @ {b.re.shape}")
    ar, ai, br, bi = a.re, a.im, b.re, b.im
    needs = (ar.requires_grad or ai.requires_grad
             or br.requires_grad or bi.requires_grad)
    re_data = ar.data @ br.data - ai.data @ bi.data
    im_data = ar.data @ bi.data + ai.data @ br.data

    def bw_re(g):
        if ar.requires_grad:
            ar._accum_own(g @ br.data.T)
        if br.requires_grad:
            br._accum_own(ar.data.T @ g)
        if ai.requires_grad:
            ai._accum_own(-(g @ bi.data.T))
        if bi.requires_grad:
            bi._accum_own(-(ai.data.T @ g))

    def bw_im(g):
        if ar.requires_grad:
            ar._accum_own(g @ bi.data.T)
        if bi.requires_grad:
            bi._accum_own(ar.data.T @ g)
        if ai.requires_grad:
            ai._accum_own(g @ br.data.T)
        if br.requires_grad:
            br._accum_own(ai.data.T @ g)

    return ComplexMatrix(T.custom(re_data, needs, bw_re),
                         T.custom(im_data, needs, bw_im))


def check_symmetric(h: np.ndarray, tol: float = SYMMETRY_TOL, what: str = "matrix") -> None:
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ContractViolation(f"{what} must be square, got shape {h.shape}")
    dev = float(np.abs(h - h.T).max()) if h.size else 0.0
    if dev > tol:
        raise ContractViolation(
            f"{what} not symmetric: max |H - H^T| = {dev:.3e} > {tol:g}")


def cexpm_minus_iHt(h: Tensor, t: float) -> ComplexMatrix:
    """U(t) = e^{-iHt} for symmetric real H, by scaling-and-squaring.

    The scaled argument -iHt/2^s with infinity norm <= 0.5 is fed to a
    degree-12 Taylor series evaluated in Horner form, then squared s
    times. Differentiable w.r.t. H.
    """
    if not math.isfinite(t):
        raise ContractViolation(f"evolution time must be finite, got {t}")
    check_symmetric(h.data, what="Hamiltonian")
    n = h.data.shape[0]
    norm = abs(t) * float(np.abs(h.data).sum(axis=1).max()) if n else 0.0
    s = 0
    while norm / (1 << s) > _EXPM_HALVING_THRESHOLD:
        s += 1

    # M = -i W with W = H * (t / 2^s); M.re == 0 so M @ S needs 2 products
    w = T.mul(h, t / (1 << s))
    eye = np.eye(n)
    coeff = [1.0] * (_EXPM_TAYLOR_DEGREE + 1)
    for k in range(1, _EXPM_TAYLOR_DEGREE + 1):
        coeff[k] = coeff[k - 1] / k

    s_re = Tensor(eye * coeff[_EXPM_TAYLOR_DEGREE])
    s_im = Tensor(np.zeros((n, n)))
    for k in range(_EXPM_TAYLOR_DEGREE - 1, -1, -1):
        s_re, s_im = _horner_step(w, s_re, s_im, eye * coeff[k])

    u = ComplexMatrix(s_re, s_im)
    for _ in range(s):
        u = cmatmul(u, u)
    return u


def _horner_step(w: Tensor, s_re: Tensor, s_im: Tensor,
                 const_diag: np.ndarray) -> tuple[Tensor, Tensor]:
    """One fused Horner iteration: S <- (-iW) S + c I, i.e.
    (re, im) <- (W @ im + cI, -(W @ re))."""
    needs = w.requires_grad or s_re.requires_grad or s_im.requires_grad
    re_data = w.data @ s_im.data + const_diag
    im_data = -(w.data @ s_re.data)

    def bw_re(g):
        if w.requires_grad:
            w._accum_own(g @ s_im.data.T)
        if s_im.requires_grad:
            s_im._accum_own(w.data.T @ g)

    def bw_im(g):
        if w.requires_grad:
            w._accum_own(-(g @ s_re.data.T))
        if s_re.requires_grad:
            s_re._accum_own(-(w.data.T @ g))

    return T.custom(re_data, needs, bw_re), T.custom(im_data, needs, bw_im)


def symmetric_eig(h: np.ndarray, max_sweeps: int = 100):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues ascending, eigenvectors as columns). Forward
    only: accepts and returns plain numpy arrays.
    """
    h = np.asarray(h, dtype=np.float64)
    check_symmetric(h)
    n = h.shape[0]
    a = h.copy()
    v = np.eye(n)
    if n == 1:
        return a.reshape(1).copy(), v

    scale = max(1.0, float(np.abs(h).max()))
    tol = 1e-14 * scale
    offdiag = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        if float(np.abs(a[offdiag]).max()) <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= tol * 1e-2:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot_p = a[:, p].copy()
                rot_q = a[:, q].copy()
                a[:, p] = c * rot_p - s * rot_q
                a[:, q] = s * rot_p + c * rot_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
    else:
        raise NumericError(
            f"Jacobi eigensolver did not converge within {max_sweeps} sweeps")

    lam = np.diagonal(a).copy()
    order = np.argsort(lam, kind="stable")
    return lam[order], v[:, order]


def expm_spectral(h: np.ndarray, t: float) -> np.ndarray:
    """Oracle e^{-iHt} = V diag(e^{-i lambda t}) V^T via the Jacobi solver."""
    lam, vecs = symmetric_eig(h)
    phases = np.exp(-1j * lam * t)
    return (vecs * phases) @ vecs.T
