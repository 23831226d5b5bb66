"""Matrix-valued kernels with exact mixed partial derivatives.

Every kernel maps a pair of points in ``R^d`` to a ``Q x Q`` matrix and
exposes analytic mixed partials ``d^{r1}_x d^{r2}_y [e_q1^T K(x,y) e_q2]``
up to its declared smoothness order.  Derivatives are closed-form; no finite
differences appear outside the test suite.

Shipped variants:

* :class:`GaussianKernel` — scalar anisotropic squared-exponential, smooth.
* :class:`LaplacianKernel` — scalar exponential kernel, value-only (s = 0).
* :class:`DecomposableGaussianKernel` — ``k(x,y) * Sigma`` for vector outputs.
* :class:`LTIControlKernel` — the controllability-Gramian kernel of a linear
  time-invariant system, computed via the augmented-matrix exponential.
"""

from __future__ import annotations

import json
import math
from typing import Sequence

import numpy as np
from scipy.linalg import expm

__all__ = [
    "Kernel",
    "GaussianKernel",
    "LaplacianKernel",
    "DecomposableGaussianKernel",
    "LTIControlKernel",
    "lti_eval",
    "kernel_from_config",
]

MultiIndex = tuple[int, ...]

# Cache-key quantization for time arguments of the LTI kernel.
_TIME_DIGITS = 12


def _as_point(x, d: int, name: str = "x") -> np.ndarray:
    p = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    if p.size != d:
        raise ValueError(
            f"{name} has dimension {p.size}, kernel expects dimension {d}"
        )
    return p


def _as_multi_index(r, d: int) -> MultiIndex:
    if r is None:
        return (0,) * d
    if isinstance(r, int):
        raise ValueError("multi-index must be a length-d sequence, not an int")
    t = tuple(int(v) for v in r)
    if len(t) != d or any(v < 0 for v in t):
        raise ValueError(f"invalid multi-index {r!r} for dimension {d}")
    return t


class Kernel:
    """Base class: a positive-definite matrix-valued kernel on a box in R^d."""

    dim: int
    out_dim: int
    smoothness: int

    # ------------------------------------------------------------------ API
    def eval(self, x, x2) -> np.ndarray:
        """Return the Q x Q matrix K(x, x2)."""
        raise NotImplementedError

    def eval_partial(self, r1, r2, q1: int, q2: int, x, x2) -> float:
        """Return d^{r1}_x d^{r2}_{x2} [e_q1^T K(x, x2) e_q2]."""
        raise NotImplementedError

    def eval_partial_many(self, r1, r2, q1: int, q2: int, X, x2) -> np.ndarray:
        """Vectorized :meth:`eval_partial` over the rows of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array(
            [self.eval_partial(r1, r2, q1, q2, row, x2) for row in X]
        )

    @property
    def translation_invariant(self) -> bool:
        return False

    def radial_profile(self, r: float) -> float:
        """K0(r) for radial scalar kernels; raises otherwise."""
        raise ValueError(
            f"kernel {type(self).__name__} has no radial profile; "
            "use the sampled buffer instead"
        )

    @property
    def is_radial(self) -> bool:
        return False

    # -------------------------------------------------------- serialization
    def to_config(self) -> dict:
        raise NotImplementedError

    def fingerprint(self) -> str:
        return json.dumps(self.to_config(), sort_keys=True)

    # ----------------------------------------------------------- validation
    def _check_orders(self, r1: MultiIndex, r2: MultiIndex) -> None:
        s = self.smoothness
        for r in (r1, r2):
            order = sum(r)
            if order > s:
                raise ValueError(
                    f"derivative order {order} exceeds the kernel's "
                    f"smoothness {s}"
                )


# --------------------------------------------------------------------------
# Gaussian family
# --------------------------------------------------------------------------

def _gauss_profile_derivative(n: int, t: float, s2: float) -> float:
    """n-th derivative of g(t) = exp(-t^2 / (2 s2)), divided by g(t).

    The polynomial prefactors follow the recursion p_{n+1} = p_n' - (t/s2) p_n
    with p_0 = 1; orders up to 4 cover mixed partials of order (2, 2).
    """
    if n == 0:
        return 1.0
    u = t / s2
    if n == 1:
        return -u
    if n == 2:
        return u * u - 1.0 / s2
    if n == 3:
        return -u * u * u + 3.0 * u / s2
    if n == 4:
        return u ** 4 - 6.0 * u * u / s2 + 3.0 / (s2 * s2)
    raise ValueError(f"derivative order {n} exceeds the supported order 4")


class GaussianKernel(Kernel):
    """Anisotropic squared-exponential scalar kernel.

    ``k(x, y) = exp(-sum_i (x_i - y_i)^2 / (2 sigma_i^2))`` with smoothness 2:
    mixed partials up to total order two in each argument are available in
    closed form (polynomial-times-exponential); higher orders are rejected.
    """

    def __init__(self, lengthscales: Sequence[float] | float):
        sig = np.atleast_1d(np.asarray(lengthscales, dtype=float)).ravel()
        if sig.size == 0 or np.any(sig <= 0):
            raise ValueError("lengthscales must be positive")
        self.lengthscales = sig
        self.dim = sig.size
        self.out_dim = 1
        self.smoothness = 2

    def _scalar(self, x: np.ndarray, y: np.ndarray) -> float:
        t = (x - y) / self.lengthscales
        return math.exp(-0.5 * float(t @ t))

    def eval(self, x, x2) -> np.ndarray:
        x = _as_point(x, self.dim, "x")
        y = _as_point(x2, self.dim, "x2")
        return np.array([[self._scalar(x, y)]])

    def scalar_partial(self, r1, r2, x, x2) -> float:
        x = _as_point(x, self.dim, "x")
        y = _as_point(x2, self.dim, "x2")
        r1 = _as_multi_index(r1, self.dim)
        r2 = _as_multi_index(r2, self.dim)
        self._check_orders(r1, r2)
        value = self._scalar(x, y)
        sign = 1.0
        for i in range(self.dim):
            n = r1[i] + r2[i]
            if n:
                s2 = float(self.lengthscales[i]) ** 2
                value *= _gauss_profile_derivative(n, float(x[i] - y[i]), s2)
                if r2[i] % 2:
                    sign = -sign
        return sign * value

    def eval_partial(self, r1, r2, q1: int, q2: int, x, x2) -> float:
        if q1 != 0 or q2 != 0:
            raise ValueError("scalar kernel has a single output component")
        return self.scalar_partial(r1, r2, x, x2)

    def scalar_partial_many(self, r1, r2, X, x2) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = _as_point(x2, self.dim, "x2")
        r1 = _as_multi_index(r1, self.dim)
        r2 = _as_multi_index(r2, self.dim)
        self._check_orders(r1, r2)
        diffs = X - y[None, :]
        scaled = diffs / self.lengthscales[None, :]
        values = np.exp(-0.5 * np.sum(scaled * scaled, axis=1))
        for i in range(self.dim):
            n = r1[i] + r2[i]
            if n:
                s2 = float(self.lengthscales[i]) ** 2
                u = diffs[:, i] / s2
                if n == 1:
                    poly = -u
                elif n == 2:
                    poly = u * u - 1.0 / s2
                elif n == 3:
                    poly = -u ** 3 + 3.0 * u / s2
                else:
                    poly = u ** 4 - 6.0 * u * u / s2 + 3.0 / (s2 * s2)
                if r2[i] % 2:
                    poly = -poly
                values = values * poly
        return values

    def eval_partial_many(self, r1, r2, q1: int, q2: int, X, x2) -> np.ndarray:
        if q1 != 0 or q2 != 0:
            raise ValueError("scalar kernel has a single output component")
        return self.scalar_partial_many(r1, r2, X, x2)

    @property
    def translation_invariant(self) -> bool:
        return True

    @property
    def is_radial(self) -> bool:
        return bool(np.all(self.lengthscales == self.lengthscales[0]))

    def radial_profile(self, r: float) -> float:
        if not self.is_radial:
            raise ValueError(
                "anisotropic Gaussian kernel is not radial; "
                "use the sampled buffer instead"
            )
        s = float(self.lengthscales[0])
        return math.exp(-0.5 * (r / s) ** 2)

    def to_config(self) -> dict:
        return {"kind": "gaussian", "sigma": self.lengthscales.tolist()}


class LaplacianKernel(Kernel):
    """Scalar exponential kernel ``k(x, y) = exp(-rate * ||x - y||_2)``.

    Not differentiable at coincidence, hence declared smoothness 0: only
    function-value functionals are admissible.
    """

    def __init__(self, rate: float, dim: int = 1):
        if rate <= 0:
            raise ValueError("rate must be positive")
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.rate = float(rate)
        self.dim = int(dim)
        self.out_dim = 1
        self.smoothness = 0

    def eval(self, x, x2) -> np.ndarray:
        x = _as_point(x, self.dim, "x")
        y = _as_point(x2, self.dim, "x2")
        return np.array([[math.exp(-self.rate * float(np.linalg.norm(x - y)))]])

    def eval_partial(self, r1, r2, q1: int, q2: int, x, x2) -> float:
        if q1 != 0 or q2 != 0:
            raise ValueError("scalar kernel has a single output component")
        r1 = _as_multi_index(r1, self.dim)
        r2 = _as_multi_index(r2, self.dim)
        if sum(r1) or sum(r2):
            raise ValueError(
                "kernel not differentiable: exponential kernel accepts "
                "value functionals only"
            )
        return float(self.eval(x, x2)[0, 0])

    def eval_partial_many(self, r1, r2, q1: int, q2: int, X, x2) -> np.ndarray:
        if q1 != 0 or q2 != 0:
            raise ValueError("scalar kernel has a single output component")
        r1 = _as_multi_index(r1, self.dim)
        r2 = _as_multi_index(r2, self.dim)
        if sum(r1) or sum(r2):
            raise ValueError(
                "kernel not differentiable: exponential kernel accepts "
                "value functionals only"
            )
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = _as_point(x2, self.dim, "x2")
        return np.exp(-self.rate * np.linalg.norm(X - y[None, :], axis=1))

    @property
    def translation_invariant(self) -> bool:
        return True

    @property
    def is_radial(self) -> bool:
        return True

    def radial_profile(self, r: float) -> float:
        return math.exp(-self.rate * r)

    def to_config(self) -> dict:
        return {"kind": "laplacian", "rate": self.rate, "dim": self.dim}


class DecomposableGaussianKernel(Kernel):
    """Vector-output kernel ``K(x, y) = k(x, y) * Sigma``.

    ``k`` is the anisotropic Gaussian scalar kernel and ``Sigma`` a fixed
    symmetric PSD output-covariance matrix, so every mixed partial factors as
    (scalar-kernel partial) * Sigma[q1, q2].
    """

    def __init__(self, lengthscales, output_cov):
        self.scalar = GaussianKernel(lengthscales)
        sigma = np.asarray(output_cov, dtype=float)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise ValueError("output covariance must be a square matrix")
        if not np.allclose(sigma, sigma.T, atol=1e-12):
            raise ValueError("output covariance must be symmetric")
        eigs = np.linalg.eigvalsh(sigma)
        scale = max(1.0, float(np.trace(sigma)) / sigma.shape[0])
        if eigs.min() < -1e-10 * scale:
            raise ValueError("output covariance must be positive semidefinite")
        self.output_cov = 0.5 * (sigma + sigma.T)
        self.dim = self.scalar.dim
        self.out_dim = sigma.shape[0]
        self.smoothness = 2

    @property
    def lengthscales(self) -> np.ndarray:
        return self.scalar.lengthscales

    def eval(self, x, x2) -> np.ndarray:
        return self.scalar.eval(x, x2)[0, 0] * self.output_cov

    def _check_q(self, q1: int, q2: int) -> None:
        if not (0 <= q1 < self.out_dim and 0 <= q2 < self.out_dim):
            raise ValueError(
                f"output indices ({q1},{q2}) out of range for Q={self.out_dim}"
            )

    def eval_partial(self, r1, r2, q1: int, q2: int, x, x2) -> float:
        self._check_q(q1, q2)
        return self.scalar.scalar_partial(r1, r2, x, x2) * float(
            self.output_cov[q1, q2]
        )

    def eval_partial_many(self, r1, r2, q1: int, q2: int, X, x2) -> np.ndarray:
        self._check_q(q1, q2)
        return self.scalar.scalar_partial_many(r1, r2, X, x2) * float(
            self.output_cov[q1, q2]
        )

    @property
    def translation_invariant(self) -> bool:
        return True

    def to_config(self) -> dict:
        return {
            "kind": "decomposable_gaussian",
            "sigma": self.scalar.lengthscales.tolist(),
            "output_cov": self.output_cov.tolist(),
        }


# --------------------------------------------------------------------------
# LTI control kernel
# --------------------------------------------------------------------------

def _gramian_van_loan(A: np.ndarray, BBt: np.ndarray, m: float) -> np.ndarray:
    """Controllability Gramian W(m) = int_0^m e^{uA} B B^T e^{uA^T} du.

    Uses the augmented block exponential: with
    ``F = expm(m * [[-A, BB^T], [0, A^T]])`` one has ``W(m) = F22^T @ F12``.
    """
    q = A.shape[0]
    C = np.zeros((2 * q, 2 * q))
    C[:q, :q] = -A
    C[:q, q:] = BBt
    C[q:, q:] = A.T
    F = expm(C * m)
    return F[q:, q:].T @ F[:q, q:]


def lti_eval(A, B, s_time: float, t_time: float) -> np.ndarray:
    """Kernel of the LTI system x' = Ax + Bu on [0, min(s,t)].

    Returns ``int_0^{min(s,t)} e^{(s-tau)A} B B^T e^{(t-tau)A^T} dtau``
    evaluated exactly through the augmented-matrix exponential (no
    quadrature): the integral equals ``e^{(s-m)A} W(m) e^{(t-m)A^T}`` with
    ``m = min(s, t)`` and ``W`` the controllability Gramian.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    if s_time < 0 or t_time < 0:
        raise ValueError(
            f"times must be nonnegative, got ({s_time}, {t_time})"
        )
    m = min(float(s_time), float(t_time))
    q = A.shape[0]
    if m == 0.0:
        return np.zeros((q, q))
    W = _gramian_van_loan(A, B @ B.T, m)
    left = expm(A * (float(s_time) - m)) if s_time > m else np.eye(q)
    right = expm(A * (float(t_time) - m)) if t_time > m else np.eye(q)
    return left @ W @ right.T


class LTIControlKernel(Kernel):
    """Kernel whose RKHS is the set of controlled LTI trajectories.

    ``K(s, t) = int_0^{min(s,t)} e^{(s-tau)A} B B^T e^{(t-tau)A^T} dtau`` for a
    system ``x' = Ax + Bu`` started at the origin.  Time is the only input
    (d = 1); outputs are the Q state components.  Value functionals only.
    """

    def __init__(self, A, B):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be a square matrix")
        B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
        self.A = A
        self.B = B
        self.BBt = B @ B.T
        self.dim = 1
        self.out_dim = A.shape[0]
        self.smoothness = 0
        self._gram_cache: dict[float, np.ndarray] = {}
        self._exp_cache: dict[float, np.ndarray] = {}
        # Diagonalization fast path for e^{A dt}; falls back to expm when the
        # eigenvector matrix is ill-conditioned (defective A).
        self._eig = None
        try:
            lam, V = np.linalg.eig(A)
            if np.linalg.cond(V) < 1e8:
                self._eig = (lam, V, np.linalg.inv(V))
        except np.linalg.LinAlgError:
            self._eig = None

    # ------------------------------------------------------------- helpers
    def _gramian(self, m: float) -> np.ndarray:
        key = round(m, _TIME_DIGITS)
        W = self._gram_cache.get(key)
        if W is None:
            W = _gramian_van_loan(self.A, self.BBt, m)
            self._gram_cache[key] = W
        return W

    def _exp_a(self, dt: float) -> np.ndarray:
        if dt == 0.0:
            return np.eye(self.out_dim)
        key = round(dt, _TIME_DIGITS)
        E = self._exp_cache.get(key)
        if E is None:
            if self._eig is not None:
                lam, V, Vinv = self._eig
                E = np.real(V @ np.diag(np.exp(lam * dt)) @ Vinv)
            else:
                E = expm(self.A * dt)
            self._exp_cache[key] = E
        return E

    # ----------------------------------------------------------------- API
    def eval(self, x, x2) -> np.ndarray:
        s = float(_as_point(x, 1, "x")[0])
        t = float(_as_point(x2, 1, "x2")[0])
        if s < 0 or t < 0:
            raise ValueError(f"times must be nonnegative, got ({s}, {t})")
        m = min(s, t)
        if m == 0.0:
            return np.zeros((self.out_dim, self.out_dim))
        W = self._gramian(m)
        return self._exp_a(s - m) @ W @ self._exp_a(t - m).T

    def eval_partial(self, r1, r2, q1: int, q2: int, x, x2) -> float:
        r1 = _as_multi_index(r1, 1)
        r2 = _as_multi_index(r2, 1)
        if sum(r1) or sum(r2):
            raise ValueError(
                "kernel not differentiable: the control kernel accepts "
                "value functionals only"
            )
        if not (0 <= q1 < self.out_dim and 0 <= q2 < self.out_dim):
            raise ValueError(
                f"output indices ({q1},{q2}) out of range for Q={self.out_dim}"
            )
        return float(self.eval(x, x2)[q1, q2])

    def eval_partial_many(self, r1, r2, q1: int, q2: int, X, x2) -> np.ndarray:
        r1 = _as_multi_index(r1, 1)
        r2 = _as_multi_index(r2, 1)
        if sum(r1) or sum(r2):
            raise ValueError(
                "kernel not differentiable: the control kernel accepts "
                "value functionals only"
            )
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array(
            [float(self.eval(row, x2)[q1, q2]) for row in X]
        )

    def to_config(self) -> dict:
        return {
            "kind": "lti_control",
            "A": self.A.tolist(),
            "B": self.B.tolist(),
        }


# --------------------------------------------------------------------------
# Config round-trip
# --------------------------------------------------------------------------

def kernel_from_config(cfg: dict) -> Kernel:
    """Build a kernel from its tagged-union JSON configuration."""
    kind = cfg.get("kind")
    if kind == "gaussian":
        return GaussianKernel(cfg["sigma"])
    if kind == "laplacian":
        return LaplacianKernel(cfg["rate"], int(cfg.get("dim", 1)))
    if kind == "decomposable_gaussian":
        return DecomposableGaussianKernel(cfg["sigma"], cfg["output_cov"])
    if kind == "lti_control":
        return LTIControlKernel(cfg["A"], cfg["B"])
    raise ValueError(f"unknown kernel kind {kind!r}")
