"""Differential functionals, RKHS atoms, Gram matrices, and models.

An *atom* is the RKHS element obtained by applying a linear differential
functional to one argument of the kernel and pinning the other at a point:
``lK(., x)``.  Atoms are the single currency of the whole pipeline — data
observations, constraint anchors, covering centers/normals, and shift
functions are all finite combinations of atoms, so every inner product,
functional evaluation, and norm reduces to Gram algebra over one basis.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .kernels import Kernel

__all__ = [
    "DiffFunctional",
    "SdpOperator",
    "Atom",
    "Model",
    "atom_inner",
    "cross_gram",
    "gram",
    "apply_functional",
    "eval_model",
    "model_distance",
]

#: quantization (decimal digits) for dedup keys — below solver tolerance,
#: above float noise.
DEDUP_DIGITS = 12


@dataclass(frozen=True)
class DiffFunctional:
    """A linear functional  f -> sum_k beta_k * d^{r_k} f_{q_k}(x).

    ``terms`` is a tuple of ``(q, r, beta)``: output component, derivative
    multi-index, and real weight.  The point of application lives on the
    :class:`Atom`, not here.
    """

    terms: tuple[tuple[int, tuple[int, ...], float], ...]

    def __post_init__(self):
        if not self.terms:
            raise ValueError("functional must have at least one term")
        norm = []
        for q, r, beta in self.terms:
            norm.append((int(q), tuple(int(v) for v in r), float(beta)))
        object.__setattr__(self, "terms", tuple(norm))

    # ------------------------------------------------------------ builders
    @staticmethod
    def value(dim: int, q: int = 0, beta: float = 1.0) -> "DiffFunctional":
        """Point-evaluation of output component ``q``."""
        return DiffFunctional(((q, (0,) * dim, beta),))

    @staticmethod
    def partial(dim: int, axis: int, order: int = 1, q: int = 0,
                beta: float = 1.0) -> "DiffFunctional":
        """Partial derivative of order ``order`` along ``axis`` on output q."""
        r = [0] * dim
        r[axis] = int(order)
        return DiffFunctional(((q, tuple(r), beta),))

    @staticmethod
    def mixed(dim: int, axes: Sequence[int], q: int = 0,
              beta: float = 1.0) -> "DiffFunctional":
        """Mixed partial: one derivative per entry of ``axes``."""
        r = [0] * dim
        for a in axes:
            r[a] += 1
        return DiffFunctional(((q, tuple(r), beta),))

    def scaled(self, factor: float) -> "DiffFunctional":
        return DiffFunctional(
            tuple((q, r, beta * factor) for q, r, beta in self.terms)
        )

    # ---------------------------------------------------------- properties
    @property
    def max_order(self) -> int:
        return max(sum(r) for _, r, _ in self.terms)

    def canonical(self) -> tuple:
        """Merged, sorted, quantized term tuple — the dedup key."""
        merged: dict[tuple, float] = {}
        for q, r, beta in self.terms:
            merged[(q, r)] = merged.get((q, r), 0.0) + beta
        out = []
        for (q, r), beta in sorted(merged.items()):
            b = round(beta, DEDUP_DIGITS)
            if b != 0.0:
                out.append((q, r, b))
        return tuple(out)

    def to_json(self) -> list:
        return [[q, list(r), beta] for q, r, beta in self.terms]

    @staticmethod
    def from_json(data: Iterable) -> "DiffFunctional":
        return DiffFunctional(
            tuple((int(q), tuple(int(v) for v in r), float(b))
                  for q, r, b in data)
        )


@dataclass(frozen=True)
class SdpOperator:
    """Symmetric P x P array of functionals defining a matrix inequality.

    Entry ``(p1, p2)`` holds the functional producing the slack-matrix entry;
    the array must be symmetric so the slack matrix is.
    """

    entries: tuple[tuple[DiffFunctional, ...], ...]

    def __post_init__(self):
        P = len(self.entries)
        rows = tuple(tuple(row) for row in self.entries)
        if any(len(row) != P for row in rows):
            raise ValueError("operator entries must form a square array")
        for p1 in range(P):
            for p2 in range(p1 + 1, P):
                if rows[p1][p2].canonical() != rows[p2][p1].canonical():
                    raise ValueError(
                        f"operator entries ({p1},{p2}) and ({p2},{p1}) differ"
                    )
        object.__setattr__(self, "entries", rows)

    @staticmethod
    def scalar(functional: DiffFunctional) -> "SdpOperator":
        return SdpOperator(((functional,),))

    @property
    def size(self) -> int:
        return len(self.entries)

    def canonical(self) -> tuple:
        return tuple(tuple(f.canonical() for f in row) for row in self.entries)


@dataclass(frozen=True)
class Atom:
    """The RKHS element ``lK(., x)`` for a functional ``l`` at point ``x``."""

    x: tuple[float, ...]
    functional: DiffFunctional

    def __post_init__(self):
        pt = tuple(float(v) for v in np.atleast_1d(np.asarray(self.x)))
        object.__setattr__(self, "x", pt)

    @property
    def dim(self) -> int:
        return len(self.x)

    def key(self) -> tuple:
        """Dedup key: quantized point plus canonical functional."""
        return (
            tuple(round(v, DEDUP_DIGITS) for v in self.x),
            self.functional.canonical(),
        )

    def to_json(self) -> dict:
        return {"x": list(self.x), "terms": self.functional.to_json()}

    @staticmethod
    def from_json(data: dict) -> "Atom":
        return Atom(tuple(data["x"]), DiffFunctional.from_json(data["terms"]))


# --------------------------------------------------------------------------
# Inner products and Gram matrices
# --------------------------------------------------------------------------

def atom_inner(a1: Atom, a2: Atom, kernel: Kernel) -> float:
    """RKHS inner product of two atoms.

    ``<l1 K(., x1), l2 K(., x2)> = sum beta1 beta2 *
    d^{r1}_{x1} d^{r2}_{x2} [e_q1^T K(x1, x2) e_q2]`` — the derivative
    reproducing property applied twice.
    """
    total = 0.0
    for q1, r1, b1 in a1.functional.terms:
        for q2, r2, b2 in a2.functional.terms:
            total += b1 * b2 * kernel.eval_partial(r1, r2, q1, q2, a1.x, a2.x)
    return total


def functional_row(atom: Atom, basis: Sequence[Atom], kernel: Kernel,
                   gram_matrix: np.ndarray | None = None,
                   index: dict | None = None) -> np.ndarray:
    """Gram row ``[<basis_j, atom>]_j``, reusing G when the atom is in basis."""
    if gram_matrix is not None and index is not None:
        j = index.get(atom.key())
        if j is not None:
            return gram_matrix[:, j]
    return np.array([atom_inner(b, atom, kernel) for b in basis])


def cross_gram(rows: Sequence[Atom], cols: Sequence[Atom],
               kernel: Kernel) -> np.ndarray:
    """Matrix of inner products between two atom lists."""
    G = np.empty((len(rows), len(cols)))
    for i, a in enumerate(rows):
        for j, b in enumerate(cols):
            G[i, j] = atom_inner(a, b, kernel)
    return G


def gram(basis: Sequence[Atom], kernel: Kernel
         ) -> tuple[np.ndarray, np.ndarray, float]:
    """Gram matrix of a basis plus a Cholesky factor of its jittered form.

    Returns ``(G, L, jitter)`` with ``L L^T = G + jitter * I``.  The jitter
    starts at ``1e-10 * trace(G)/A`` and escalates tenfold until the
    factorization succeeds, capped at ``1e-6 * trace(G)/A`` — every SOC row
    routes through ``L^T``, so the schedule is part of the numerical contract.
    """
    if not basis:
        raise ValueError("basis must be non-empty")
    A = len(basis)
    G = np.empty((A, A))
    for i in range(A):
        for j in range(i, A):
            v = atom_inner(basis[i], basis[j], kernel)
            G[i, j] = v
            G[j, i] = v
    scale = max(float(np.trace(G)) / A, np.finfo(float).tiny)
    eps = 1e-10
    while True:
        jitter = eps * scale
        try:
            L = np.linalg.cholesky(G + jitter * np.eye(A))
            return G, L, jitter
        except np.linalg.LinAlgError:
            if eps >= 1e-6:
                raise ValueError("Gram numerically indefinite") from None
            eps *= 10.0


# --------------------------------------------------------------------------
# Models
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Model:
    """A solved estimator: atom basis, coefficients, bias, and cached norm."""

    kernel: Kernel
    basis: tuple[Atom, ...]
    coeffs: np.ndarray
    bias: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gram_matrix: np.ndarray | None = None
    factor: np.ndarray | None = None
    aux: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "basis", tuple(self.basis))
        object.__setattr__(
            self, "coeffs", np.asarray(self.coeffs, dtype=float).ravel()
        )
        object.__setattr__(
            self, "bias", np.asarray(self.bias, dtype=float).ravel()
        )
        if len(self.basis) != self.coeffs.size:
            raise ValueError(
                f"basis size {len(self.basis)} != coefficient count "
                f"{self.coeffs.size}"
            )
        if self.gram_matrix is None and self.basis:
            G, L, _ = gram(self.basis, self.kernel)
            object.__setattr__(self, "gram_matrix", G)
            object.__setattr__(self, "factor", L)

    @staticmethod
    def zero(kernel: Kernel, bias_dim: int = 0) -> "Model":
        return Model(kernel, (), np.zeros(0), np.zeros(bias_dim),
                     gram_matrix=np.zeros((0, 0)), factor=np.zeros((0, 0)))

    @property
    def norm(self) -> float:
        """Kernel norm ||f||_K = ||L^T a||_2."""
        if not self.basis:
            return 0.0
        return float(np.linalg.norm(self.factor.T @ self.coeffs))

    # ---------------------------------------------------------- evaluation
    def eval(self, x) -> np.ndarray:
        return eval_model(self, x)

    def eval_component_many(self, X, q: int = 0) -> np.ndarray:
        """Vectorized component evaluation over the rows of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(X.shape[0])
        for a_j, atom in zip(self.coeffs, self.basis):
            if a_j == 0.0:
                continue
            for q2, r2, b2 in atom.functional.terms:
                zero = (0,) * len(atom.x)
                out += a_j * b2 * self.kernel.eval_partial_many(
                    zero, r2, q, q2, X, atom.x
                )
        return out

    def to_json(self) -> dict:
        return {
            "kernel": self.kernel.to_config(),
            "atoms": [a.to_json() for a in self.basis],
            "coeffs": self.coeffs.tolist(),
            "bias": self.bias.tolist(),
            "kernel_fingerprint": self.kernel.fingerprint(),
        }

    @staticmethod
    def from_json(data: dict, kernel: Kernel | None = None) -> "Model":
        from .kernels import kernel_from_config

        k = kernel if kernel is not None else kernel_from_config(data["kernel"])
        basis = tuple(Atom.from_json(a) for a in data["atoms"])
        return Model(k, basis, np.array(data["coeffs"], dtype=float),
                     np.array(data.get("bias", []), dtype=float))


def apply_functional(D: DiffFunctional, model: Model, x) -> float:
    """Evaluate ``D(f)(x)`` through the derivative reproducing property."""
    probe = Atom(tuple(np.atleast_1d(np.asarray(x, dtype=float))), D)
    total = 0.0
    for a_j, atom in zip(model.coeffs, model.basis):
        if a_j != 0.0:
            total += a_j * atom_inner(atom, probe, model.kernel)
    return total


def eval_model(model: Model, x) -> np.ndarray:
    """Model output f(x) in R^Q (bias mapping is applied by the problem)."""
    Q = model.kernel.out_dim
    d = model.kernel.dim
    return np.array([
        apply_functional(DiffFunctional.value(d, q), model, x)
        for q in range(Q)
    ])


def model_distance(m1: Model, m2: Model) -> float:
    """Kernel-norm distance ||f1 - f2||_K via the joint Gram matrix."""
    if m1.kernel.fingerprint() != m2.kernel.fingerprint():
        raise ValueError("models use different kernels")
    n1 = float(m1.coeffs @ (m1.gram_matrix @ m1.coeffs)) if m1.basis else 0.0
    n2 = float(m2.coeffs @ (m2.gram_matrix @ m2.coeffs)) if m2.basis else 0.0
    cross = 0.0
    if m1.basis and m2.basis:
        C = cross_gram(m1.basis, m2.basis, m1.kernel)
        cross = float(m1.coeffs @ C @ m2.coeffs)
    return float(np.sqrt(max(n1 + n2 - 2.0 * cross, 0.0)))
