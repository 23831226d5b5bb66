"""Coverings of input boxes and of their images in the RKHS.

Three ingredients turn a hard shape constraint over a compact box into
finitely many conic rows:

* a finite ball covering of the box (axis-aligned grid, max-norm or
  euclidean balls),
* for each covering ball, a buffer width measuring how much a constraint
  functional can vary over the ball (the margin added to the constraint so
  that enforcing it at the ball center implies it on the whole ball),
* optionally, an explicit enclosure of the functional's image in the
  RKHS --- a feature-space ball, or the intersection of the ambient norm
  ball with a halfspace --- which yields tighter rows for kernels whose
  correlation profile is known.

Buffer widths come either from the closed-form profile of radial kernels or
from sampling; sampling *under*-estimates the true supremum, so an optional
inflation factor is exposed.  Deterministic probe points (ball center, axis
extremes, corners) are always added to the sample so that radial cases are
recovered exactly.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np

from .atoms import Atom, DiffFunctional, SdpOperator, atom_inner
from .kernels import Kernel

__all__ = [
    "InputBall",
    "OmegaElement",
    "cover_box",
    "grid_cover",
    "eta_radial",
    "eta_sampled",
    "eta_eigen_bound",
    "eta_for",
    "omega_cover",
    "refine_radius",
    "fill_distance",
    "covering_to_csv",
]

_NORMS = ("euclidean", "max")


# --------------------------------------------------------------------------
# Input-space covering
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class InputBall:
    """Ball ``{x : ||x - center|| <= radius}`` in the declared norm."""

    center: tuple
    radius: float
    norm: str = "max"

    def __post_init__(self):
        if self.norm not in _NORMS:
            raise ValueError(f"unknown norm kind {self.norm!r}")
        if self.radius < 0:
            raise ValueError("ball radius must be nonnegative")
        object.__setattr__(self, "center",
                           tuple(float(c) for c in self.center))

    def contains(self, x, tol: float = 1e-12) -> bool:
        diff = np.asarray(x, dtype=float) - np.asarray(self.center)
        ord_ = np.inf if self.norm == "max" else 2
        return float(np.linalg.norm(diff, ord_)) <= self.radius + tol


def _check_box(box) -> tuple[np.ndarray, np.ndarray]:
    lo = np.asarray([b[0] for b in box], dtype=float)
    hi = np.asarray([b[1] for b in box], dtype=float)
    if np.any(hi < lo):
        raise ValueError("box has hi < lo on some axis")
    return lo, hi


def grid_cover(box, counts, norm: str = "max") -> list[InputBall]:
    """Uniform grid covering with a prescribed per-axis cell count.

    Cell half-widths set the ball radius: the max over axes for max-norm
    balls, the half-diagonal for euclidean balls.
    """
    lo, hi = _check_box(box)
    counts = [int(c) for c in (counts if np.ndim(counts) else
                               [counts] * lo.size)]
    if len(counts) != lo.size or min(counts) < 1:
        raise ValueError("need a positive count per axis")
    half = (hi - lo) / (2.0 * np.asarray(counts))
    if norm == "max":
        radius = float(np.max(half))
    elif norm == "euclidean":
        radius = float(np.linalg.norm(half))
    else:
        raise ValueError(f"unknown norm kind {norm!r}")
    axes = [lo[i] + (2 * np.arange(counts[i]) + 1) * half[i]
            for i in range(lo.size)]
    return [
        InputBall(center=tuple(float(v) for v in pt), radius=radius,
                  norm=norm)
        for pt in itertools.product(*axes)
    ]


def cover_box(box, delta_max: float, norm: str = "max") -> list[InputBall]:
    """Cover an axis-aligned box by balls of radius at most ``delta_max``.

    Max-norm: per-axis count ``ceil((hi-lo)/(2*delta_max))``.  Euclidean:
    the grid is refined so the cell half-diagonal stays within
    ``delta_max``.
    """
    if delta_max <= 0:
        raise ValueError("delta_max must be positive")
    lo, hi = _check_box(box)
    d = lo.size
    if norm == "max":
        per_axis = delta_max
    elif norm == "euclidean":
        nondeg = max(int(np.sum(hi > lo)), 1)
        per_axis = delta_max / np.sqrt(nondeg)
    else:
        raise ValueError(f"unknown norm kind {norm!r}")
    # Quantize the ratio before ceil so exact multiples don't round up on
    # float fuzz (0.6 / 0.02 evaluates a hair above 30).
    counts = [
        max(int(np.ceil(round((hi[i] - lo[i]) / (2.0 * per_axis), 9))), 1)
        for i in range(d)
    ]
    return grid_cover(box, counts, norm)


def fill_distance(points, box, grid_res: int) -> float:
    """Max over a grid of the box of the euclidean distance to the points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise ValueError("need at least one point")
    lo, hi = _check_box(box)
    axes = [np.linspace(lo[i], hi[i], max(int(grid_res), 2))
            for i in range(lo.size)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    grid = grid.reshape(-1, lo.size)
    d2 = ((grid[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    return float(np.sqrt(d2.min(axis=1).max()))


# --------------------------------------------------------------------------
# Buffer widths (how much a functional moves over a ball)
# --------------------------------------------------------------------------

def _is_identity_eval(op: SdpOperator) -> bool:
    if op.size != 1:
        return False
    terms = op.entries[0][0].terms
    if len(terms) != 1:
        return False
    q, r, beta = terms[0]
    return q == 0 and all(o == 0 for o in r) and abs(beta - 1.0) < 1e-15


def eta_radial(kernel: Kernel, delta: float) -> float:
    """Closed-form buffer for point evaluation under a radial kernel.

    For a monotonically decreasing radial profile ``k0`` the evaluation
    functional moves by at most ``sqrt(2 k0(0) - 2 k0(delta))`` over a ball
    of radius ``delta``.
    """
    if not kernel.is_radial:
        raise ValueError(
            "closed-form buffer needs a radial scalar kernel; "
            "use eta_sampled instead"
        )
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    k0 = kernel.radial_profile
    val = 2.0 * k0(0.0) - 2.0 * k0(float(delta))
    return float(np.sqrt(max(val, 0.0)))


def _unit_offsets(d: int, norm: str, n_x: int, seed) -> np.ndarray:
    """Random offsets in the unit ball plus deterministic boundary probes."""
    rng = np.random.default_rng(seed)
    if norm == "max":
        rand = rng.uniform(-1.0, 1.0, size=(n_x, d))
    else:
        dirs = rng.normal(size=(n_x, d))
        nrm = np.linalg.norm(dirs, axis=1, keepdims=True)
        nrm[nrm == 0] = 1.0
        radii = rng.uniform(0.0, 1.0, size=(n_x, 1)) ** (1.0 / d)
        rand = dirs / nrm * radii
    probes = [np.zeros(d)]
    for i in range(d):
        for sgn in (1.0, -1.0):
            e = np.zeros(d)
            e[i] = sgn
            probes.append(e)
    if d <= 6:
        scale = 1.0 if norm == "max" else 1.0 / np.sqrt(d)
        for corner in itertools.product((-1.0, 1.0), repeat=d):
            probes.append(scale * np.asarray(corner))
    return np.vstack([rand, np.asarray(probes)])


def operator_cross_matrix(kernel: Kernel, op: SdpOperator,
                          x1, x2) -> np.ndarray:
    """P^2 x P^2 matrix of pairwise inner products of the operator's entry
    functionals anchored at ``x1`` and ``x2``."""
    P = op.size
    atoms1 = [[Atom(tuple(np.atleast_1d(x1)), op.entries[i][j])
               for j in range(P)] for i in range(P)]
    atoms2 = [[Atom(tuple(np.atleast_1d(x2)), op.entries[i][j])
               for j in range(P)] for i in range(P)]
    M = np.empty((P * P, P * P))
    for i, j in itertools.product(range(P), repeat=2):
        for k, l in itertools.product(range(P), repeat=2):
            M[i * P + j, k * P + l] = atom_inner(
                atoms1[i][j], atoms2[k][l], kernel)
    return M


def _delta_matrix(kernel, op, z, x, Mzz=None) -> np.ndarray:
    Mzz = operator_cross_matrix(kernel, op, z, z) if Mzz is None else Mzz
    Mxx = operator_cross_matrix(kernel, op, x, x)
    Mzx = operator_cross_matrix(kernel, op, z, x)
    return Mzz + Mxx - Mzx - Mzx.T


def _directions(P: int, n_u: int, seed) -> np.ndarray:
    if P == 1:
        return np.ones((1, 1))
    if P == 2:
        theta = np.arange(n_u) * np.pi / n_u
        return np.column_stack([np.cos(theta), np.sin(theta)])
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(n_u, P))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


_eta_cache: dict = {}


def _eta_cache_key(kernel, op, z, delta, norm, n_x, n_u, seed, mode):
    zkey = None if kernel.translation_invariant \
        else tuple(round(float(c), 12) for c in np.atleast_1d(z))
    return (kernel.fingerprint(), op.canonical(), zkey,
            round(float(delta), 12), norm, n_x, n_u, seed, mode)


def eta_sampled(kernel: Kernel, op: SdpOperator, z, delta: float,
                norm: str = "max", n_x: int = 50, n_u: int = 20,
                seed=0, safety: float = 0.0) -> float:
    """Sampled buffer width for an operator over the ball B(z, delta).

    Maximizes ``|v^T Delta(x) v|^(1/2)`` over sampled ``x`` in the ball and
    directions ``u`` (``v = vec(u u^T)``), where ``Delta`` collects the
    pairwise inner-product differences of the operator entries anchored at
    ``z`` and ``x``.  For size-1 operators the direction loop collapses;
    for size 2 the directions are equidistant angles on half the circle.
    The result is a lower estimate of the supremum; ``safety`` inflates it
    by ``(1 + safety)``.
    """
    if n_x < 1 or n_u < 1:
        raise ValueError("need at least one sample per loop")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if delta == 0.0:
        return 0.0
    key = _eta_cache_key(kernel, op, z, delta, norm, n_x, n_u, seed, "qf")
    raw = _eta_cache.get(key)
    if raw is None:
        raw = _eta_sampled_raw(kernel, op, z, delta, norm, n_x, n_u, seed,
                               eigen=False)
        _eta_cache[key] = raw
    return raw * (1.0 + safety)


def _eta_sampled_raw(kernel, op, z, delta, norm, n_x, n_u, seed,
                     eigen: bool) -> float:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    base = np.zeros_like(z) if kernel.translation_invariant else z
    offsets = _unit_offsets(z.size, norm, n_x, seed) * float(delta)
    P = op.size
    dirs = _directions(P, n_u, seed)
    vs = np.stack([np.outer(u, u).ravel() for u in dirs])
    Mzz = operator_cross_matrix(kernel, op, base, base)
    best = 0.0
    for off in offsets:
        D = _delta_matrix(kernel, op, base, base + off, Mzz=Mzz)
        if eigen:
            lam = float(np.max(np.linalg.eigvalsh(0.5 * (D + D.T))))
            best = max(best, max(lam, 0.0))
        else:
            quad = np.abs(np.einsum("ki,ij,kj->k", vs, D, vs))
            best = max(best, float(np.max(quad)))
    return float(np.sqrt(best))


def eta_eigen_bound(kernel: Kernel, op: SdpOperator, z, delta: float,
                    norm: str = "max", n_x: int = 50, seed=0) -> float:
    """Eigenvalue upper bound on the sampled buffer (same x-samples).

    Uses the largest eigenvalue of the symmetrized difference matrix, which
    dominates every direction quadratic form used by ``eta_sampled``.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if delta == 0.0:
        return 0.0
    key = _eta_cache_key(kernel, op, z, delta, norm, n_x, 1, seed, "eig")
    raw = _eta_cache.get(key)
    if raw is None:
        raw = _eta_sampled_raw(kernel, op, z, delta, norm, n_x, 1, seed,
                               eigen=True)
        _eta_cache[key] = raw
    return raw


def eta_for(kernel: Kernel, op: SdpOperator, z, delta: float,
            norm: str = "max", n_x: int = 50, n_u: int = 20, seed=0,
            safety: float = 0.0) -> float:
    """Dispatch: exact radial formula when available, else sampling.

    The closed form applies to point evaluation under radial kernels on
    euclidean balls; in one dimension the max-norm ball is the euclidean
    ball, and in higher dimensions the max-norm corner distance rescales
    the radius.
    """
    if _is_identity_eval(op) and kernel.is_radial:
        d = kernel.dim
        eff = float(delta) if (norm == "euclidean" or d == 1) \
            else float(delta) * np.sqrt(d)
        return eta_radial(kernel, eff)
    return eta_sampled(kernel, op, z, delta, norm=norm, n_x=n_x, n_u=n_u,
                       seed=seed, safety=safety)


# --------------------------------------------------------------------------
# Feature-space cover elements
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class OmegaElement:
    """Intersection of feature-space balls and halfspaces enclosing the
    image of one input ball under a constraint functional.

    ``balls`` holds ``(center, radius)`` pairs where ``center`` is an Atom
    or ``None`` for the origin; ``halfspaces`` holds ``(normal, offset)``
    pairs describing ``{g : <g, normal> <= offset}``.  ``diameter_bound``
    caches an upper bound on the element's diameter, used by refinement.
    """

    balls: tuple
    halfspaces: tuple
    diameter_bound: float
    source: InputBall | None = None

    def __post_init__(self):
        if not self.balls and not self.halfspaces:
            raise ValueError("element needs at least one ball or halfspace")
        for _, r in self.balls:
            if not r > 0:
                raise ValueError("feature ball radius must be positive")
        for v, _ in self.halfspaces:
            if v is None or all(abs(b) < 1e-300 for _, _, b in
                                v.functional.terms):
                raise ValueError("halfspace normal must be nonzero")


def omega_cover(kernel: Kernel, functional: DiffFunctional,
                input_cover: list[InputBall], style: str = "ball",
                n_x: int = 50, seed=0, safety: float = 0.0
                ) -> list[OmegaElement]:
    """Enclose the image of each input ball under the functional.

    ``ball`` style: one feature ball around the anchored functional with
    the sampled/closed-form buffer as radius.  ``ball_halfspace`` style
    (translation-invariant kernels only): the ambient norm ball of radius
    ``sqrt(<phi, phi>)`` intersected with ``{g : <g, phi_center> >=
    rho}``, where ``rho`` is the minimum correlation of the functional
    between the center and any point of the input ball; stored in
    ``<=`` form with the negated normal.
    """
    if style not in ("ball", "ball_halfspace"):
        raise ValueError(f"unknown omega style {style!r}")
    op = SdpOperator.scalar(functional)
    out = []
    if style == "ball_halfspace" and not kernel.translation_invariant:
        raise ValueError(
            "halfspace enclosures need a translation-invariant kernel"
        )
    r0 = None
    for ball in input_cover:
        anchor = Atom(ball.center, functional)
        if style == "ball":
            eta = eta_for(kernel, op, ball.center, ball.radius,
                          norm=ball.norm, n_x=n_x, seed=seed, safety=safety)
            if not eta > 0:
                raise ValueError(
                    "degenerate covering element (zero radius); use a "
                    "pointwise discretization instead"
                )
            out.append(OmegaElement(
                balls=((anchor, float(eta)),), halfspaces=(),
                diameter_bound=2.0 * float(eta), source=ball,
            ))
        else:
            if r0 is None:
                r0 = float(np.sqrt(max(atom_inner(anchor, anchor, kernel),
                                       0.0)))
            rho = _min_correlation(kernel, functional, ball, n_x, seed)
            rho = rho - safety * abs(rho)
            if not rho > 0:
                raise ValueError(
                    "halfspace level must stay positive; shrink the "
                    "input balls"
                )
            gap = max(r0 * r0 - (rho / r0) ** 2, 0.0)
            out.append(OmegaElement(
                balls=((None, r0),),
                halfspaces=((Atom(ball.center, functional.scaled(-1.0)),
                             -float(rho)),),
                diameter_bound=2.0 * float(np.sqrt(gap)),
                source=ball,
            ))
    return out


def _min_correlation(kernel: Kernel, functional: DiffFunctional,
                     ball: InputBall, n_x: int, seed) -> float:
    """min over x in the ball of <phi_center, phi_x>."""
    if _is_identity_eval(SdpOperator.scalar(functional)) and \
            kernel.is_radial:
        d = kernel.dim
        eff = ball.radius if (ball.norm == "euclidean" or d == 1) \
            else ball.radius * np.sqrt(d)
        return float(kernel.radial_profile(float(eff)))
    center = np.asarray(ball.center, dtype=float)
    base = np.zeros_like(center) if kernel.translation_invariant else center
    offsets = _unit_offsets(center.size, ball.norm, n_x, seed) * ball.radius
    a0 = Atom(tuple(base), functional)
    vals = [atom_inner(a0, Atom(tuple(base + off), functional), kernel)
            for off in offsets]
    return float(np.min(vals))


# --------------------------------------------------------------------------
# Refinement
# --------------------------------------------------------------------------

def refine_radius(kernel: Kernel, op: SdpOperator, z, eta_target: float,
                  delta_hi: float, norm: str = "max", n_x: int = 50,
                  n_u: int = 20, seed=0, safety: float = 0.0) -> float:
    """Largest radius whose buffer stays at or below ``eta_target``.

    Bisects on the radius (the buffer is monotone in it) to tolerance
    ``1e-6 * delta_hi``; returns ``delta_hi`` when even the full radius
    satisfies the target.
    """
    if eta_target <= 0:
        raise ValueError("eta_target must be positive")
    if delta_hi <= 0:
        raise ValueError("delta_hi must be positive")
    def f(delta):
        return eta_for(kernel, op, z, delta, norm=norm, n_x=n_x, n_u=n_u,
                       seed=seed, safety=safety)
    if f(delta_hi) <= eta_target:
        return float(delta_hi)
    lo, hi = 0.0, float(delta_hi)
    tol = 1e-6 * float(delta_hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) <= eta_target:
            lo = mid
        else:
            hi = mid
    return lo


# --------------------------------------------------------------------------
# Export
# --------------------------------------------------------------------------

def covering_to_csv(path, cover: list[InputBall],
                    etas: list[float] | None = None) -> None:
    """Dump covering centers, radii, and buffers to CSV."""
    d = len(cover[0].center) if cover else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"center_{i}" for i in range(d)] + ["delta", "eta"])
        for i, ball in enumerate(cover):
            eta = "" if etas is None else repr(float(etas[i]))
            w.writerow([repr(c) for c in ball.center]
                       + [repr(ball.radius), eta])
