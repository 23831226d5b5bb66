"""Turn a shape constraint over a compact region into finitely many rows.

A :class:`ShapeConstraint` demands that the slack matrix

    S(x) = [D_{p1,p2}(f - f0)(x)]_{p1,p2} + diag(Gamma b - b0)

stay positive semidefinite for every ``x`` in a box.  Three reductions to
finitely many conic rows are provided:

* :func:`discretize` — enforce ``S(x_m) >= 0`` at sample points only (a
  relaxation: nothing is guaranteed between points),
* :func:`tighten_soc` — enforce ``S(x_m) >= eta_m ||f - f0|| I`` at ball
  centers, where ``eta_m`` is the covering module's buffer for the ball;
  a guaranteed tightening (the solution is feasible on the whole region),
* :func:`tighten_omega` — enforce inclusion-style rows built from
  feature-space enclosures (guaranteed as well, often tighter).

Records carry provenance ``(constraint index, element index)`` so assembled
rows, solver duals, and refinement bookkeeping can be traced back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .atoms import Atom, Model, SdpOperator, apply_functional
from .covering import InputBall, OmegaElement

__all__ = [
    "ShapeConstraint",
    "LinearRecord",
    "SocBufferRecord",
    "Rsoc2x2Record",
    "InclusionRecord",
    "discretize",
    "tighten_soc",
    "tighten_omega",
    "verify_pointwise",
]

_PSD_HOOK_MSG = (
    "operators larger than 2x2 need a PSD-capable external solver; "
    "the embedded cone set stops at rotated second-order cones"
)


# --------------------------------------------------------------------------
# Constraint description
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ShapeConstraint:
    """Affine matrix shape constraint over an axis-aligned box.

    ``operator`` holds the functionals filling the slack matrix; ``bias_map``
    (P x B) and ``offset`` (length P) give the affine part
    ``diag(bias_map @ b - offset)``; ``shift`` is the fixed model subtracted
    from the unknown before the operator applies (``None`` means zero).
    """

    region: tuple
    operator: SdpOperator
    offset: tuple
    bias_map: tuple = ()
    shift: Model | None = None
    mode: str = "soc_ball"

    def __post_init__(self):
        region = tuple((float(lo), float(hi)) for lo, hi in self.region)
        for lo, hi in region:
            if hi < lo:
                raise ValueError("region has hi < lo on some axis")
        object.__setattr__(self, "region", region)
        P = self.operator.size
        off = tuple(
            float(v)
            for v in np.atleast_1d(np.asarray(self.offset, dtype=float)).ravel()
        )
        if len(off) != P:
            raise ValueError("offset length must match operator size")
        object.__setattr__(self, "offset", off)
        gm = np.atleast_2d(np.asarray(self.bias_map, dtype=float)) \
            if len(self.bias_map) else np.zeros((P, 0))
        if gm.shape[0] != P:
            raise ValueError("bias_map row count must match operator size")
        object.__setattr__(
            self, "bias_map", tuple(tuple(row) for row in gm))
        if self.mode not in ("discretized", "soc_ball", "omega"):
            raise ValueError(f"unknown constraint mode {self.mode!r}")

    @property
    def size(self) -> int:
        return self.operator.size

    @property
    def bias_dim(self) -> int:
        return len(self.bias_map[0]) if self.bias_map else 0

    def gamma(self) -> np.ndarray:
        return np.asarray(self.bias_map, dtype=float).reshape(
            self.size, self.bias_dim)

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return all(lo - tol <= v <= hi + tol
                   for v, (lo, hi) in zip(x, self.region))

    def shift_value(self, functional, x) -> float:
        if self.shift is None:
            return 0.0
        return apply_functional(functional, self.shift, x)


# --------------------------------------------------------------------------
# Conic constraint records
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearRecord:
    """Scalar affine row ``<f, atom> + gamma.b - offset - shift_val >= 0``
    (or ``= 0`` when ``equality``)."""

    atom: Atom
    gamma: tuple
    offset: float
    shift_val: float = 0.0
    equality: bool = False
    provenance: tuple = ()

    def to_json(self) -> dict:
        return {
            "variant": "linear",
            "atom": self.atom.to_json(),
            "gamma": list(self.gamma),
            "offset": self.offset,
            "shift_val": self.shift_val,
            "equality": self.equality,
            "provenance": list(self.provenance),
        }


@dataclass(frozen=True)
class SocBufferRecord:
    """Buffered row ``<f - f0, atom> + gamma.b - offset >= eta ||f - f0||``.

    The norm is shared across records of the same constraint through an
    epigraph variable introduced at assembly time.
    """

    atom: Atom
    eta: float
    gamma: tuple
    offset: float
    shift_val: float = 0.0
    provenance: tuple = ()

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("buffer width must be nonnegative")

    def to_json(self) -> dict:
        return {
            "variant": "soc_buffer",
            "atom": self.atom.to_json(),
            "eta": self.eta,
            "gamma": list(self.gamma),
            "offset": self.offset,
            "shift_val": self.shift_val,
            "provenance": list(self.provenance),
        }


@dataclass(frozen=True)
class Rsoc2x2Record:
    """2x2 slack-matrix block ``M - eta*t*I >= 0`` encoded exactly.

    ``M[p,q] = <f - f0, atoms[p][q]> + (gamma b - offset)[p] delta_{pq}``.
    Assembly emits two nonnegative rows for the diagonal and one rotated
    cone ``2 (M11 - eta t)(M22 - eta t) >= 2 M12^2``.
    """

    atoms: tuple  # ((a11, a12), (a12, a22))
    eta: float
    gamma: tuple  # 2 x B
    offset: tuple  # length 2
    shift_vals: tuple = ((0.0, 0.0), (0.0, 0.0))
    provenance: tuple = ()

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("buffer width must be nonnegative")
        if len(self.atoms) != 2 or any(len(r) != 2 for r in self.atoms):
            raise ValueError("need a 2x2 atom block")

    def to_json(self) -> dict:
        return {
            "variant": "rsoc_2x2",
            "atoms": [[a.to_json() for a in row] for row in self.atoms],
            "eta": self.eta,
            "gamma": [list(r) for r in self.gamma],
            "offset": list(self.offset),
            "shift_vals": [list(r) for r in self.shift_vals],
            "provenance": list(self.provenance),
        }


@dataclass(frozen=True)
class InclusionRecord:
    """Feature-enclosure row for a scalar constraint.

    Demands ``gamma.b - offset - xi*rho >= r0 ||f - f0 + xi*normal||`` with
    one auxiliary ``xi >= 0``; ``rho = +inf`` pins ``xi = 0`` (pure ambient
    ball).  ``normal`` carries its own sign in the functional.
    """

    r0: float
    normal: Atom
    rho: float
    gamma: tuple
    offset: float
    diameter: float = 0.0
    provenance: tuple = ()

    def __post_init__(self):
        if not self.r0 > 0:
            raise ValueError("ambient ball radius must be positive")

    @property
    def xi_count(self) -> int:
        return 0 if math.isinf(self.rho) else 1

    def to_json(self) -> dict:
        return {
            "variant": "inclusion",
            "r0": self.r0,
            "normal": self.normal.to_json(),
            "rho": self.rho,
            "gamma": list(self.gamma),
            "offset": self.offset,
            "diameter": self.diameter,
            "provenance": list(self.provenance),
        }


# --------------------------------------------------------------------------
# Reductions
# --------------------------------------------------------------------------

def _gamma_rows(c: ShapeConstraint) -> np.ndarray:
    return c.gamma()


def discretize(c: ShapeConstraint, points, constraint_index: int = 0
               ) -> list:
    """Pointwise relaxation: enforce the slack matrix at sample points only."""
    P = c.size
    if P > 2:
        raise ValueError(_PSD_HOOK_MSG)
    gm = _gamma_rows(c)
    out = []
    for m, x in enumerate(points):
        if not c.contains(x):
            raise ValueError(f"discretization point {x!r} outside region")
        x = tuple(float(v) for v in np.atleast_1d(x))
        if P == 1:
            func = c.operator.entries[0][0]
            out.append(LinearRecord(
                atom=Atom(x, func), gamma=tuple(gm[0]), offset=c.offset[0],
                shift_val=c.shift_value(func, x),
                provenance=(constraint_index, m),
            ))
        else:
            out.append(_rsoc_record(c, x, 0.0, (constraint_index, m)))
    return out


def _rsoc_record(c: ShapeConstraint, x, eta: float, prov) -> Rsoc2x2Record:
    gm = _gamma_rows(c)
    ent = c.operator.entries
    atoms = tuple(tuple(Atom(x, ent[i][j]) for j in range(2))
                  for i in range(2))
    shift_vals = tuple(tuple(c.shift_value(ent[i][j], x) for j in range(2))
                       for i in range(2))
    return Rsoc2x2Record(
        atoms=atoms, eta=float(eta), gamma=tuple(tuple(r) for r in gm),
        offset=c.offset, shift_vals=shift_vals, provenance=tuple(prov),
    )


def tighten_soc(c: ShapeConstraint, cover: list[InputBall], etas,
                constraint_index: int = 0) -> list:
    """Ball-covering tightening: buffer each anchor row by its eta."""
    P = c.size
    if P > 2:
        raise ValueError(_PSD_HOOK_MSG)
    if len(etas) != len(cover):
        raise ValueError("need one buffer width per covering ball")
    gm = _gamma_rows(c)
    out = []
    for m, (ball, eta) in enumerate(zip(cover, etas)):
        if eta is None:
            raise ValueError(f"missing buffer width for element {m}")
        if not c.contains(ball.center):
            raise ValueError(f"anchor {ball.center!r} outside region")
        if P == 1:
            func = c.operator.entries[0][0]
            out.append(SocBufferRecord(
                atom=Atom(ball.center, func), eta=float(eta),
                gamma=tuple(gm[0]), offset=c.offset[0],
                shift_val=c.shift_value(func, ball.center),
                provenance=(constraint_index, m),
            ))
        else:
            out.append(_rsoc_record(c, ball.center, eta,
                                    (constraint_index, m)))
    return out


def tighten_omega(c: ShapeConstraint, omegas: list[OmegaElement],
                  constraint_index: int = 0) -> list:
    """Inclusion tightening from feature enclosures (scalar constraints).

    A single atom-centered ball maps to the buffered anchor row (the two
    reductions coincide there); the ambient ball plus one halfspace maps to
    an :class:`InclusionRecord` with auxiliary ``xi``.
    """
    if c.size != 1:
        raise ValueError("feature enclosures apply to scalar constraints")
    gm = _gamma_rows(c)
    out = []
    for m, elem in enumerate(omegas):
        nb, nh = len(elem.balls), len(elem.halfspaces)
        prov = (constraint_index, m)
        if (nb, nh) == (1, 0):
            center, radius = elem.balls[0]
            if center is None:
                raise ValueError(
                    "origin-ball element without halfspace is vacuous"
                )
            out.append(SocBufferRecord(
                atom=center, eta=float(radius), gamma=tuple(gm[0]),
                offset=c.offset[0],
                shift_val=c.shift_value(center.functional, center.x),
                provenance=prov,
            ))
        elif (nb, nh) == (1, 1) and elem.balls[0][0] is None:
            normal, rho = elem.halfspaces[0]
            out.append(InclusionRecord(
                r0=float(elem.balls[0][1]), normal=normal, rho=float(rho),
                gamma=tuple(gm[0]), offset=c.offset[0],
                diameter=float(elem.diameter_bound), provenance=prov,
            ))
        else:
            raise ValueError("general inclusion not implemented")
    return out


# --------------------------------------------------------------------------
# Verification
# --------------------------------------------------------------------------

def _functional_grid(model: Model, functional, X: np.ndarray) -> np.ndarray:
    """Vectorized ``functional(model)(x)`` over grid rows ``X``."""
    kernel = model.kernel
    out = np.zeros(X.shape[0])
    for j, atom in enumerate(model.basis):
        a_j = model.coeffs[j]
        if a_j == 0.0:
            continue
        acc = np.zeros(X.shape[0])
        for qf, rf, bf in functional.terms:
            for qa, ra, ba in atom.functional.terms:
                acc += bf * ba * kernel.eval_partial_many(
                    rf, ra, qf, qa, X, atom.x)
        out += a_j * acc
    return out


def _region_grid(region, grid_res: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, max(int(grid_res), 2))
            for lo, hi in region]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return grid.reshape(-1, len(region))


def verify_pointwise(model: Model, c: ShapeConstraint, grid_res: int) -> dict:
    """Evaluate the constraint slack on a dense grid of the region.

    Returns the most negative slack (scalar constraints) or most negative
    eigenvalue (matrix constraints), where it occurs, and the clamped
    violation ``max(0, -min_slack)``.
    """
    if grid_res < 2:
        raise ValueError("grid resolution must be at least 2 per axis")
    X = _region_grid(c.region, grid_res)
    P = c.size
    gm = _gamma_rows(c)
    B = c.bias_dim
    bias = np.zeros(B)
    if B and model.bias.size:
        bias = np.asarray(model.bias, dtype=float)[:B]
    affine = gm @ bias - np.asarray(c.offset)
    if P == 1:
        func = c.operator.entries[0][0]
        vals = _functional_grid(model, func, X)
        if c.shift is not None:
            vals = vals - _functional_grid(c.shift, func, X)
        slack = vals + affine[0]
        idx = int(np.argmin(slack))
        min_eig = float(slack[idx])
    else:
        entry_vals = {}
        for i in range(P):
            for j in range(i, P):
                func = c.operator.entries[i][j]
                v = _functional_grid(model, func, X)
                if c.shift is not None:
                    v = v - _functional_grid(c.shift, func, X)
                entry_vals[(i, j)] = v
        min_eig, idx = np.inf, 0
        for n in range(X.shape[0]):
            M = np.empty((P, P))
            for i in range(P):
                for j in range(i, P):
                    M[i, j] = M[j, i] = entry_vals[(i, j)][n]
                M[i, i] += affine[i]
            lam = float(np.linalg.eigvalsh(M)[0])
            if lam < min_eig:
                min_eig, idx = lam, n
    return {
        "maxViolation": max(0.0, -min_eig),
        "worstPoint": tuple(float(v) for v in X[idx]),
        "minEig": float(min_eig),
    }
