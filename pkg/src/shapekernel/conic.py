"""Embedded dense primal-dual interior-point solver.

Solves convex quadratic cone programs

    minimize    (1/2) x^T P x + q^T x + const
    subject to  A_eq x = b_eq
                G x + s = h,   s in C

where ``C`` is a product of nonnegative-orthant, second-order, and rotated
second-order cones.  Rotated cones are mapped to plain second-order cones by
the self-inverse orthogonal isometry ``(u, v, w) -> ((u+v)/sqrt2,
(u-v)/sqrt2, w)`` before the iteration starts.

The iteration is a Mehrotra-style predictor-corrector with Nesterov-Todd
scaling, dense linear algebra, and infeasible start: problem sizes here are a
few thousand variables at most, so each Newton step is a Cholesky-backed
Schur-complement solve.  Everything is deterministic for fixed inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import lsq_linear

__all__ = [
    "ConeBlock",
    "ConeProgram",
    "SolverSettings",
    "Solution",
    "solve",
    "kkt_residuals",
]

_SQRT2 = np.sqrt(2.0)


def _jsonable(v):
    """Best-effort conversion to JSON-encodable values (None if impossible)."""
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    if isinstance(v, (list, tuple)):
        return [_jsonable(item) for item in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(val) for k, val in v.items()}
    if isinstance(v, np.generic):
        return v.item()
    return None


# --------------------------------------------------------------------------
# Program description
# --------------------------------------------------------------------------

@dataclass
class ConeBlock:
    """One cone-constrained row block ``h - G x in cone(kind)``."""

    kind: str  # 'nonneg' | 'soc' | 'rsoc'
    G: np.ndarray
    h: np.ndarray
    provenance: tuple = ()

    def __post_init__(self):
        self.G = np.atleast_2d(np.asarray(self.G, dtype=float))
        self.h = np.asarray(self.h, dtype=float).ravel()
        if self.kind not in ("nonneg", "soc", "rsoc"):
            raise ValueError(f"unsupported cone kind {self.kind!r}")
        if self.G.shape[0] != self.h.size:
            raise ValueError("cone block G/h row mismatch")
        if self.kind == "rsoc" and self.h.size < 3:
            raise ValueError("rotated cone blocks need dimension >= 3")


@dataclass
class ConeProgram:
    """Finite-dimensional conic program with provenance-tagged rows."""

    n: int
    P: np.ndarray | None = None
    q: np.ndarray | None = None
    const: float = 0.0
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    eq_provenance: list = field(default_factory=list)
    blocks: list[ConeBlock] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.P is None:
            self.P = np.zeros((self.n, self.n))
        self.P = np.asarray(self.P, dtype=float)
        if self.q is None:
            self.q = np.zeros(self.n)
        self.q = np.asarray(self.q, dtype=float).ravel()
        if self.A_eq is None:
            self.A_eq = np.zeros((0, self.n))
        self.A_eq = np.atleast_2d(np.asarray(self.A_eq, dtype=float))
        if self.A_eq.size == 0:
            self.A_eq = self.A_eq.reshape(0, self.n)
        if self.b_eq is None:
            self.b_eq = np.zeros(0)
        self.b_eq = np.asarray(self.b_eq, dtype=float).ravel()
        if self.P.shape != (self.n, self.n):
            raise ValueError("objective Hessian has wrong shape")
        if self.q.size != self.n:
            raise ValueError("objective gradient has wrong length")
        for blk in self.blocks:
            if blk.G.shape[1] != self.n:
                raise ValueError(
                    f"cone block {blk.provenance} has {blk.G.shape[1]} "
                    f"columns, expected {self.n}"
                )

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.P @ x + self.q @ x + self.const)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "P": self.P.tolist(),
            "q": self.q.tolist(),
            "const": self.const,
            "A_eq": self.A_eq.tolist(),
            "b_eq": self.b_eq.tolist(),
            "blocks": [
                {
                    "kind": b.kind,
                    "G": b.G.tolist(),
                    "h": b.h.tolist(),
                    "provenance": _jsonable(b.provenance),
                }
                for b in self.blocks
            ],
            "meta": {k: _jsonable(v) for k, v in self.meta.items()
                     if _jsonable(v) is not None},
        }

    def dump_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)


@dataclass
class SolverSettings:
    max_iter: int = 200
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    step_fraction: float = 0.99

    def __post_init__(self):
        if min(self.feas_tol, self.gap_tol) <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class Solution:
    x: np.ndarray
    y_eq: np.ndarray
    z: np.ndarray
    s: np.ndarray
    status: str
    objective: float
    residuals: dict
    iterations: int
    block_slices: list[slice]
    block_kinds: list[str]

    def block_slack(self, i: int) -> np.ndarray:
        return self.s[self.block_slices[i]]

    def block_dual(self, i: int) -> np.ndarray:
        return self.z[self.block_slices[i]]


# --------------------------------------------------------------------------
# Cone bookkeeping (canonical form: nonneg entries first, then SOC blocks)
# --------------------------------------------------------------------------

class _Cones:
    def __init__(self, nonneg: int, soc_dims: list[int]):
        self.l = nonneg
        self.soc_dims = soc_dims
        self.m = nonneg + sum(soc_dims)
        self.soc_slices = []
        start = nonneg
        for dim in soc_dims:
            self.soc_slices.append(slice(start, start + dim))
            start += dim
        # Barrier degree: each nonneg entry and each SOC block counts one.
        self.degree = max(nonneg + len(soc_dims), 1)

    def identity(self) -> np.ndarray:
        e = np.zeros(self.m)
        e[: self.l] = 1.0
        for sl in self.soc_slices:
            e[sl.start] = 1.0
        return e


def _soc_residual(v: np.ndarray) -> float:
    """v0 - ||v1|| : positive inside the cone."""
    return v[0] - np.linalg.norm(v[1:])


def _max_step(v: np.ndarray, dv: np.ndarray, cones: _Cones) -> float:
    """Largest alpha with v + alpha*dv in the cone (inf -> 1e18)."""
    alpha = 1e18
    if cones.l:
        neg = dv[: cones.l] < 0
        if np.any(neg):
            alpha = min(alpha, float(
                np.min(-v[: cones.l][neg] / dv[: cones.l][neg])
            ))
    for sl in cones.soc_slices:
        vb, db = v[sl], dv[sl]
        # f(a) = ||vb1 + a db1||^2 - (vb0 + a db0)^2 is negative strictly
        # inside the cone; the boundary is hit at the first positive root.
        a = db[1:] @ db[1:] - db[0] * db[0]
        b = 2.0 * (vb[1:] @ db[1:] - vb[0] * db[0])
        c = vb[1:] @ vb[1:] - vb[0] * vb[0]
        step = 1e18
        if abs(a) < 1e-300:
            if b > 0:
                step = max(-c / b, 0.0)
        else:
            disc = b * b - 4.0 * a * c
            if disc >= 0:
                sq = np.sqrt(disc)
                pos = [r for r in ((-b - sq) / (2 * a), (-b + sq) / (2 * a))
                       if r > 0]
                if pos:
                    step = min(pos)
        if db[0] < 0:
            step = min(step, -vb[0] / db[0])
        alpha = min(alpha, step)
    return alpha


# --------------------------------------------------------------------------
# Nesterov-Todd scaling
# --------------------------------------------------------------------------

class _Scaling:
    """Blockwise NT scaling point: W z = W^{-1} s = lambda."""

    def __init__(self, s: np.ndarray, z: np.ndarray, cones: _Cones):
        self.cones = cones
        l = cones.l
        self.w_nn = np.sqrt(s[:l] / z[:l]) if l else np.zeros(0)
        self.lmbda = np.zeros(cones.m)
        if l:
            self.lmbda[:l] = np.sqrt(s[:l] * z[:l])
        self.soc = []  # per-block (eta, wbar)
        for sl in cones.soc_slices:
            sb, zb = s[sl], z[sl]
            ds = np.sqrt(max(sb[0] ** 2 - sb[1:] @ sb[1:], 1e-300))
            dz = np.sqrt(max(zb[0] ** 2 - zb[1:] @ zb[1:], 1e-300))
            sbar, zbar = sb / ds, zb / dz
            gamma = np.sqrt((1.0 + sbar @ zbar) / 2.0)
            wbar = np.empty_like(sb)
            wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma)
            wbar[1:] = (sbar[1:] - zbar[1:]) / (2.0 * gamma)
            eta = np.sqrt(ds / dz)
            self.soc.append((eta, wbar))
            self.lmbda[sl] = self._apply_soc(eta, wbar, zb)

    @staticmethod
    def _apply_soc(eta: float, wbar: np.ndarray, u: np.ndarray) -> np.ndarray:
        # W u with W = eta * [[w0, w1^T], [w1, I + w1 w1^T / (1 + w0)]]
        out = np.empty_like(u)
        dot = wbar[1:] @ u[1:]
        out[0] = wbar[0] * u[0] + dot
        out[1:] = u[1:] + (u[0] + dot / (1.0 + wbar[0])) * wbar[1:]
        return eta * out

    @staticmethod
    def _apply_soc_inv(eta: float, wbar: np.ndarray,
                       u: np.ndarray) -> np.ndarray:
        # W^{-1} = (1/eta) * J W_bar J
        out = np.empty_like(u)
        dot = wbar[1:] @ u[1:]
        out[0] = wbar[0] * u[0] - dot
        out[1:] = u[1:] + (-u[0] + dot / (1.0 + wbar[0])) * wbar[1:]
        return out / eta

    def apply(self, u: np.ndarray) -> np.ndarray:
        """W u."""
        out = np.empty_like(u)
        l = self.cones.l
        out[:l] = self.w_nn * u[:l]
        for (eta, wbar), sl in zip(self.soc, self.cones.soc_slices):
            out[sl] = self._apply_soc(eta, wbar, u[sl])
        return out

    def apply_inv(self, u: np.ndarray) -> np.ndarray:
        """W^{-1} u (= W^{-T} u; W is symmetric)."""
        out = np.empty_like(u)
        l = self.cones.l
        out[:l] = u[:l] / self.w_nn
        for (eta, wbar), sl in zip(self.soc, self.cones.soc_slices):
            out[sl] = self._apply_soc_inv(eta, wbar, u[sl])
        return out

    def apply_w2inv_mat(self, M: np.ndarray) -> np.ndarray:
        """(W^T W)^{-1} M for a matrix M, blockwise closed form."""
        out = np.empty_like(M)
        l = self.cones.l
        if l:
            out[:l] = M[:l] / (self.w_nn ** 2)[:, None]
        for (eta, wbar), sl in zip(self.soc, self.cones.soc_slices):
            blk = M[sl]
            wt = np.empty_like(wbar)
            wt[0], wt[1:] = wbar[0], -wbar[1:]
            jblk = np.vstack([blk[:1], -blk[1:]])
            out[sl] = (2.0 * np.outer(wt, wt @ blk) - jblk) / (eta * eta)
        return out


def _jordan_product(u: np.ndarray, v: np.ndarray, cones: _Cones) -> np.ndarray:
    out = np.empty(cones.m)
    l = cones.l
    out[:l] = u[:l] * v[:l]
    for sl in cones.soc_slices:
        ub, vb = u[sl], v[sl]
        out[sl.start] = ub @ vb
        out[sl.start + 1: sl.stop] = ub[0] * vb[1:] + vb[0] * ub[1:]
    return out


def _jordan_solve(lmbda: np.ndarray, d: np.ndarray,
                  cones: _Cones) -> np.ndarray:
    """Solve lambda o u = d blockwise."""
    out = np.empty(cones.m)
    l = cones.l
    # lambda is interior in exact arithmetic; floor the divisors relative
    # to the iterate's scale so components that underflow near convergence
    # (primal-dual degenerate blocks) give large-but-finite quotients
    # instead of inf, which would poison later products with NaNs.
    floor = 1e-30 * (1.0 + float(np.max(np.abs(lmbda), initial=0.0)))
    out[:l] = d[:l] / np.maximum(lmbda[:l], floor)
    for sl in cones.soc_slices:
        lb, db = lmbda[sl], d[sl]
        det = max(lb[0] ** 2 - lb[1:] @ lb[1:], floor * floor)
        lb0 = max(lb[0], floor)
        u0 = (lb[0] * db[0] - lb[1:] @ db[1:]) / det
        out[sl.start] = u0
        out[sl.start + 1: sl.stop] = (db[1:] - u0 * lb[1:]) / lb0
    return out


# --------------------------------------------------------------------------
# Canonicalization (rotated cones -> plain SOC)
# --------------------------------------------------------------------------

def _rsoc_to_soc(G: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    G2, h2 = G.copy(), h.copy()
    G2[0] = (G[0] + G[1]) / _SQRT2
    G2[1] = (G[0] - G[1]) / _SQRT2
    h2[0] = (h[0] + h[1]) / _SQRT2
    h2[1] = (h[0] - h[1]) / _SQRT2
    return G2, h2


def _canonicalize(prog: ConeProgram):
    """Stack blocks as [all nonneg rows; soc blocks in order]."""
    nn_G, nn_h, nn_rows = [], [], []
    soc_G, soc_h, soc_dims, soc_blocks = [], [], [], []
    for bi, blk in enumerate(prog.blocks):
        if blk.kind == "nonneg":
            nn_G.append(blk.G)
            nn_h.append(blk.h)
            nn_rows.append((bi, blk.h.size))
        elif blk.kind == "soc":
            soc_G.append(blk.G)
            soc_h.append(blk.h)
            soc_dims.append(blk.h.size)
            soc_blocks.append(bi)
        else:  # rsoc
            G2, h2 = _rsoc_to_soc(blk.G, blk.h)
            soc_G.append(G2)
            soc_h.append(h2)
            soc_dims.append(blk.h.size)
            soc_blocks.append(bi)
    parts_G = nn_G + soc_G
    parts_h = nn_h + soc_h
    if parts_G:
        G = np.vstack(parts_G)
        h = np.concatenate(parts_h)
    else:
        G = np.zeros((0, prog.n))
        h = np.zeros(0)
    cones = _Cones(sum(n for _, n in nn_rows), soc_dims)
    return G, h, cones, nn_rows, soc_blocks


def _scatter(prog: ConeProgram, canon_vec: np.ndarray, nn_rows, soc_blocks,
             cones: _Cones, rotate_back: bool) -> np.ndarray:
    """Map a canonical-order m-vector back to original block order."""
    out = np.empty(canon_vec.size)
    slices = _original_slices(prog)
    pos = 0
    for bi, nrows in nn_rows:
        out[slices[bi]] = canon_vec[pos: pos + nrows]
        pos += nrows
    for bi, sl in zip(soc_blocks, cones.soc_slices):
        v = canon_vec[sl].copy()
        if rotate_back and prog.blocks[bi].kind == "rsoc":
            v0 = (v[0] + v[1]) / _SQRT2
            v1 = (v[0] - v[1]) / _SQRT2
            v[0], v[1] = v0, v1
        out[slices[bi]] = v
    return out


def _original_slices(prog: ConeProgram) -> list[slice]:
    slices, pos = [], 0
    for blk in prog.blocks:
        slices.append(slice(pos, pos + blk.h.size))
        pos += blk.h.size
    return slices


# --------------------------------------------------------------------------
# Newton system
# --------------------------------------------------------------------------

def _chol_solve_factory(H: np.ndarray):
    """Cholesky factor with escalating static regularization."""
    n = H.shape[0]
    scale = max(float(np.trace(H)) / max(n, 1), 1.0)
    reg = 0.0
    while True:
        try:
            L = np.linalg.cholesky(H + reg * np.eye(n) if reg else H)
            break
        except np.linalg.LinAlgError:
            reg = max(reg * 100.0, 1e-12 * scale)
            if reg > 1e-4 * scale:
                raise
    def solve(rhs: np.ndarray) -> np.ndarray:
        tmp = np.linalg.solve(L, rhs)
        return np.linalg.solve(L.T, tmp)
    return solve


# --------------------------------------------------------------------------
# Main solver
# --------------------------------------------------------------------------

def solve(prog: ConeProgram, settings: SolverSettings | None = None,
          x0: np.ndarray | None = None) -> Solution:
    """Solve the cone program; see module docstring for the method."""
    st = settings or SolverSettings()
    n = prog.n
    P, q = prog.P, prog.q
    A, b = prog.A_eq, prog.b_eq
    p = A.shape[0]
    G, h, cones, nn_rows, soc_blocks = _canonicalize(prog)
    m = cones.m

    if m == 0:
        return _solve_equality_qp(prog, st, A, b)

    # Infeasible start: x from the warm start (or zero), multipliers at the
    # cone identity.  The iteration drives the residuals to zero itself.
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    if x.size != n:
        raise ValueError("warm-start vector has wrong length")
    y = np.zeros(p)
    e = cones.identity()
    s = e.copy()
    z = e.copy()

    bnorm = max(1.0, float(np.linalg.norm(b, np.inf)) if p else 0.0)
    hnorm = max(1.0, float(np.linalg.norm(h, np.inf)) if m else 0.0)
    qnorm = max(1.0, float(np.linalg.norm(q, np.inf)))

    status = "max_iter"
    iters = 0
    best_dres = np.inf
    dual_stall = 0
    x_prev, y_prev, s_prev, z_prev = x, y, s, z
    for it in range(st.max_iter):
        iters = it + 1
        rx = P @ x + q + G.T @ z + (A.T @ y if p else 0.0)
        ry = A @ x - b if p else np.zeros(0)
        rz = G @ x + s - h
        cgap = float(s @ z)
        pobj = prog.objective(x)

        pres = float(np.linalg.norm(rz, np.inf)) / hnorm
        if p:
            pres = max(pres, float(np.linalg.norm(ry, np.inf)) / bnorm)
        dres = float(np.linalg.norm(rx, np.inf)) / qnorm
        relgap = cgap / max(1.0, abs(pobj))

        if not (np.isfinite(pobj) and np.isfinite(cgap)):
            x, y, s, z = x_prev, y_prev, s_prev, z_prev
            break
        if pres <= st.feas_tol and dres <= st.feas_tol and relgap <= st.gap_tol:
            status = "optimal"
            break
        if _infeasibility_certificate(A, b, G, h, y, z, st.feas_tol):
            status = "infeasible"
            break
        if (
            float(np.linalg.norm(x, np.inf)) >= 1e8
            and pres <= st.feas_tol
            and pobj <= -1e8
        ):
            status = "unbounded"
            break
        if pres <= st.feas_tol and relgap <= st.gap_tol:
            # Primal and gap are done; only dual stationarity is lagging.
            # If it stops improving the iteration is churning on a
            # degenerate face -- exit and let the dual polish finish.
            if dres < 0.5 * best_dres:
                best_dres = dres
                dual_stall = 0
            else:
                dual_stall += 1
            if dual_stall >= 15:
                break
        x_prev, y_prev, s_prev, z_prev = x, y, s, z

        # Near a degenerate face the Nesterov-Todd scaling blows up and the
        # direction solve can run through inf/nan.  Compute it with the FP
        # traps off and bail out of the loop if the result is not finite:
        # the current iterate is still the last accepted one, and the dual
        # polish below can usually finish from it.
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            W = _Scaling(s, z, cones)
            lmbda = W.lmbda
            mu = cgap / cones.degree

            W2invG = W.apply_w2inv_mat(G)
            H = _sym(P + G.T @ W2invG)
            if not np.all(np.isfinite(H)):
                break
            try:
                hsolve = _chol_solve_factory(H)
            except np.linalg.LinAlgError:
                break

            if p:
                HinvAt = np.column_stack([hsolve(A[i]) for i in range(p)])
                S = A @ HinvAt
                s_solve = _chol_solve_factory(_sym(S))

            def newton(bx, by, bz, d):
                # Solve   P dx + A^T dy + G^T dz = bx
                #         A dx                   = by
                #         G dx + ds              = bz
                #         lambda o (W dz + W^{-1} ds) = d
                # by eliminating ds = W(g - W dz), g = lambda \ d, then dz,
                # leaving the symmetric reduced system in (dx, dy).
                g = _jordan_solve(lmbda, d, cones)
                wg_minus_bz = W.apply(g) - bz
                rx_mod = bx - G.T @ W.apply_w2inv_mat(
                    wg_minus_bz.reshape(-1, 1)).ravel()
                if p:
                    t = hsolve(rx_mod)
                    dy = s_solve(A @ t - by)
                    dx = t - HinvAt @ dy
                else:
                    dy = np.zeros(0)
                    dx = hsolve(rx_mod)
                dz = W.apply_w2inv_mat(
                    (G @ dx + wg_minus_bz).reshape(-1, 1)).ravel()
                ds = bz - G @ dx
                return dx, dy, dz, ds

            # --- affine (predictor) direction
            d_aff = -_jordan_product(lmbda, lmbda, cones)
            dxa, dya, dza, dsa = newton(-rx, -ry, -rz, d_aff)
            alpha_aff = min(
                1.0,
                _max_step(s, dsa, cones),
                _max_step(z, dza, cones),
            )
            mu_aff = float((s + alpha_aff * dsa) @ (z + alpha_aff * dza))
            mu_aff /= cones.degree
            sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3)) if mu > 0 else 0.0

            # --- combined (corrector) direction
            corr = _jordan_product(W.apply_inv(dsa), W.apply(dza), cones)
            d_comb = d_aff - corr + sigma * mu * e
            dx, dy, dz, ds = newton(-rx, -ry, -rz, d_comb)
            alpha = min(
                1.0,
                st.step_fraction * _max_step(s, ds, cones),
                st.step_fraction * _max_step(z, dz, cones),
            )
        if not (np.isfinite(alpha) and np.all(np.isfinite(dx))
                and np.all(np.isfinite(ds)) and np.all(np.isfinite(dz))
                and np.all(np.isfinite(dy))):
            break
        for _ in range(10):
            s_new, z_new = s + alpha * ds, z + alpha * dz
            if _strictly_interior(s_new, cones) and \
                    _strictly_interior(z_new, cones):
                break
            alpha *= 0.8
        x = x + alpha * dx
        y = y + alpha * dy
        s = s + alpha * ds
        z = z + alpha * dz

    if status == "max_iter":
        # The loop ended without a certificate.  If the primal point is
        # feasible, try to reconstruct exact multipliers from its active
        # set; degenerate programs often converge in x long before the
        # dual iterate settles.
        rz = G @ x + s - h
        pres = float(np.linalg.norm(rz, np.inf)) / hnorm
        if p:
            pres = max(pres, float(np.linalg.norm(A @ x - b, np.inf)) / bnorm)
        if pres <= st.feas_tol:
            polished = _dual_polish(P, q, A, G, h, x, s, cones,
                                    st.feas_tol, qnorm)
            if polished is not None:
                y2, z2 = polished
                cgap2 = abs(float(s @ z2))
                if cgap2 / max(1.0, abs(prog.objective(x))) <= st.gap_tol:
                    y, z = y2, z2
                    status = "optimal"

    z_orig = _scatter(prog, z, nn_rows, soc_blocks, cones, rotate_back=True)
    s_orig = _scatter(prog, s, nn_rows, soc_blocks, cones, rotate_back=True)
    residuals = _final_residuals(prog, x, y, z_orig, s_orig)
    return Solution(
        x=x, y_eq=y, z=z_orig, s=s_orig, status=status,
        objective=prog.objective(x), residuals=residuals,
        iterations=iters, block_slices=_original_slices(prog),
        block_kinds=[blk.kind for blk in prog.blocks],
    )


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def _strictly_interior(v: np.ndarray, cones: _Cones) -> bool:
    if cones.l and np.min(v[: cones.l]) <= 0:
        return False
    for sl in cones.soc_slices:
        if _soc_residual(v[sl]) <= 0:
            return False
    return True


def _dual_polish(P, q, A, G, h, x, s, cones, feas_tol, qnorm):
    """Rebuild multipliers from the active set at a converged primal point.

    Nearly parallel covering rows and interval-valued enclosure auxiliaries
    make the endgame complementarity degenerate: the primal settles on the
    optimum while the dual estimate churns.  At such a point the exact
    multipliers solve a small sign-constrained least-squares problem over
    the active nonnegative rows (one weight each) and the active
    second-order blocks (one weight along the reflected slack ray).
    Returns ``(y, z)`` on success, ``None`` when no certifying dual exists
    at the requested tolerance.
    """
    grad = P @ x + q
    l = cones.l
    act = 1e-5
    cols: list[np.ndarray] = []
    lower: list[float] = []
    nn_idx: list[int] = []
    ray_blocks: list[tuple[slice, np.ndarray]] = []
    if l:
        for i in np.where(s[:l] <= act * (1.0 + np.abs(h[:l])))[0]:
            cols.append(G[i])
            lower.append(0.0)
            nn_idx.append(int(i))
    for sl in cones.soc_slices:
        sb = s[sl]
        tail = float(np.linalg.norm(sb[1:]))
        if sb[0] - tail > act * (1.0 + abs(sb[0])):
            continue  # strictly slack: multiplier stays zero
        if tail <= 1e-12 * (1.0 + abs(sb[0])):
            return None  # apex-degenerate block: ray undefined
        ray = np.empty(sb.size)
        ray[0] = 1.0
        ray[1:] = -sb[1:] / tail
        cols.append(G[sl].T @ ray)
        lower.append(0.0)
        ray_blocks.append((sl, ray))
    p = A.shape[0]
    for i in range(p):
        cols.append(A[i])
        lower.append(-np.inf)

    z = np.zeros(cones.m)
    y = np.zeros(p)
    if not cols:
        ok = float(np.linalg.norm(grad, np.inf)) <= feas_tol * qnorm
        return (y, z) if ok else None
    C = np.column_stack(cols)
    res = lsq_linear(C, -grad, bounds=(np.asarray(lower), np.inf))
    w = res.x
    if float(np.linalg.norm(grad + C @ w, np.inf)) > feas_tol * qnorm:
        return None
    k = 0
    for i in nn_idx:
        z[i] = max(w[k], 0.0)
        k += 1
    for sl, ray in ray_blocks:
        z[sl] = max(w[k], 0.0) * ray
        k += 1
    if p:
        y = w[k:]
    return y, z


def _infeasibility_certificate(A, b, G, h, y, z, tol) -> bool:
    """Approximate Farkas certificate: G^T z + A^T y ~ 0, h^T z + b^T y < 0."""
    scale = float(np.linalg.norm(z, np.inf))
    if A.shape[0]:
        scale = max(scale, float(np.linalg.norm(y, np.inf)))
    if scale < 1e6:
        return False
    resid = G.T @ z + (A.T @ y if A.shape[0] else 0.0)
    val = float(h @ z + (b @ y if A.shape[0] else 0.0))
    return (
        float(np.linalg.norm(resid, np.inf)) <= tol * scale
        and val < -tol * scale
    )


def _solve_equality_qp(prog: ConeProgram, st: SolverSettings,
                       A: np.ndarray, b: np.ndarray) -> Solution:
    """No cone rows: direct KKT solve of the equality-constrained QP."""
    n, p = prog.n, A.shape[0]
    K = np.zeros((n + p, n + p))
    K[:n, :n] = prog.P
    if p:
        K[:n, n:] = A.T
        K[n:, :n] = A
    rhs = np.concatenate([-prog.q, b])
    scale = max(float(np.trace(prog.P)) / max(n, 1), 1.0)
    sol = None
    for reg in (0.0, 1e-12 * scale, 1e-10 * scale, 1e-8 * scale):
        try:
            Kr = K.copy()
            Kr[:n, :n] += reg * np.eye(n)
            sol = np.linalg.solve(Kr, rhs)
            break
        except np.linalg.LinAlgError:
            continue
    if sol is None:
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    x, y = sol[:n], sol[n:]
    residuals = _final_residuals(prog, x, y, np.zeros(0), np.zeros(0))
    ok = residuals["stationarity"] <= 1e-6 and residuals["primal_eq"] <= 1e-6
    return Solution(
        x=x, y_eq=y, z=np.zeros(0), s=np.zeros(0),
        status="optimal" if ok else "max_iter",
        objective=prog.objective(x), residuals=residuals, iterations=1,
        block_slices=[], block_kinds=[],
    )


def _final_residuals(prog: ConeProgram, x, y, z, s) -> dict:
    rx = prog.P @ x + prog.q
    if prog.A_eq.shape[0]:
        rx = rx + prog.A_eq.T @ y
    pos = 0
    rz_inf = 0.0
    for blk in prog.blocks:
        k = blk.h.size
        rx = rx + blk.G.T @ z[pos: pos + k]
        rz_inf = max(rz_inf, float(np.linalg.norm(
            blk.G @ x + s[pos: pos + k] - blk.h, np.inf)))
        pos += k
    ry_inf = (
        float(np.linalg.norm(prog.A_eq @ x - prog.b_eq, np.inf))
        if prog.A_eq.shape[0] else 0.0
    )
    return {
        "stationarity": float(np.linalg.norm(rx, np.inf)),
        "primal_eq": ry_inf,
        "primal_cone": rz_inf,
        "comp_gap": float(s @ z) if s.size else 0.0,
    }


def kkt_residuals(prog: ConeProgram, sol: Solution) -> dict:
    """Recompute the KKT residual report for a solution (test hook)."""
    return _final_residuals(prog, sol.x, sol.y_eq, sol.z, sol.s)
