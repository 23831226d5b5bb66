"""Adaptive covering refinement: solve, burst saturated elements, repeat.

Uniform coverings waste elements where the constraint is slack.  The loop
here starts from a coarse uniform covering, solves the tightened program,
finds the covering elements whose buffered rows hold with equality (the
"saturated" ones --- the only places the buffer actually binds), and
replaces each with a sub-covering at a geometrically contracted scale.
Elements that never saturate are left untouched, so refinement concentrates
where the solution touches the constraint.

Two element flavors are supported: input-space balls with buffer widths
(``ball`` mode) and feature-space ball/halfspace enclosures (``omega``
mode).  Both contract by at least the factor ``gamma`` per burst.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .assemble import (
    ProblemSpec,
    _oriented,
    assemble,
    collect_atoms,
    recover_model,
)
from .atoms import apply_functional, atom_inner
from .conic import SolverSettings, solve as conic_solve
from .covering import (
    InputBall,
    OmegaElement,
    cover_box,
    eta_for,
    omega_cover,
    refine_radius,
)
from .tighten import (
    InclusionRecord,
    LinearRecord,
    Rsoc2x2Record,
    SocBufferRecord,
    tighten_omega,
    tighten_soc,
)

__all__ = ["SoapState", "SoapInfeasible", "run_soap", "detect_saturated",
           "record_slack"]


@dataclass
class SoapState:
    """Loop bookkeeping: current coverings, model, and history rows."""

    mode: str
    iteration: int = 0
    coverings: list = field(default_factory=list)  # per constraint
    etas: list = field(default_factory=list)  # ball mode: per element
    model: object | None = None
    history: list = field(default_factory=list)
    stopped_reason: str = ""

    def total_elements(self) -> int:
        return sum(len(c) for c in self.coverings)

    def history_rows(self) -> list[dict]:
        return list(self.history)


class SoapInfeasible(RuntimeError):
    """Solver declared a soap iterate infeasible; carries the loop state."""

    def __init__(self, message: str, state: SoapState):
        super().__init__(message)
        self.state = state


# --------------------------------------------------------------------------
# Saturation detection
# --------------------------------------------------------------------------

def _norm_shifted(model, a0_map: dict, ci: int) -> float:
    """||f - f0_ci|| via the model's stored factor."""
    a = np.asarray(model.coeffs, dtype=float)
    a0 = a0_map.get(ci)
    diff = a if a0 is None else a - a0
    return float(np.linalg.norm(model.factor.T @ diff))


def _shift_coeff_map(model, spec: ProblemSpec) -> dict:
    index = {atom.key(): i for i, atom in enumerate(model.basis)}
    out = {}
    for ci, c in enumerate(spec.constraints):
        if c.shift is None:
            continue
        a0 = np.zeros(len(model.basis))
        for atom, coef in zip(c.shift.basis, c.shift.coeffs):
            a0[index[atom.key()]] += coef
        out[ci] = a0
    return out


def record_slack(model, rec, spec: ProblemSpec,
                 a0_map: dict | None = None) -> float:
    """Signed slack of one record at the model (0 = saturated).

    Scalar records return the scalar slack; 2x2 records return the smallest
    eigenvalue of the buffered slack matrix.
    """
    a0_map = _shift_coeff_map(model, spec) if a0_map is None else a0_map
    ci = rec.provenance[0] if rec.provenance else 0
    shift = spec.constraints[ci].shift if ci < len(spec.constraints) else None
    bias = np.asarray(model.bias, dtype=float)

    def gval(gamma):
        g = np.asarray(gamma, dtype=float)
        return float(g @ bias[: g.size]) if g.size and bias.size else 0.0

    def fval(atom):
        v = _model_functional(model, atom)
        if shift is not None:
            v -= apply_functional(atom.functional, shift, atom.x)
        return v

    if isinstance(rec, LinearRecord):
        return fval(rec.atom) + gval(rec.gamma) - rec.offset
    if isinstance(rec, SocBufferRecord):
        nrm = _norm_shifted(model, a0_map, ci)
        return fval(rec.atom) + gval(rec.gamma) - rec.offset - rec.eta * nrm
    if isinstance(rec, Rsoc2x2Record):
        nrm = _norm_shifted(model, a0_map, ci)
        M = np.empty((2, 2))
        for i in range(2):
            M[i, i] = (fval(rec.atoms[i][i])
                       + gval(rec.gamma[i]) - rec.offset[i]
                       - rec.eta * nrm)
        M[0, 1] = M[1, 0] = fval(rec.atoms[0][1])
        return float(np.linalg.eigvalsh(M)[0])
    if isinstance(rec, InclusionRecord):
        xi = 0.0
        if rec.xi_count:
            xi = float(model.aux.get("xi", {}).get(tuple(rec.provenance),
                                                   0.0))
        pos, sign = _oriented(rec.normal)
        index = {atom.key(): i for i, atom in enumerate(model.basis)}
        w = np.asarray(model.coeffs, dtype=float).copy()
        a0 = a0_map.get(ci)
        if a0 is not None:
            w = w - a0
        w[index[pos.key()]] += sign * xi
        nrm = float(np.linalg.norm(model.factor.T @ w))
        lhs = gval(rec.gamma) - rec.offset - xi * rec.rho \
            if rec.xi_count else gval(rec.gamma) - rec.offset
        return lhs - rec.r0 * nrm
    raise TypeError(f"unknown record type {type(rec).__name__}")


def _model_functional(model, atom) -> float:
    """<f, atom> for the model's own kernel/basis."""
    total = 0.0
    for coeff, basis_atom in zip(model.coeffs, model.basis):
        if coeff:
            total += coeff * atom_inner(basis_atom, atom, model.kernel)
    return total


def detect_saturated(model, records: list, tol_sat: float = 1e-8, *,
                     spec: ProblemSpec) -> list[int]:
    """Indices of records whose inequality binds at the model.

    The threshold is scaled by ``(1 + ||f||)`` so it stays meaningful for
    large-norm solutions.
    """
    a0_map = _shift_coeff_map(model, spec)
    tol_eff = tol_sat * (1.0 + model.norm)
    out = []
    for idx, rec in enumerate(records):
        slack = record_slack(model, rec, spec, a0_map=a0_map)
        if abs(slack) <= tol_eff:
            out.append(idx)
    return out


# --------------------------------------------------------------------------
# Refinement helpers
# --------------------------------------------------------------------------

def _clip_box(region, center, radius) -> list:
    return [
        (max(lo, c - radius), min(hi, c + radius))
        for (lo, hi), c in zip(region, center)
    ]


def _burst_ball(kernel, op, constraint, ball: InputBall, eta_old: float,
                gamma: float, eta_kwargs: dict) -> list[InputBall]:
    """Sub-cover a burst ball at the gamma-contracted buffer target."""
    target = gamma * eta_old
    refined = refine_radius(kernel, op, ball.center, target, ball.radius,
                            norm=ball.norm, **eta_kwargs)
    delta_new = min(refined, gamma * ball.radius)
    delta_new = max(delta_new, 1e-12)
    sub_box = _clip_box(constraint.region, ball.center, ball.radius)
    return cover_box(sub_box, delta_new, norm=ball.norm)


def _omega_diameter(kernel, functional, ball: InputBall, n_x, seed,
                    safety) -> float:
    elems = omega_cover(kernel, functional, [ball], style="ball_halfspace",
                        n_x=n_x, seed=seed, safety=safety)
    return elems[0].diameter_bound


def _burst_omega(kernel, functional, constraint, elem: OmegaElement,
                 gamma: float, n_x: int, seed, safety: float
                 ) -> list[InputBall]:
    """Sub-cover a burst enclosure at the gamma-contracted diameter."""
    ball = elem.source
    target = gamma * elem.diameter_bound
    lo, hi = 0.0, float(ball.radius)
    tol = 1e-6 * ball.radius
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= 0:
            break
        if _omega_diameter(kernel, functional,
                           InputBall(ball.center, mid, ball.norm),
                           n_x, seed, safety) <= target:
            lo = mid
        else:
            hi = mid
    delta_new = min(lo if lo > 0 else 0.5 * ball.radius,
                    gamma * ball.radius)
    delta_new = max(delta_new, 1e-12)
    sub_box = _clip_box(constraint.region, ball.center, ball.radius)
    return cover_box(sub_box, delta_new, norm=ball.norm)


# --------------------------------------------------------------------------
# Main loop
# --------------------------------------------------------------------------

def run_soap(spec: ProblemSpec, mode: str = "ball", gamma: float = 0.8,
             k_max: int = 30, delta0: float = 0.01, tol_sat: float = 1e-8,
             settings: SolverSettings | None = None, n_x: int = 50,
             n_u: int = 20, seed=0, safety: float = 0.0,
             max_elements: int = 4000):
    """Adaptive refinement loop.  Returns ``(model, state)``.

    Starts from a uniform covering of every constraint region at radius
    ``delta0``, then alternates solve / burst until no element saturates,
    ``k_max`` bursts have happened, or the element budget ``max_elements``
    is hit (recorded in ``state.stopped_reason``).
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie strictly between 0 and 1")
    if delta0 <= 0:
        raise ValueError("initial radius must be positive")
    if mode not in ("ball", "omega"):
        raise ValueError(f"unknown soap mode {mode!r}")

    kernel = spec.kernel
    state = SoapState(mode=mode)
    eta_kwargs = dict(n_x=n_x, n_u=n_u, seed=seed, safety=safety)

    # Initial uniform coverings (one list per constraint).
    for c in spec.constraints:
        balls = cover_box(c.region, delta0, norm="max")
        if mode == "ball":
            ops = c.operator
            etas = [eta_for(kernel, ops, b.center, b.radius, norm=b.norm,
                            **eta_kwargs) for b in balls]
            state.coverings.append(balls)
            state.etas.append(etas)
        else:
            if c.size != 1:
                raise ValueError("omega mode needs scalar constraints")
            elems = omega_cover(kernel, c.operator.entries[0][0], balls,
                                style="ball_halfspace", n_x=n_x, seed=seed,
                                safety=safety)
            state.coverings.append(elems)
            state.etas.append([])

    prev_model = None
    model = None
    for k in range(k_max + 1):
        t0 = time.perf_counter()
        state.iteration = k
        records = []
        rec_elem: list[tuple[int, int]] = []  # record idx -> (ci, ei)
        for ci, c in enumerate(spec.constraints):
            if mode == "ball":
                recs = tighten_soc(c, state.coverings[ci],
                                   state.etas[ci], constraint_index=ci)
            else:
                recs = tighten_omega(c, state.coverings[ci],
                                     constraint_index=ci)
            for ei in range(len(recs)):
                rec_elem.append((ci, ei))
            records.extend(recs)

        basis = collect_atoms(spec, records)
        prog = assemble(spec, basis, records)
        x0 = None
        if prev_model is not None:
            # Previous primal coefficients carried over, mapped into the
            # whitened coordinates the program uses; bias, epigraph, and
            # auxiliary variables restart at zero.
            index = {atom.key(): i for i, atom in enumerate(basis)}
            a_prev = np.zeros(prog.meta["basis_size"])
            for atom, coef in zip(prev_model.basis, prev_model.coeffs):
                pos = index.get(atom.key())
                if pos is not None:
                    a_prev[pos] = coef
            x0 = np.zeros(prog.n)
            x0[: a_prev.size] = prog.meta["factor"].T @ a_prev
        try:
            sol = conic_solve(prog, settings=settings, x0=x0)
            if sol.status in ("infeasible", "unbounded"):
                raise RuntimeError(f"solver returned status {sol.status!r}")
            model = recover_model(prog, sol, basis, spec)
        except RuntimeError as err:
            if k == 0:
                raise SoapInfeasible(
                    "initial covering already infeasible; reduce delta0 or "
                    "review the constraint offsets", state,
                ) from err
            raise SoapInfeasible(
                f"iterate {k} became infeasible: {err}", state,
            ) from err

        saturated = detect_saturated(model, records, tol_sat, spec=spec)
        widths = []
        for ci in range(len(spec.constraints)):
            if mode == "ball":
                widths.extend(state.etas[ci])
            else:
                widths.extend(e.diameter_bound
                              for e in state.coverings[ci])
        state.history.append({
            "k": k,
            "M_total": state.total_elements(),
            "v": float(sol.objective),
            "bursts": len(saturated),
            "maxEta": float(max(widths)) if widths else 0.0,
            "wallTime": time.perf_counter() - t0,
        })
        state.model = model
        prev_model = model

        if not saturated:
            state.stopped_reason = "no saturation"
            break
        if k == k_max:
            state.stopped_reason = "k_max reached"
            break
        if state.total_elements() >= max_elements:
            state.stopped_reason = "element budget reached"
            break

        # Burst: group saturated records per constraint, replace elements.
        per_ci: dict[int, set] = {}
        for ridx in saturated:
            ci, ei = rec_elem[ridx]
            per_ci.setdefault(ci, set()).add(ei)
        for ci, burst_set in per_ci.items():
            c = spec.constraints[ci]
            keep, keep_etas = [], []
            new_elems = []
            if mode == "ball":
                for ei, (ball, eta) in enumerate(
                        zip(state.coverings[ci], state.etas[ci])):
                    if ei in burst_set:
                        new_elems.extend(_burst_ball(
                            kernel, c.operator, c, ball, eta, gamma,
                            eta_kwargs))
                    else:
                        keep.append(ball)
                        keep_etas.append(eta)
                new_etas = [
                    eta_for(kernel, c.operator, b.center, b.radius,
                            norm=b.norm, **eta_kwargs)
                    for b in new_elems
                ]
                state.coverings[ci] = keep + new_elems
                state.etas[ci] = keep_etas + new_etas
            else:
                func = c.operator.entries[0][0]
                for ei, elem in enumerate(state.coverings[ci]):
                    if ei in burst_set:
                        balls = _burst_omega(kernel, func, c, elem, gamma,
                                             n_x, seed, safety)
                        new_elems.extend(omega_cover(
                            kernel, func, balls, style="ball_halfspace",
                            n_x=n_x, seed=seed, safety=safety))
                    else:
                        keep.append(elem)
                state.coverings[ci] = keep + new_elems

    return model, state
