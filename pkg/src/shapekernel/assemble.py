"""Finite-dimensional reduction of the constrained estimation problem.

The optimal solution of a kernel estimation problem with finitely many
observation functionals and finitely many conic constraint rows lives in the
span of the corresponding atoms.  This module collects that atom basis,
assembles the finite cone program over the expansion coefficients (plus
bias, norm-epigraph, and enclosure auxiliaries), and maps solver output back
to :class:`~shapekernel.atoms.Model` objects.

It also produces the two companion quantities used for certification: the
value of the *relaxed* (discretized) program, which lower-bounds the true
optimum, and bound reports combining the two values into optimality
certificates and error radii.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .atoms import (
    Atom,
    DiffFunctional,
    Model,
    gram,
    model_distance,
)
from .conic import ConeBlock, ConeProgram, SolverSettings, Solution, solve
from .covering import fill_distance
from .kernels import Kernel
from .tighten import (
    InclusionRecord,
    LinearRecord,
    Rsoc2x2Record,
    ShapeConstraint,
    SocBufferRecord,
    _functional_grid,
    discretize,
)

__all__ = [
    "Observation",
    "Equality",
    "Ridge",
    "NormBound",
    "NormMin",
    "ProblemSpec",
    "collect_atoms",
    "assemble",
    "recover_model",
    "solve_problem",
    "relax_records",
    "solve_reference",
    "BoundReport",
    "compute_bounds",
]

_Q12 = 12  # coefficient quantization for epigraph sharing keys


# --------------------------------------------------------------------------
# Problem description
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Observation:
    """One loss term: functional value at a point vs. a target."""

    functional: DiffFunctional
    x: tuple
    target: float
    weight: float = 1.0
    bias_row: tuple = ()

    def atom(self) -> Atom:
        return Atom(self.x, self.functional)


@dataclass(frozen=True)
class Equality:
    """Hard interpolation row ``functional(f)(x) + bias_row . b = value``."""

    functional: DiffFunctional
    x: tuple
    value: float
    bias_row: tuple = ()

    def atom(self) -> Atom:
        return Atom(self.x, self.functional)


@dataclass(frozen=True)
class Ridge:
    lam: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("ridge weight must be positive")


@dataclass(frozen=True)
class NormBound:
    lam_tilde: float

    def __post_init__(self):
        if self.lam_tilde <= 0:
            raise ValueError("norm bound must be positive")


@dataclass(frozen=True)
class NormMin:
    """Minimize the RKHS norm itself (epigraph objective)."""


@dataclass
class ProblemSpec:
    """Everything needed to assemble one estimation problem."""

    kernel: Kernel
    observations: list = field(default_factory=list)
    loss: str = "none"  # 'squared' | 'none'
    equalities: list = field(default_factory=list)
    regularizer: object | None = None
    bias_dim: int = 0
    bias_set: str = "all"  # 'all' | 'zero' | 'box'
    bias_bounds: tuple | None = None
    constraints: list = field(default_factory=list)

    def __post_init__(self):
        if self.loss not in ("squared", "none"):
            raise ValueError(
                f"loss {self.loss!r} is reserved or unknown; "
                "supported: 'squared', 'none'"
            )
        if self.loss == "none" and self.regularizer is None:
            raise ValueError("need a loss or a regularizer")
        if self.bias_set not in ("all", "zero", "box"):
            raise ValueError(f"unknown bias set {self.bias_set!r}")
        if self.bias_set == "box" and self.bias_bounds is None:
            raise ValueError("box bias set needs bounds")


# --------------------------------------------------------------------------
# Atom collection
# --------------------------------------------------------------------------

def _oriented(atom: Atom) -> tuple[Atom, float]:
    """Return the sign-normalized atom and the sign that recovers the input.

    The leading coefficient of the canonical functional is made positive so
    that an atom and its negation share one basis column.
    """
    terms = atom.functional.canonical()
    lead = next((b for _, _, b in terms if b != 0.0), 1.0)
    if lead < 0:
        return Atom(atom.x, atom.functional.scaled(-1.0)), -1.0
    return atom, 1.0


def collect_atoms(spec: ProblemSpec, records: list) -> list[Atom]:
    """Deduplicated atom basis spanning every optimal solution.

    Observation and equality atoms come first, then constraint-record
    anchors, enclosure normals (sign-normalized), and the atoms of every
    shift model.  Dedup key: point quantized to 12 digits plus the
    functional's canonical form.
    """
    seen: dict = {}
    out: list[Atom] = []

    def add(atom: Atom):
        key = atom.key()
        if key not in seen:
            seen[key] = len(out)
            out.append(atom)

    for obs in spec.observations:
        add(obs.atom())
    for eq in spec.equalities:
        add(eq.atom())
    for rec in records:
        if isinstance(rec, (LinearRecord, SocBufferRecord)):
            add(rec.atom)
        elif isinstance(rec, Rsoc2x2Record):
            for i in range(2):
                for j in range(i, 2):
                    add(rec.atoms[i][j])
        elif isinstance(rec, InclusionRecord):
            add(_oriented(rec.normal)[0])
        else:
            raise TypeError(f"unknown record type {type(rec).__name__}")
    for c in spec.constraints:
        if c.shift is not None:
            for atom in c.shift.basis:
                add(atom)
    return out


# --------------------------------------------------------------------------
# Assembly
# --------------------------------------------------------------------------

class _Layout:
    """Variable layout: [a | b | epigraphs t | enclosure xis]."""

    def __init__(self, A: int, B: int):
        self.A = A
        self.B = B
        self.t_keys: dict = {}
        self.xi_keys: dict = {}

    def finalize(self):
        self.n = self.A + self.B + len(self.t_keys) + len(self.xi_keys)
        self.a = slice(0, self.A)
        self.b = slice(self.A, self.A + self.B)

    def t_col(self, key) -> int:
        if key not in self.t_keys:
            self.t_keys[key] = len(self.t_keys)
        return self.t_keys[key]

    def t_index(self, key) -> int:
        return self.A + self.B + self.t_keys[key]

    def xi_col(self, prov) -> int:
        if prov not in self.xi_keys:
            self.xi_keys[prov] = len(self.xi_keys)
        return self.xi_keys[prov]

    def xi_index(self, prov) -> int:
        return self.A + self.B + len(self.t_keys) + self.xi_keys[prov]


def _shift_coeffs(c: ShapeConstraint, basis_index: dict, A: int) -> np.ndarray:
    a0 = np.zeros(A)
    if c.shift is None:
        return a0
    for atom, coef in zip(c.shift.basis, c.shift.coeffs):
        a0[basis_index[atom.key()]] += coef
    return a0


def _epigraph_key(a0: np.ndarray) -> tuple:
    return tuple(round(float(v), _Q12) for v in a0)


def assemble(spec: ProblemSpec, basis: list[Atom], records: list
             ) -> ConeProgram:
    """Build the cone program over coefficients, bias, and auxiliaries.

    Functional evaluations become Gram rows; buffered records of one
    constraint share a norm epigraph (one SOC row per distinct shift);
    enclosure records get their own SOC row over the extended coefficient
    vector plus a nonnegative auxiliary.

    The coefficient block of the decision vector carries the whitened
    coordinates ``u = L^T a`` (L the stabilized Cholesky factor of the atom
    Gram) rather than the raw expansion coefficients.  Evaluation rows
    ``r . a`` become ``(L^{-1} r) . u`` — computed for the whole basis in
    one triangular solve — and every norm expression ``||L^T (a - a0)||``
    becomes ``||u - L^T a0||``, an identity block.  This keeps the program
    well conditioned even when the Gram is numerically singular (smooth
    kernels at tight anchor spacing), which otherwise stalls the
    interior-point iteration; :func:`recover_model` maps ``u`` back with a
    single triangular back-solve.
    """
    kernel = spec.kernel
    A = len(basis)
    B = spec.bias_dim if spec.bias_set != "zero" else 0
    G_mat, L, jitter = gram(basis, kernel)
    basis_index = {atom.key(): i for i, atom in enumerate(basis)}
    # Row i: exact whitened evaluation row of basis atom i.
    W_rows = solve_triangular(L, G_mat, lower=True).T if A else G_mat

    lay = _Layout(A, B)
    shift_by_constraint = {
        i: _shift_coeffs(c, basis_index, A)
        for i, c in enumerate(spec.constraints)
    }

    # First pass: reserve epigraph/xi variables so the layout is fixed.
    needs_t = isinstance(spec.regularizer, NormMin)
    if needs_t:
        lay.t_col(_epigraph_key(np.zeros(A)))
    for rec in records:
        if isinstance(rec, (SocBufferRecord, Rsoc2x2Record)) and rec.eta > 0:
            ci = rec.provenance[0] if rec.provenance else 0
            lay.t_col(_epigraph_key(shift_by_constraint.get(ci, np.zeros(A))))
        elif isinstance(rec, InclusionRecord) and rec.xi_count:
            lay.xi_col(tuple(rec.provenance))
    lay.finalize()
    n = lay.n

    def row_template() -> np.ndarray:
        return np.zeros(n)

    def gram_row(atom: Atom) -> np.ndarray:
        # Every row atom is in the basis by construction (collect_atoms).
        return W_rows[basis_index[atom.key()]]

    def bias_part(row: np.ndarray, gamma) -> None:
        g = np.asarray(gamma, dtype=float)
        if B and g.size:
            if g.size != B:
                raise ValueError("bias row length mismatch")
            row[lay.b] = g

    # ---------------------------------------------------------------- cost
    P_mat = np.zeros((n, n))
    q_vec = np.zeros(n)
    const = 0.0

    if spec.loss == "squared" and spec.observations:
        N = len(spec.observations)
        J = np.zeros((N, n))
        y = np.zeros(N)
        w = np.zeros(N)
        for k, obs in enumerate(spec.observations):
            J[k, lay.a] = gram_row(obs.atom())
            bias_part(J[k], obs.bias_row)
            y[k] = obs.target
            w[k] = obs.weight
        WJ = J * w[:, None]
        P_mat += (2.0 / N) * J.T @ WJ
        q_vec += -(2.0 / N) * WJ.T @ y
        const += float(w @ (y * y)) / N

    reg = spec.regularizer
    if isinstance(reg, Ridge):
        # ||f||^2 = u.u in whitened coordinates (the jitter-stabilized
        # norm, matching Model.norm and the epigraph rows).
        P_mat[:A, :A] += 2.0 * reg.lam * np.eye(A)
    elif isinstance(reg, NormMin):
        q_vec[lay.t_index(_epigraph_key(np.zeros(A)))] += 1.0

    # ---------------------------------------------------------------- rows
    A_eq_rows, b_eq, eq_prov = [], [], []
    blocks: list[ConeBlock] = []
    nn_G, nn_h, nn_prov = [], [], []

    def add_nonneg(row, rhs, prov):
        # expression row.x - rhs >= 0  =>  s = -rhs - (-row).x
        nn_G.append(-row)
        nn_h.append(-rhs)
        nn_prov.append(prov)

    for eq in spec.equalities:
        row = row_template()
        row[lay.a] = gram_row(eq.atom())
        bias_part(row, eq.bias_row)
        A_eq_rows.append(row)
        b_eq.append(eq.value)
        eq_prov.append(("equality", eq.x))

    if spec.bias_set == "box" and B:
        lo, hi = spec.bias_bounds
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (B,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (B,))
        for j in range(B):
            row = row_template()
            row[lay.A + j] = 1.0
            add_nonneg(row.copy(), lo[j], ("bias_lo", j))
            row2 = row_template()
            row2[lay.A + j] = -1.0
            add_nonneg(row2, -hi[j], ("bias_hi", j))

    for rec in records:
        prov = tuple(rec.provenance)
        ci = prov[0] if prov else 0
        a0 = shift_by_constraint.get(ci, np.zeros(A))
        if isinstance(rec, LinearRecord):
            row = row_template()
            row[lay.a] = gram_row(rec.atom)
            bias_part(row, rec.gamma)
            rhs = rec.offset + rec.shift_val
            if rec.equality:
                A_eq_rows.append(row)
                b_eq.append(rhs)
                eq_prov.append(("record",) + prov)
            else:
                add_nonneg(row, rhs, ("record",) + prov)
        elif isinstance(rec, SocBufferRecord):
            row = row_template()
            row[lay.a] = gram_row(rec.atom)
            bias_part(row, rec.gamma)
            if rec.eta > 0:
                row[lay.t_index(_epigraph_key(a0))] = -rec.eta
            add_nonneg(row, rec.offset + rec.shift_val, ("record",) + prov)
        elif isinstance(rec, Rsoc2x2Record):
            diag_rows = []
            for p in (0, 1):
                row = row_template()
                row[lay.a] = gram_row(rec.atoms[p][p])
                bias_part(row, rec.gamma[p])
                if rec.eta > 0:
                    row[lay.t_index(_epigraph_key(a0))] = -rec.eta
                rhs = rec.offset[p] + rec.shift_vals[p][p]
                add_nonneg(row.copy(), rhs, ("record",) + prov + (p,))
                diag_rows.append((row, rhs))
            off_row = row_template()
            off_row[lay.a] = gram_row(rec.atoms[0][1])
            off_rhs = rec.shift_vals[0][1]
            Gb = np.zeros((3, n))
            hb = np.zeros(3)
            for k, (row, rhs) in enumerate(diag_rows):
                Gb[k] = -row
                hb[k] = -rhs
            Gb[2] = -math.sqrt(2.0) * off_row
            hb[2] = -math.sqrt(2.0) * off_rhs
            blocks.append(ConeBlock("rsoc", Gb, hb,
                                    provenance=("record",) + prov))
        elif isinstance(rec, InclusionRecord):
            pos, sign = _oriented(rec.normal)
            col = basis_index[pos.key()]
            dim = 1 + A
            Gb = np.zeros((dim, n))
            hb = np.zeros(dim)
            # s0 = gamma.b - offset - xi*rho
            bias_row = row_template()
            bias_part(bias_row, rec.gamma)
            Gb[0] = -bias_row
            hb[0] = -rec.offset
            if rec.xi_count:
                xi_idx = lay.xi_index(prov)
                Gb[0, xi_idx] += rec.rho
                xi_row = row_template()
                xi_row[xi_idx] = 1.0
                add_nonneg(xi_row, 0.0, ("xi",) + prov)
            # s1 = r0 * (u - L^T a0 + sign*xi*L^T e_col)
            Gb[1:, lay.a] = -rec.r0 * np.eye(A)
            hb[1:] = -rec.r0 * (L.T @ a0)
            if rec.xi_count:
                Gb[1:, xi_idx] = -rec.r0 * sign * L.T[:, col]
            blocks.append(ConeBlock("soc", Gb, hb,
                                    provenance=("record",) + prov))
        else:
            raise TypeError(f"unknown record type {type(rec).__name__}")

    if isinstance(reg, NormBound):
        Gb = np.zeros((1 + A, n))
        hb = np.zeros(1 + A)
        hb[0] = reg.lam_tilde
        Gb[1:, lay.a] = -np.eye(A)
        blocks.append(ConeBlock("soc", Gb, hb, provenance=("norm_bound",)))

    # One SOC row per distinct epigraph: ||u - L^T a0|| <= t_key.
    for key in lay.t_keys:
        t_idx = lay.t_index(key)
        a0 = np.asarray(key, dtype=float)
        Gb = np.zeros((1 + A, n))
        hb = np.zeros(1 + A)
        Gb[0, t_idx] = -1.0
        Gb[1:, lay.a] = -np.eye(A)
        hb[1:] = -L.T @ a0
        blocks.append(ConeBlock("soc", Gb, hb,
                                provenance=("epigraph", key)))

    if nn_G:
        blocks.insert(0, ConeBlock(
            "nonneg", np.vstack(nn_G), np.asarray(nn_h),
            provenance=("nonneg", tuple(nn_prov)),
        ))

    prog = ConeProgram(
        n=n,
        P=0.5 * (P_mat + P_mat.T),
        q=q_vec,
        const=const,
        A_eq=np.vstack(A_eq_rows) if A_eq_rows else None,
        b_eq=np.asarray(b_eq) if b_eq else None,
        eq_provenance=eq_prov,
        blocks=blocks,
        meta={
            "basis_size": A,
            "bias_dim": B,
            "jitter": jitter,
            "a_slice": (0, A),
            "b_slice": (A, A + B),
            "t_keys": {str(k): lay.t_index(k) for k in lay.t_keys},
            "xi_indices": {prov: lay.xi_index(prov)
                           for prov in lay.xi_keys},
            "nonneg_provenance": nn_prov,
        },
    )
    prog.meta["gram"] = G_mat
    prog.meta["factor"] = L
    return prog


# --------------------------------------------------------------------------
# Recovery
# --------------------------------------------------------------------------

def recover_model(prog: ConeProgram, sol: Solution, basis: list[Atom],
                  spec: ProblemSpec, active_tol: float = 1e-6) -> Model:
    """Map a solver solution back to a Model with auxiliary diagnostics."""
    if sol.status not in ("optimal", "max_iter"):
        raise RuntimeError(
            f"cannot recover a model from solver status {sol.status!r}"
        )
    a_lo, a_hi = prog.meta["a_slice"]
    b_lo, b_hi = prog.meta["b_slice"]
    u = sol.x[a_lo:a_hi]
    if a_hi > a_lo:
        # The program works in whitened coordinates u = L^T a.
        coeffs = solve_triangular(prog.meta["factor"], u, lower=True,
                                  trans="T")
    else:
        coeffs = u.copy()
    bias = sol.x[b_lo:b_hi].copy()
    if spec.bias_set == "zero" and spec.bias_dim:
        bias = np.zeros(spec.bias_dim)
    aux = {
        "status": sol.status,
        "objective": sol.objective,
        "iterations": sol.iterations,
        "xi": {},
        "t": {},
        "active": [],
    }
    for prov, idx in prog.meta.get("xi_indices", {}).items():
        aux["xi"][prov] = float(sol.x[idx])
    for key, idx in prog.meta.get("t_keys", {}).items():
        aux["t"][key] = float(sol.x[idx])
    nn_prov = prog.meta.get("nonneg_provenance", [])
    for bi, blk in enumerate(prog.blocks):
        if blk.kind == "nonneg":
            slack = sol.block_slack(bi)
            for k, p in enumerate(nn_prov):
                if slack[k] <= active_tol and p and p[0] == "record":
                    aux["active"].append(tuple(p[1:]))
        elif blk.provenance and blk.provenance[0] == "record":
            s = sol.block_slack(bi)
            margin = s[0] - np.linalg.norm(s[1:]) if blk.kind == "soc" \
                else 2 * s[0] * s[1] - s[2:] @ s[2:]
            if margin <= active_tol:
                aux["active"].append(tuple(blk.provenance[1:]))
    return Model(
        kernel=spec.kernel,
        basis=tuple(basis),
        coeffs=coeffs,
        bias=bias,
        gram_matrix=prog.meta.get("gram"),
        factor=prog.meta.get("factor"),
        aux=aux,
    )


def solve_problem(spec: ProblemSpec, records: list,
                  settings: SolverSettings | None = None,
                  x0: np.ndarray | None = None,
                  basis: list[Atom] | None = None):
    """Collect, assemble, solve, recover.  Returns (model, solution, program).

    Raises on infeasible/unbounded status so callers never mistake a
    certificate of infeasibility for a model.
    """
    basis = collect_atoms(spec, records) if basis is None else basis
    prog = assemble(spec, basis, records)
    sol = solve(prog, settings=settings, x0=x0)
    if sol.status in ("infeasible", "unbounded"):
        raise RuntimeError(
            f"solver returned status {sol.status!r}; the tightening may be "
            "too strong for this covering (try smaller radii)"
        )
    model = recover_model(prog, sol, basis, spec)
    return model, sol, prog


# --------------------------------------------------------------------------
# Relaxation helpers
# --------------------------------------------------------------------------

def relax_records(records: list) -> list:
    """Zero-buffer copies of buffered records (the discretized relaxation
    at the same anchors)."""
    out = []
    for rec in records:
        if isinstance(rec, SocBufferRecord):
            out.append(LinearRecord(
                atom=rec.atom, gamma=rec.gamma, offset=rec.offset,
                shift_val=rec.shift_val, provenance=rec.provenance,
            ))
        elif isinstance(rec, Rsoc2x2Record):
            out.append(Rsoc2x2Record(
                atoms=rec.atoms, eta=0.0, gamma=rec.gamma,
                offset=rec.offset, shift_vals=rec.shift_vals,
                provenance=rec.provenance,
            ))
        elif isinstance(rec, InclusionRecord):
            raise ValueError(
                "enclosure records have no zero-buffer form; relax the "
                "underlying constraint with discretize() instead"
            )
        else:
            out.append(rec)
    return out


def solve_reference(spec: ProblemSpec, constraint: ShapeConstraint,
                    n_points: int, settings: SolverSettings | None = None,
                    constraint_index: int = 0, init: int = 64,
                    batch: int = 64, max_rounds: int = 40,
                    tol: float = 1e-9):
    """Discretized solve on a dense grid via constraint generation.

    Scalar constraints only.  Starts from a coarse subset of the grid,
    solves, adds the most violated grid points, and repeats; at
    termination the returned model is feasible on the *entire* grid, so its
    objective equals the full-grid discretized optimum.  Returns
    ``(model, value, points_used)``.
    """
    if constraint.size != 1:
        raise ValueError("reference solve supports scalar constraints only")
    if len(constraint.region) != 1:
        raise ValueError("reference solve supports 1-D regions only")
    (lo, hi), = constraint.region
    X = np.linspace(lo, hi, int(n_points)).reshape(-1, 1)
    func = constraint.operator.entries[0][0]
    gm = constraint.gamma()
    offset = constraint.offset[0]

    stride = max(len(X) // max(init, 1), 1)
    active_idx = sorted(set(range(0, len(X), stride)) | {len(X) - 1})
    model = None
    value = math.nan
    for _ in range(max_rounds):
        pts = [tuple(X[i]) for i in active_idx]
        records = discretize(constraint, pts,
                             constraint_index=constraint_index)
        model, sol, _ = solve_problem(spec, records, settings=settings)
        value = sol.objective
        vals = _functional_grid(model, func, X)
        if constraint.shift is not None:
            vals = vals - _functional_grid(constraint.shift, func, X)
        bias = model.bias[: gm.shape[1]] if gm.shape[1] else np.zeros(0)
        slack = vals + (gm[0] @ bias if gm.shape[1] else 0.0) - offset
        violated = np.where(slack < -tol)[0]
        if violated.size == 0:
            break
        worst = violated[np.argsort(slack[violated])][:batch]
        active_idx = sorted(set(active_idx) | set(int(i) for i in worst))
    return model, float(value), len(active_idx)


# --------------------------------------------------------------------------
# Bound report
# --------------------------------------------------------------------------

@dataclass
class BoundReport:
    v_app: float
    v_relax: float | None = None
    gap: float | None = None
    radius_f: float | None = None
    radius_b: float | None = None
    a_priori: float | None = None
    a_priori_note: str = ""
    eta_inf: float | None = None
    fill_dist: float | None = None
    mu_f: float | None = None
    mu_b: float | None = None

    def to_json(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def _record_anchor(rec) -> tuple | None:
    if isinstance(rec, (LinearRecord, SocBufferRecord)):
        return rec.atom.x
    if isinstance(rec, Rsoc2x2Record):
        return rec.atoms[0][0].x
    if isinstance(rec, InclusionRecord):
        return rec.normal.x
    return None


def _record_width(rec) -> float:
    if isinstance(rec, SocBufferRecord):
        return rec.eta
    if isinstance(rec, Rsoc2x2Record):
        return rec.eta
    if isinstance(rec, InclusionRecord):
        return getattr(rec, "diameter", 0.0)
    return 0.0


def compute_bounds(spec: ProblemSpec, records: list, v_app: float,
                   relax=None, mu_f: float | None = None,
                   mu_b: float | None = None,
                   lipschitz_b: float | None = None,
                   bias_direction=None, model: Model | None = None,
                   grid_res: int = 33,
                   settings: SolverSettings | None = None) -> BoundReport:
    """Certificate sandwich, error radii, and the a-priori bound value.

    ``relax`` may be a precomputed relaxation value or a ConeProgram to
    solve.  Radii need the strong-convexity moduli; the a-priori value
    needs the bias Lipschitz constant and a bias direction with
    ``bias_map @ direction > 0`` rowwise on every constraint.
    """
    rep = BoundReport(v_app=float(v_app), mu_f=mu_f, mu_b=mu_b)
    if isinstance(relax, ConeProgram):
        rsol = solve(relax, settings=settings)
        rep.v_relax = rsol.objective
    elif relax is not None:
        rep.v_relax = float(relax)
    if rep.v_relax is not None:
        rep.gap = rep.v_app - rep.v_relax
        if mu_f:
            rep.radius_f = math.sqrt(2.0 * max(rep.gap, 0.0) / mu_f)
        if mu_b:
            rep.radius_b = math.sqrt(2.0 * max(rep.gap, 0.0) / mu_b)

    widths = [_record_width(r) for r in records]
    rep.eta_inf = max(widths) if widths else None

    by_constraint: dict = {}
    for rec in records:
        anchor = _record_anchor(rec)
        if anchor is not None and rec.provenance:
            by_constraint.setdefault(rec.provenance[0], []).append(anchor)
    fills = []
    for ci, anchors in by_constraint.items():
        if ci < len(spec.constraints):
            region = spec.constraints[ci].region
            fills.append(fill_distance(anchors, region, grid_res))
    rep.fill_dist = max(fills) if fills else None

    if lipschitz_b is not None and bias_direction is not None \
            and model is not None and rep.eta_inf is not None:
        beta = np.asarray(bias_direction, dtype=float)
        c_f = 0.0
        ok = True
        for c in spec.constraints:
            gm = c.gamma()
            prod = gm @ beta[: gm.shape[1]] if gm.shape[1] else \
                np.zeros(c.size)
            if np.any(prod <= 0):
                ok = False
                break
            dist = _norm_against_shift(model, c)
            c_f = max(c_f, dist / float(np.min(prod)))
        if ok:
            rep.a_priori = (
                lipschitz_b * c_f * float(np.linalg.norm(beta)) * rep.eta_inf
            )
            rep.a_priori_note = (
                "uses the tightened solution's norm as surrogate"
            )
        else:
            rep.a_priori_note = (
                "unavailable: bias direction not strictly positive under "
                "some constraint's bias map"
            )
    return rep


def _norm_against_shift(model: Model, c: ShapeConstraint) -> float:
    if c.shift is None:
        return model.norm
    return model_distance(model, c.shift)
