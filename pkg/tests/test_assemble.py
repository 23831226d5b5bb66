"""Finite-dimensional assembly against closed-form estimation oracles.

Kernel ridge solutions are checked against their normal equations,
minimum-norm interpolation against the Gram-inverse formula, and the
constrained programs against feasibility guarantees evaluated on dense
grids.
"""

import math

import numpy as np
import pytest

from shapekernel import (
    Atom,
    BoundReport,
    DiffFunctional,
    Equality,
    GaussianKernel,
    InclusionRecord,
    LinearRecord,
    Model,
    NormBound,
    NormMin,
    Observation,
    ProblemSpec,
    Ridge,
    Rsoc2x2Record,
    SdpOperator,
    ShapeConstraint,
    SocBufferRecord,
    apply_functional,
    assemble,
    collect_atoms,
    compute_bounds,
    cover_box,
    discretize,
    eta_for,
    fill_distance,
    omega_cover,
    relax_records,
    solve_problem,
    solve_reference,
    tighten_omega,
    tighten_soc,
)


def value_obs(xs, ys, weights=None):
    weights = [1.0] * len(xs) if weights is None else weights
    return [
        Observation(DiffFunctional.value(1), (float(x),), float(y),
                    weight=float(w))
        for x, y, w in zip(xs, ys, weights)
    ]


@pytest.fixture
def kernel():
    return GaussianKernel([0.5])


class TestCollectAtoms:
    def test_deduplication_across_sources(self, kernel):
        obs = value_obs([0.1, 0.5], [1.0, 2.0])
        spec = ProblemSpec(kernel=kernel, observations=obs, loss="squared")
        rec = LinearRecord(
            atom=Atom((0.5,), DiffFunctional.value(1)), gamma=(),
            offset=0.0,
        )
        atoms = collect_atoms(spec, [rec, rec])
        assert len(atoms) == 2  # (0.5, value) shared with the observation

    def test_opposite_sign_normals_share_column(self, kernel):
        spec = ProblemSpec(kernel=kernel,
                           observations=value_obs([0.1], [0.0]),
                           loss="squared")
        plus = InclusionRecord(
            r0=1.0, normal=Atom((0.4,), DiffFunctional.value(1, beta=1.0)),
            rho=0.5, gamma=(), offset=0.0, provenance=(0, 0),
        )
        minus = InclusionRecord(
            r0=1.0, normal=Atom((0.4,), DiffFunctional.value(1, beta=-1.0)),
            rho=0.5, gamma=(), offset=0.0, provenance=(0, 1),
        )
        atoms = collect_atoms(spec, [plus, minus])
        assert len(atoms) == 2  # one observation + one oriented normal

    def test_rsoc_upper_triangle_collected(self, kernel):
        val = DiffFunctional.value(1)
        der = DiffFunctional.partial(1, axis=0)
        a = Atom((0.3,), val)
        b = Atom((0.3,), der)
        rec = Rsoc2x2Record(atoms=((a, b), (b, a)), eta=0.0,
                            gamma=((), ()), offset=(0.0, 0.0))
        spec = ProblemSpec(kernel=kernel, regularizer=Ridge(1.0))
        atoms = collect_atoms(spec, [rec])
        assert len(atoms) == 2

    def test_unknown_record_rejected(self, kernel):
        spec = ProblemSpec(kernel=kernel, regularizer=Ridge(1.0))
        with pytest.raises(TypeError, match="unknown record type"):
            collect_atoms(spec, [object()])


class TestRidgeRegression:
    def test_matches_normal_equations(self, kernel):
        rng = np.random.default_rng(17)
        xs = np.linspace(0.0, 1.0, 8)
        ys = np.sin(2 * xs) + 0.05 * rng.normal(size=8)
        lam = 0.05
        spec = ProblemSpec(kernel=kernel, observations=value_obs(xs, ys),
                           loss="squared", regularizer=Ridge(lam))
        model, sol, prog = solve_problem(spec, [])
        assert sol.status == "optimal"

        K = np.array([[kernel.eval([a], [b])[0, 0] for b in xs] for a in xs])
        N = len(xs)
        a_ref = np.linalg.solve(K + N * lam * np.eye(N), ys)
        # cond(K) ~ 2e8 here, so raw coefficients are only identified up to
        # directions the Gram barely sees; compare in function space.
        np.testing.assert_allclose(K @ model.coeffs, K @ a_ref, atol=1e-8)
        diff = np.asarray(model.coeffs) - a_ref
        assert float(np.sqrt(diff @ K @ diff)) < 1e-6

        v_ref = float(
            np.mean((K @ a_ref - ys) ** 2) + lam * a_ref @ K @ a_ref
        )
        assert sol.objective == pytest.approx(v_ref, rel=1e-8)

    def test_weighted_ridge(self, kernel):
        xs = np.array([0.0, 0.3, 0.7, 1.0])
        ys = np.array([1.0, -0.5, 0.25, 2.0])
        w = np.array([1.0, 4.0, 0.5, 2.0])
        lam = 0.1
        spec = ProblemSpec(
            kernel=kernel,
            observations=value_obs(xs, ys, w),
            loss="squared",
            regularizer=Ridge(lam),
        )
        model, sol, _ = solve_problem(spec, [])
        K = np.array([[kernel.eval([a], [b])[0, 0] for b in xs] for a in xs])
        N = len(xs)
        # Stationarity: (2/N) K W (K a - y) + 2 lam K a = 0.
        a_ref = np.linalg.solve(np.diag(w) @ K + N * lam * np.eye(N), w * ys)
        np.testing.assert_allclose(model.coeffs, a_ref, atol=1e-7)

    def test_bias_column(self, kernel):
        # Data with a constant offset: the bias should absorb it.
        xs = np.linspace(0, 1, 10)
        ys = 5.0 + 0.1 * np.sin(3 * xs)
        obs = [
            Observation(DiffFunctional.value(1), (float(x),), float(y),
                        bias_row=(1.0,))
            for x, y in zip(xs, ys)
        ]
        spec = ProblemSpec(kernel=kernel, observations=obs, loss="squared",
                           regularizer=Ridge(1.0), bias_dim=1)
        model, sol, _ = solve_problem(spec, [])
        # Strong ridge forces f ~ 0, so the bias carries the mean.
        assert model.bias[0] == pytest.approx(np.mean(ys), abs=0.05)

    def test_bias_set_zero_removes_columns(self, kernel):
        obs = [
            Observation(DiffFunctional.value(1), (0.2,), 1.0,
                        bias_row=(1.0,))
        ]
        spec = ProblemSpec(kernel=kernel, observations=obs, loss="squared",
                           regularizer=Ridge(0.1), bias_dim=1,
                           bias_set="zero")
        model, sol, prog = solve_problem(spec, [])
        assert prog.meta["bias_dim"] == 0
        np.testing.assert_array_equal(model.bias, [0.0])


class TestNormObjectives:
    def test_norm_min_interpolation(self, kernel):
        xs = [0.0, 0.5, 1.0]
        ys = [0.0, 1.5, 0.0]
        eqs = [
            Equality(DiffFunctional.value(1), (float(x),), float(y))
            for x, y in zip(xs, ys)
        ]
        spec = ProblemSpec(kernel=kernel, equalities=eqs, loss="none",
                           regularizer=NormMin())
        model, sol, prog = solve_problem(spec, [])
        K = np.array([[kernel.eval([a], [b])[0, 0] for b in xs] for a in xs])
        a_ref = np.linalg.solve(K, np.asarray(ys))
        norm_ref = math.sqrt(a_ref @ K @ a_ref)
        np.testing.assert_allclose(model.coeffs, a_ref, atol=1e-6)
        assert model.norm == pytest.approx(norm_ref, rel=1e-6)
        # The epigraph objective value is the norm itself.
        assert sol.objective == pytest.approx(norm_ref, rel=1e-6)
        assert len(prog.meta["t_keys"]) == 1

    def test_norm_bound_binds_when_small(self, kernel):
        xs = np.linspace(0, 1, 6)
        ys = np.sin(4 * xs) + 1.0
        lam_tilde = 0.4
        spec = ProblemSpec(
            kernel=kernel,
            observations=value_obs(xs, ys),
            loss="squared",
            regularizer=NormBound(lam_tilde),
        )
        model, sol, _ = solve_problem(spec, [])
        assert model.norm == pytest.approx(lam_tilde, rel=1e-4)

    def test_norm_bound_slack_when_large(self, kernel):
        xs = np.linspace(0, 1, 6)
        ys = np.sin(4 * xs)
        spec = ProblemSpec(
            kernel=kernel,
            observations=value_obs(xs, ys),
            loss="squared",
            regularizer=NormBound(1e3),
        )
        model, sol, _ = solve_problem(spec, [])
        # Interpolation is feasible, so the loss goes to ~zero.
        assert sol.objective == pytest.approx(0.0, abs=1e-6)

    def test_equalities_enforced(self, kernel):
        spec = ProblemSpec(
            kernel=kernel,
            observations=value_obs([0.2, 0.8], [0.5, -0.5]),
            loss="squared",
            regularizer=Ridge(0.01),
            equalities=[Equality(DiffFunctional.value(1), (0.5,), 2.0)],
        )
        model, sol, _ = solve_problem(spec, [])
        got = apply_functional(DiffFunctional.value(1), model, [0.5])
        assert got == pytest.approx(2.0, abs=1e-7)


class TestConstrainedSolves:
    def test_discretized_monotone_fit(self, kernel):
        rng = np.random.default_rng(3)
        xs = np.linspace(0, 1, 12)
        ys = -0.5 * xs + 0.1 * rng.normal(size=12)  # decreasing data
        c = ShapeConstraint(
            region=((0.0, 1.0),),
            operator=SdpOperator.scalar(DiffFunctional.partial(1, axis=0)),
            offset=(0.0,),
            mode="discretized",
        )
        grid = [(float(v),) for v in np.linspace(0, 1, 21)]
        records = discretize(c, grid)
        spec = ProblemSpec(kernel=kernel, observations=value_obs(xs, ys),
                           loss="squared", regularizer=Ridge(0.01),
                           constraints=[c])
        model, sol, _ = solve_problem(spec, records)
        D = DiffFunctional.partial(1, axis=0)
        slopes = [apply_functional(D, model, x) for x in grid]
        assert min(slopes) >= -1e-7

        free = ProblemSpec(kernel=kernel, observations=value_obs(xs, ys),
                           loss="squared", regularizer=Ridge(0.01))
        free_model, _, _ = solve_problem(free, [])
        free_slopes = [apply_functional(D, free_model, x) for x in grid]
        assert min(free_slopes) < -1e-3  # the constraint actually bit

    def test_buffered_rows_guarantee_feasibility_everywhere(self, kernel):
        from shapekernel import verify_pointwise

        c = ShapeConstraint(
            region=((0.2, 0.8),),
            operator=SdpOperator.scalar(DiffFunctional.value(1)),
            offset=(0.3,),
            mode="soc_ball",
        )
        cover = cover_box([(0.2, 0.8)], 0.02)
        etas = [eta_for(kernel, c.operator, b.center, b.radius, norm=b.norm)
                for b in cover]
        records = tighten_soc(c, cover, etas)
        xs = np.linspace(0, 1, 9)
        spec = ProblemSpec(
            kernel=kernel,
            observations=value_obs(xs, np.zeros(9)),  # pulls f below 0.3
            loss="squared",
            regularizer=Ridge(0.005),
            constraints=[c],
        )
        model, sol, prog = solve_problem(spec, records)
        report = verify_pointwise(model, c, grid_res=2001)
        assert report["maxViolation"] <= 1e-6
        # Buffered rows share one epigraph: a single t column.
        assert len(prog.meta["t_keys"]) == 1

    def test_enclosure_rows_add_one_xi_each(self, kernel):
        c = ShapeConstraint(
            region=((0.2, 0.8),),
            operator=SdpOperator.scalar(DiffFunctional.value(1)),
            offset=(0.1,),
            mode="omega",
        )
        cover = cover_box([(0.2, 0.8)], 0.05)
        elems = omega_cover(kernel, c.operator.entries[0][0], cover,
                            style="ball_halfspace")
        records = tighten_omega(c, elems)
        xs = np.linspace(0.2, 0.8, 7)
        spec = ProblemSpec(
            kernel=kernel,
            observations=value_obs(xs, np.full(7, 0.5)),
            loss="squared",
            regularizer=Ridge(0.01),
            constraints=[c],
        )
        model, sol, prog = solve_problem(spec, records)
        assert len(prog.meta["xi_indices"]) == len(records)
        assert all(v >= -1e-9 for v in model.aux["xi"].values())
        # Guaranteed tightening: feasible on a dense grid.
        from shapekernel import verify_pointwise

        report = verify_pointwise(model, c, grid_res=2001)
        assert report["maxViolation"] <= 1e-6

    def test_infinite_rho_pins_xi_out_of_layout(self, kernel):
        rec = InclusionRecord(
            r0=1.0,
            normal=Atom((0.5,), DiffFunctional.value(1)),
            rho=math.inf,
            gamma=(),
            offset=-1.0,  # -offset = +1 > 0 keeps it feasible
            provenance=(0, 0),
        )
        spec = ProblemSpec(
            kernel=kernel,
            observations=value_obs([0.4], [0.2]),
            loss="squared",
            regularizer=Ridge(0.1),
        )
        model, sol, prog = solve_problem(spec, [rec])
        assert prog.meta["xi_indices"] == {}

    def test_infeasible_tightening_raises(self, kernel):
        # ||f|| <= 0.05 cannot reach f >= 10 anywhere.
        c = ShapeConstraint(
            region=((0.0, 1.0),),
            operator=SdpOperator.scalar(DiffFunctional.value(1)),
            offset=(10.0,),
        )
        cover = cover_box([(0.0, 1.0)], 0.05)
        etas = [eta_for(kernel, c.operator, b.center, b.radius, norm=b.norm)
                for b in cover]
        records = tighten_soc(c, cover, etas)
        spec = ProblemSpec(
            kernel=kernel,
            observations=value_obs([0.5], [0.0]),
            loss="squared",
            regularizer=NormBound(0.05),
            constraints=[c],
        )
        with pytest.raises(RuntimeError, match="too strong|infeasible"):
            solve_problem(spec, records)

    def test_shift_model_creates_second_epigraph(self, kernel):
        shift = Model(kernel, (Atom((0.5,), DiffFunctional.value(1)),),
                      np.array([1.0]))
        c = ShapeConstraint(
            region=((0.2, 0.8),),
            operator=SdpOperator.scalar(DiffFunctional.value(1)),
            offset=(-2.0,),
            shift=shift,
            mode="soc_ball",
        )
        cover = cover_box([(0.2, 0.8)], 0.1)
        etas = [eta_for(kernel, c.operator, b.center, b.radius, norm=b.norm)
                for b in cover]
        records = tighten_soc(c, cover, etas)
        spec = ProblemSpec(
            kernel=kernel,
            observations=value_obs([0.3, 0.7], [1.0, 1.0]),
            loss="squared",
            regularizer=NormMin(),
            constraints=[c],
        )
        basis = collect_atoms(spec, records)
        prog = assemble(spec, basis, records)
        # Zero-shift epigraph (objective) plus the shifted-constraint one.
        assert len(prog.meta["t_keys"]) == 2


class TestRelaxRecords:
    def test_buffered_rows_lose_eta(self, kernel):
        a = Atom((0.5,), DiffFunctional.value(1))
        soc = SocBufferRecord(atom=a, eta=0.3, gamma=(1.0,), offset=0.2,
                              shift_val=0.1, provenance=(0, 4))
        (lin,) = relax_records([soc])
        assert isinstance(lin, LinearRecord)
        assert lin.atom == a
        assert lin.gamma == (1.0,)
        assert lin.offset == 0.2
        assert lin.shift_val == 0.1
        assert lin.provenance == (0, 4)

    def test_matrix_rows_zeroed(self):
        a = Atom((0.5,), DiffFunctional.value(1))
        rec = Rsoc2x2Record(atoms=((a, a), (a, a)), eta=0.7,
                            gamma=((), ()), offset=(0.0, 0.0))
        (out,) = relax_records([rec])
        assert out.eta == 0.0

    def test_enclosures_have_no_relaxation(self):
        rec = InclusionRecord(
            r0=1.0, normal=Atom((0.0,), DiffFunctional.value(1)),
            rho=0.5, gamma=(), offset=0.0,
        )
        with pytest.raises(ValueError, match="no zero-buffer form"):
            relax_records([rec])

    def test_relaxation_value_lower_bounds_tightened(self, kernel):
        c = ShapeConstraint(
            region=((0.2, 0.8),),
            operator=SdpOperator.scalar(DiffFunctional.value(1)),
            offset=(0.3,),
        )
        cover = cover_box([(0.2, 0.8)], 0.02)
        etas = [eta_for(kernel, c.operator, b.center, b.radius, norm=b.norm)
                for b in cover]
        records = tighten_soc(c, cover, etas)
        xs = np.linspace(0, 1, 9)
        spec = ProblemSpec(
            kernel=kernel,
            observations=value_obs(xs, np.zeros(9)),
            loss="squared",
            regularizer=Ridge(0.005),
            constraints=[c],
        )
        _, tight_sol, _ = solve_problem(spec, records)
        _, relax_sol, _ = solve_problem(spec, relax_records(records))
        assert relax_sol.objective <= tight_sol.objective + 1e-9


class TestSolveReference:
    def test_constraint_generation_matches_full_grid(self, kernel):
        c = ShapeConstraint(
            region=((0.0, 1.0),),
            operator=SdpOperator.scalar(DiffFunctional.value(1)),
            offset=(0.25,),
            mode="discretized",
        )
        xs = np.linspace(0, 1, 7)
        spec = ProblemSpec(
            kernel=kernel,
            observations=value_obs(xs, np.zeros(7)),
            loss="squared",
            regularizer=Ridge(0.01),
            constraints=[c],
        )
        n_points = 150
        model, value, used = solve_reference(spec, c, n_points, init=16,
                                             batch=16)
        # One-shot solve on the full grid must agree.
        grid = [(float(v),) for v in np.linspace(0, 1, n_points)]
        records = discretize(c, grid)
        _, full_sol, _ = solve_problem(spec, records)
        assert value == pytest.approx(full_sol.objective, abs=1e-7)
        assert used <= n_points
        # The returned model is feasible on the whole grid.
        X = np.linspace(0, 1, n_points).reshape(-1, 1)
        vals = model.eval_component_many(X)
        assert vals.min() >= 0.25 - 1e-7

    def test_matrix_constraint_rejected(self, kernel):
        val = DiffFunctional.value(1)
        op = SdpOperator(((val, val), (val, val)))
        c = ShapeConstraint(region=((0.0, 1.0),), operator=op,
                            offset=(0.0, 0.0))
        spec = ProblemSpec(kernel=kernel, regularizer=Ridge(1.0))
        with pytest.raises(ValueError, match="scalar"):
            solve_reference(spec, c, 10)

    def test_multidimensional_region_rejected(self):
        k2 = GaussianKernel([0.5, 0.5])
        c = ShapeConstraint(
            region=((0.0, 1.0), (0.0, 1.0)),
            operator=SdpOperator.scalar(DiffFunctional.value(2)),
            offset=(0.0,),
        )
        spec = ProblemSpec(kernel=k2, regularizer=Ridge(1.0))
        with pytest.raises(ValueError, match="1-D"):
            solve_reference(spec, c, 10)


class TestComputeBounds:
    def make_constrained(self, kernel):
        c = ShapeConstraint(
            region=((0.2, 0.8),),
            operator=SdpOperator.scalar(DiffFunctional.value(1)),
            offset=(0.3,),
            bias_map=((1.0,),),
        )
        cover = cover_box([(0.2, 0.8)], 0.05)
        etas = [eta_for(kernel, c.operator, b.center, b.radius, norm=b.norm)
                for b in cover]
        records = tighten_soc(c, cover, etas)
        xs = np.linspace(0, 1, 9)
        obs = [
            Observation(DiffFunctional.value(1), (float(x),), 0.0,
                        bias_row=(1.0,))
            for x in xs
        ]
        spec = ProblemSpec(
            kernel=kernel, observations=obs, loss="squared",
            regularizer=Ridge(0.01), bias_dim=1, constraints=[c],
        )
        return spec, c, records, cover, etas

    def test_sandwich_and_radius(self, kernel):
        spec, c, records, cover, etas = self.make_constrained(kernel)
        model, sol, _ = solve_problem(spec, records)
        _, relax_sol, _ = solve_problem(spec, relax_records(records))
        rep = compute_bounds(spec, records, sol.objective,
                             relax=relax_sol.objective, mu_f=2.0)
        assert rep.gap == pytest.approx(sol.objective - relax_sol.objective)
        assert rep.gap >= -1e-9
        assert rep.radius_f == pytest.approx(
            math.sqrt(2 * max(rep.gap, 0.0) / 2.0)
        )
        assert rep.eta_inf == pytest.approx(max(etas))
        anchors = [b.center for b in cover]
        assert rep.fill_dist == pytest.approx(
            fill_distance(anchors, c.region, 33), rel=1e-12
        )

    def test_relax_accepts_program(self, kernel):
        spec, c, records, _, _ = self.make_constrained(kernel)
        model, sol, _ = solve_problem(spec, records)
        basis = collect_atoms(spec, relax_records(records))
        relax_prog = assemble(spec, basis, relax_records(records))
        rep = compute_bounds(spec, records, sol.objective, relax=relax_prog)
        assert rep.v_relax is not None
        assert rep.gap >= -1e-8

    def test_a_priori_bound_and_note(self, kernel):
        spec, c, records, _, _ = self.make_constrained(kernel)
        model, sol, _ = solve_problem(spec, records)
        rep = compute_bounds(
            spec, records, sol.objective, relax=sol.objective,
            mu_f=2.0, lipschitz_b=1.5, bias_direction=(1.0,), model=model,
        )
        c_f = model.norm / 1.0  # min Gamma beta = 1
        want = 1.5 * c_f * 1.0 * rep.eta_inf
        assert rep.a_priori == pytest.approx(want, rel=1e-10)
        assert "surrogate" in rep.a_priori_note

    def test_a_priori_unavailable_on_bad_direction(self, kernel):
        spec, c, records, _, _ = self.make_constrained(kernel)
        model, sol, _ = solve_problem(spec, records)
        rep = compute_bounds(
            spec, records, sol.objective, relax=sol.objective,
            lipschitz_b=1.5, bias_direction=(-1.0,), model=model,
        )
        assert rep.a_priori is None
        assert "unavailable" in rep.a_priori_note

    def test_report_serializes(self):
        rep = BoundReport(v_app=1.0, v_relax=0.5, gap=0.5)
        data = rep.to_json()
        assert data["v_app"] == 1.0
        assert data["gap"] == 0.5


class TestSpecValidation:
    def test_unknown_loss_rejected(self, kernel):
        with pytest.raises(ValueError, match="reserved or unknown"):
            ProblemSpec(kernel=kernel, loss="huber")

    def test_loss_or_regularizer_required(self, kernel):
        with pytest.raises(ValueError, match="loss or a regularizer"):
            ProblemSpec(kernel=kernel, loss="none")

    def test_box_bias_needs_bounds(self, kernel):
        with pytest.raises(ValueError, match="needs bounds"):
            ProblemSpec(kernel=kernel, loss="squared", bias_set="box")

    def test_regularizer_validation(self):
        with pytest.raises(ValueError, match="positive"):
            Ridge(0.0)
        with pytest.raises(ValueError, match="positive"):
            NormBound(-1.0)

    def test_bias_box_rows_enforced(self, kernel):
        obs = [
            Observation(DiffFunctional.value(1), (0.5,), 10.0,
                        bias_row=(1.0,))
        ]
        spec = ProblemSpec(
            kernel=kernel, observations=obs, loss="squared",
            regularizer=Ridge(10.0), bias_dim=1, bias_set="box",
            bias_bounds=(-0.5, 0.5),
        )
        model, sol, _ = solve_problem(spec, [])
        # Huge ridge kills f; the bias wants to reach 10 but is boxed.
        assert model.bias[0] == pytest.approx(0.5, abs=1e-5)
