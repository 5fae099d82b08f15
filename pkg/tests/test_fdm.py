import math

import numpy as np
import pytest

from stretchgrid.analytics import black_scholes_vanilla
from stretchgrid.fdm import (BarrierMode, BoundaryCondition, BoundaryKind,
                             GhostContext, GhostSide, GhostSubstage,
                             MarketParams, PdeConfig, SingularSystemError,
                             SpatialOperator, TridiagonalSystem, TrBdf2Stepper,
                             apply_ghost_lagrange3, apply_ghost_linear,
                             attach_boundary_rows, discretize_operator,
                             first_derivative_weights, second_derivative_weights,
                             solve_tridiagonal, trbdf2_step)
from stretchgrid.gridgen import Grid, StretchKind, StretchSpec, build_map, sample_grid
from stretchgrid.instruments import (ContractSpec, ExerciseStyle, OptionType,
                                     constraint_hooks, payoff)
from stretchgrid.placement import (PlacementMode, PlacementSpec, Target,
                                   apply_placement)
from stretchgrid.spline import MonotoneCubic


def dense_matrix(sys: TridiagonalSystem) -> np.ndarray:
    n = sys.diag.size
    a = np.diag(sys.diag)
    if n > 1:
        a += np.diag(sys.lower[1:], -1) + np.diag(sys.upper[:-1], 1)
    if sys.out_of_band is not None:
        r, c, v = sys.out_of_band
        a[r, c] = v
    return a


class TestStencils:
    def test_zero_market_zero_operator(self):
        grid = Grid(np.linspace(10.0, 20.0, 11))
        op = discretize_operator(grid, MarketParams(0.0, 0.0, 0.0))
        assert np.all(op.lower == 0) and np.all(op.diag == 0) and np.all(op.upper == 0)

    def test_second_derivative_exact_on_quadratics(self):
        grid = sample_grid(build_map(
            StretchSpec(StretchKind.CUBIC, 10.0, 200.0, (100.0,), (5.0,))), 60)
        s = grid.points
        hm, hp = s[1:-1] - s[:-2], s[2:] - s[1:-1]
        w = second_derivative_weights(hm, hp)
        v = s ** 2
        d2 = w[0] * v[:-2] + w[1] * v[1:-1] + w[2] * v[2:]
        assert np.max(np.abs(d2 - 2.0)) < 1e-9
        w1 = first_derivative_weights(hm, hp)
        d1 = w1[0] * v[:-2] + w1[1] * v[1:-1] + w1[2] * v[2:]
        assert np.max(np.abs(d1 - 2.0 * s[1:-1])) < 1e-9

    def test_quartic_converges_at_second_order(self):
        # Richardson check: V = S^4 has V_SS = 12 S^2; halving h divides the
        # stencil error by about four.
        errs = []
        for n in (40, 80):
            s = np.linspace(1.0, 3.0, n + 1)
            hm, hp = s[1:-1] - s[:-2], s[2:] - s[1:-1]
            w = second_derivative_weights(hm, hp)
            v = s ** 4
            d2 = w[0] * v[:-2] + w[1] * v[1:-1] + w[2] * v[2:]
            errs.append(np.max(np.abs(d2 - 12.0 * s[1:-1] ** 2)))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)

    def test_operator_row_values(self):
        grid = Grid(np.array([90.0, 100.0, 115.0, 140.0]))
        mkt = MarketParams(0.05, 0.01, 0.3)
        op = discretize_operator(grid, mkt)
        s, hm, hp = 100.0, 10.0, 15.0
        d1 = first_derivative_weights(hm, hp)
        d2 = second_derivative_weights(hm, hp)
        diff = 0.5 * 0.09 * s * s
        conv = 0.04 * s
        assert op.lower[1] == pytest.approx(diff * d2[0] + conv * d1[0])
        assert op.diag[1] == pytest.approx(diff * d2[1] + conv * d1[1] - 0.05)
        assert op.upper[1] == pytest.approx(diff * d2[2] + conv * d1[2])

    def test_rejects_nonmonotone_grid(self):
        bad = Grid.__new__(Grid)
        bad.points = np.array([0.0, 2.0, 1.0, 3.0])
        bad.placed = {}
        with pytest.raises(ValueError):
            discretize_operator(bad, MarketParams())


class TestTridiagonal:
    def test_identity(self):
        n = 7
        sys = TridiagonalSystem(np.zeros(n), np.ones(n), np.zeros(n),
                                np.arange(float(n)))
        assert np.array_equal(solve_tridiagonal(sys), np.arange(float(n)))

    def test_laplacian_with_constructed_rhs(self):
        n = 9
        x = np.arange(1.0, n + 1.0)
        lower = np.full(n, -1.0)
        diag = np.full(n, 2.0)
        upper = np.full(n, -1.0)
        sys = TridiagonalSystem(lower, diag, upper, np.zeros(n))
        rhs = dense_matrix(sys) @ x
        sol = solve_tridiagonal(TridiagonalSystem(lower, diag, upper, rhs))
        assert np.max(np.abs(sol - x)) < 1e-12 * np.max(np.abs(rhs))

    def test_size_one(self):
        sys = TridiagonalSystem(np.zeros(1), np.array([4.0]), np.zeros(1),
                                np.array([8.0]))
        assert solve_tridiagonal(sys) == pytest.approx([2.0])

    def test_zero_pivot_reports_row(self):
        sys = TridiagonalSystem(np.array([0.0, 1.0, 1.0]),
                                np.array([1.0, 1.0, 1.0]),
                                np.array([1.0, 1.0, 0.0]),
                                np.ones(3))
        # row 1 pivot: 1 - 1*1 = 0
        with pytest.raises(SingularSystemError) as err:
            solve_tridiagonal(sys)
        assert err.value.row == 1

    def test_outofband_elimination_matches_dense(self):
        rng = np.random.default_rng(5)
        for trial in range(6):
            n = 6
            lower = rng.normal(size=n)
            upper = rng.normal(size=n)
            diag = rng.normal(size=n) + 6.0
            lower[0] = upper[-1] = 0.0
            rhs = rng.normal(size=n)
            row = 3 if trial % 2 == 0 else 2
            col = row - 2 if trial % 2 == 0 else row + 2
            sys = TridiagonalSystem(lower, diag, upper, rhs, (row, col, 0.8 + trial))
            dense = np.linalg.solve(dense_matrix(sys), rhs)
            reduced = sys.reduce_outofband()
            assert reduced.out_of_band is None
            mine = solve_tridiagonal(reduced)
            assert np.max(np.abs(mine - dense)) < 1e-12 * max(1.0, np.max(np.abs(dense)))

    def test_solve_requires_reduction_first(self):
        sys = TridiagonalSystem(np.zeros(4), np.ones(4), np.zeros(4),
                                np.ones(4), (2, 0, 1.0))
        with pytest.raises(ValueError):
            solve_tridiagonal(sys)

    def test_reduce_rejects_far_entries(self):
        sys = TridiagonalSystem(np.zeros(5), np.ones(5), np.zeros(5),
                                np.ones(5), (4, 0, 1.0))
        with pytest.raises(ValueError):
            sys.reduce_outofband()


class TestTrBdf2:
    def test_zero_operator_keeps_values(self):
        op = SpatialOperator(np.zeros(5), np.zeros(5), np.zeros(5))
        v = np.array([1.0, 3.0, 2.0, 5.0, 4.0])
        out = trbdf2_step(v, 0.1, op)
        assert np.max(np.abs(out - v)) < 1e-14

    def test_pure_discounting_is_third_order_per_step(self):
        r = 0.05
        op = SpatialOperator(np.zeros(4), np.full(4, -r), np.zeros(4))
        v = np.array([1.0, 2.0, 3.0, 4.0])
        errs = []
        for dt in (0.2, 0.1, 0.05):
            out = trbdf2_step(v, dt, op)
            errs.append(np.max(np.abs(out - v * math.exp(-r * dt))))
        assert errs[0] / errs[1] == pytest.approx(8.0, rel=0.15)
        assert errs[1] / errs[2] == pytest.approx(8.0, rel=0.15)

    def test_stepper_equals_single_step_helper(self):
        grid = sample_grid(build_map(StretchSpec(StretchKind.UNIFORM, 0.0, 200.0)), 40)
        mkt = MarketParams(0.05, 0.01, 0.25)
        cfg = PdeConfig(1, BoundaryCondition(BoundaryKind.DEGENERATE_EXACT),
                        BoundaryCondition(BoundaryKind.ZERO_GAMMA))
        v0 = np.maximum(grid.points - 90.0, 0.0)
        stepper = TrBdf2Stepper(grid, mkt, cfg, 0.5, ())
        via_stepper = stepper.run(v0)
        op = attach_boundary_rows(discretize_operator(grid, mkt), grid, mkt, cfg)
        via_helper = trbdf2_step(v0, 0.5, op)
        assert np.max(np.abs(via_stepper - via_helper)) < 1e-12

    def test_vanilla_european_matches_closed_form(self):
        mkt = MarketParams(0.07, 0.02, 0.20)
        grid = sample_grid(build_map(StretchSpec(StretchKind.UNIFORM, 0.0, 300.0)), 800)
        grid = apply_placement(grid, PlacementSpec(PlacementMode.DEFORM,
                                                   (Target(100.0),)))
        cfg = PdeConfig(200, BoundaryCondition(BoundaryKind.DEGENERATE_EXACT),
                        BoundaryCondition(BoundaryKind.ZERO_GAMMA))
        contract = ContractSpec(ExerciseStyle.EUROPEAN_VANILLA, OptionType.CALL,
                                100.0, 1.0)
        stepper = TrBdf2Stepper(grid, mkt, cfg, 1.0, ())
        values = stepper.run(payoff(contract, grid))
        price = float(MonotoneCubic(grid.points, values)(100.0))
        closed = black_scholes_vanilla(100.0, 100.0, 1.0, 0.07, 0.02, 0.20, "call")
        assert price == pytest.approx(closed, rel=2e-5)

    def test_vanilla_spatial_order_two(self):
        # Spatial order on a smoothly deformed uniform grid, holding the
        # time resolution high enough that dt error is negligible.
        mkt = MarketParams(0.07, 0.02, 0.20)
        closed = black_scholes_vanilla(100.0, 100.0, 1.0, 0.07, 0.02, 0.20, "call")
        contract = ContractSpec(ExerciseStyle.EUROPEAN_VANILLA, OptionType.CALL,
                                100.0, 1.0)
        cfg = PdeConfig(400, BoundaryCondition(BoundaryKind.DEGENERATE_EXACT),
                        BoundaryCondition(BoundaryKind.ZERO_GAMMA))
        errs = []
        for steps in (125, 250, 500):
            grid = sample_grid(build_map(
                StretchSpec(StretchKind.UNIFORM, 0.0, 300.0)), steps)
            grid = apply_placement(grid, PlacementSpec(PlacementMode.DEFORM,
                                                       (Target(100.0),)))
            values = TrBdf2Stepper(grid, mkt, cfg, 1.0, ()).run(payoff(contract, grid))
            errs.append(abs(float(MonotoneCubic(grid.points, values)(100.0)) - closed))
        orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
        assert all(1.8 <= o <= 2.2 for o in orders), (errs, orders)

    def test_discrete_maximum_principle(self):
        # Knocked-out call with zero rebate stays (numerically) nonnegative
        # at every step of the standard benchmark regime.
        mkt = MarketParams(0.07, 0.02, 0.20)
        grid = sample_grid(build_map(StretchSpec(StretchKind.UNIFORM, 0.0, 150.0)), 250)
        cfg = PdeConfig(1500, BoundaryCondition(BoundaryKind.DEGENERATE_EXACT),
                        BoundaryCondition(BoundaryKind.ZERO_GAMMA))
        contract = ContractSpec(ExerciseStyle.DISCRETE_KO, OptionType.CALL,
                                100.0, 1.0, barrier_upper=125.0,
                                observations_per_year=250)
        hooks = tuple(constraint_hooks(contract, grid, cfg))
        stepper = TrBdf2Stepper(grid, mkt, cfg, 1.0, hooks)
        v = payoff(contract, grid)
        for j in range(cfg.time_steps):
            v = stepper.step(v, j + 1, j * stepper.dt)
            assert v.min() >= -1e-10


class TestGhostRows:
    def make_ctx(self, barrier, side=GhostSide.UP, rebate=2.0):
        pts = np.linspace(0.0, 10.0, 11)
        if side is GhostSide.UP:
            i0 = int(np.searchsorted(pts, barrier, side="left"))
        else:
            i0 = int(np.searchsorted(pts, barrier, side="right"))
        return GhostContext(pts, i0, barrier, rebate, side)

    def test_linear_weights_on_node(self):
        ctx = self.make_ctx(5.0)
        wg, wa = ctx.linear_weights()
        assert (wg, wa) == (1.0, 0.0)
        v = apply_ghost_linear(ctx, GhostSubstage.EXPLICIT_RHS, np.arange(11.0))
        assert v[5] == 2.0

    def test_linear_explicit_override(self):
        ctx = self.make_ctx(4.6, rebate=0.0)
        v = np.zeros(11)
        out = apply_ghost_linear(ctx, GhostSubstage.EXPLICIT_RHS, v)
        assert out[ctx.ghost] == 0.0
        v[ctx.inner] = 3.0
        out = apply_ghost_linear(ctx, GhostSubstage.EXPLICIT_RHS, v)
        # linear interpolation through (S_inner, 3.0) and (S_ghost, G) is 0 at 4.6
        s = ctx.points
        interp = (out[ctx.ghost] * (4.6 - s[ctx.inner])
                  + 3.0 * (s[ctx.ghost] - 4.6)) / (s[ctx.ghost] - s[ctx.inner])
        assert interp == pytest.approx(0.0, abs=1e-12)

    def test_linear_implicit_row(self):
        ctx = self.make_ctx(4.6, rebate=1.5)
        n = 11
        sys = TridiagonalSystem(np.full(n, -1.0), np.full(n, 3.0),
                                np.full(n, -1.0), np.zeros(n))
        out = apply_ghost_linear(ctx, GhostSubstage.IMPLICIT_MATRIX, sys)
        g = ctx.ghost
        assert out.diag[g] == pytest.approx((4.6 - 4.0) / 1.0)
        assert out.lower[g] == pytest.approx((5.0 - 4.6) / 1.0)
        assert out.upper[g] == 0.0
        assert out.rhs[g] == 1.5

    def test_degenerate_barrier_on_inner_node(self):
        ctx = self.make_ctx(4.6)
        object.__setattr__(ctx, "barrier", 4.0)
        with pytest.raises(ValueError, match="on-grid"):
            ctx.linear_weights()

    def test_lagrange_weights_on_node(self):
        ctx = self.make_ctx(5.0)
        wg, wa, wb = ctx.lagrange3_weights()
        assert (wg, wa, wb) == (1.0, -0.0, 0.0)
        v = apply_ghost_lagrange3(ctx, GhostSubstage.EXPLICIT_RHS, np.arange(11.0))
        assert v[5] == 2.0

    def test_lagrange_elimination_matches_dense(self):
        rng = np.random.default_rng(9)
        pts = np.array([0.0, 1.1, 2.3, 3.2, 4.4, 5.5])
        ctx = GhostContext(pts, 5, 5.0, rebate=0.7, side=GhostSide.UP)
        n = 6
        lower = rng.normal(size=n)
        diag = rng.normal(size=n) + 5.0
        upper = rng.normal(size=n)
        lower[0] = upper[-1] = 0.0
        rhs = rng.normal(size=n)
        base = TridiagonalSystem(lower.copy(), diag.copy(), upper.copy(), rhs.copy())
        stamped = apply_ghost_lagrange3(ctx, GhostSubstage.IMPLICIT_MATRIX, base)
        assert stamped.out_of_band is None
        mine = solve_tridiagonal(stamped)
        # dense solve of the unreduced 4-entry system
        wg, wa, wb = ctx.lagrange3_weights()
        dense = np.diag(diag) + np.diag(lower[1:], -1) + np.diag(upper[:-1], 1)
        dense[5, :] = 0.0
        dense[5, 5], dense[5, 4], dense[5, 3] = wg, wa, wb
        rhs_d = rhs.copy()
        rhs_d[5] = 0.7
        expect = np.linalg.solve(dense, rhs_d)
        assert np.max(np.abs(mine - expect)) < 1e-12 * max(1.0, np.max(np.abs(expect)))

    def test_down_side_symmetry(self):
        pts = np.linspace(0.0, 10.0, 11)
        ctx = GhostContext(pts, 3, 2.4, rebate=0.0, side=GhostSide.DOWN)
        assert ctx.ghost == 2 and ctx.inner == 3
        v = np.zeros(11)
        v[3] = 1.0
        out = apply_ghost_linear(ctx, GhostSubstage.EXPLICIT_RHS, v)
        s = pts
        interp = (out[2] * (2.4 - s[3]) + 1.0 * (2.4 - s[2])) / (s[3] - s[2]) * 1.0
        interp = out[2] * (s[3] - 2.4) / (s[3] - s[2]) + 1.0 * (2.4 - s[2]) / (s[3] - s[2])
        assert interp == pytest.approx(0.0, abs=1e-12)

    def test_on_node_barrier_all_modes_agree(self):
        mkt = MarketParams(0.10, 0.0, 0.25)
        grid = sample_grid(build_map(StretchSpec(StretchKind.UNIFORM, 90.0, 160.0)), 70)
        contract = ContractSpec(ExerciseStyle.CONTINUOUS_DOUBLE_KO, OptionType.CALL,
                                100.0, 1.0, barrier_lower=90.0, barrier_upper=160.0)
        sols = {}
        for mode in BarrierMode:
            cfg = PdeConfig(70, BoundaryCondition(BoundaryKind.DIRICHLET_VALUE, 0.0),
                            BoundaryCondition(BoundaryKind.DIRICHLET_VALUE, 0.0),
                            barrier_mode=mode)
            hooks = tuple(constraint_hooks(contract, grid, cfg))
            sols[mode] = TrBdf2Stepper(grid, mkt, cfg, 1.0, hooks).run(
                payoff(contract, grid))
        base = sols[BarrierMode.ON_GRID_DIRICHLET]
        for mode in (BarrierMode.GHOST_LINEAR, BarrierMode.GHOST_LAGRANGE3):
            assert np.max(np.abs(sols[mode] - base)) <= 1e-12
