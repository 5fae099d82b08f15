"""Black-Scholes spatial discretization and TR-BDF2 time stepping.

The spatial operator L V = 0.5 sigma^2 S^2 V_SS + (r - q) S V_S - r V is
discretized with central three-point stencils on a nonuniform grid.  Time
marches backward from maturity with the composite trapezoidal/BDF2 step
(gamma = 2 - sqrt(2), so both substages share one tridiagonal matrix).
Constraint hooks enforce Dirichlet rows, off-grid barrier (ghost) rows,
discrete knock-outs and the American exercise projection.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .gridgen import Grid

GAMMA = 2.0 - math.sqrt(2.0)
OMEGA = GAMMA / 2.0                      # shared implicit coefficient
BDF2_NEW = 1.0 / (GAMMA * (2.0 - GAMMA))             # weight of the stage value
BDF2_OLD = (1.0 - GAMMA) ** 2 / (GAMMA * (2.0 - GAMMA))


class SingularSystemError(np.linalg.LinAlgError):
    def __init__(self, row: int, message: str = ""):
        self.row = row
        super().__init__(message or f"zero pivot at row {row}")


@dataclass(frozen=True)
class MarketParams:
    rate: float = 0.0
    dividend: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ValueError("sigma must be nonnegative")


class BoundaryKind(enum.Enum):
    DIRICHLET_VALUE = "dirichlet"
    ZERO_GAMMA = "zero_gamma"
    DEGENERATE_EXACT = "degenerate_exact"


@dataclass(frozen=True)
class BoundaryCondition:
    kind: BoundaryKind = BoundaryKind.ZERO_GAMMA
    value: float = 0.0


class BarrierMode(enum.Enum):
    ON_GRID_DIRICHLET = "on_grid"
    GHOST_LINEAR = "ghost_linear"
    GHOST_LAGRANGE3 = "ghost_lagrange3"


@dataclass(frozen=True)
class PdeConfig:
    time_steps: int
    boundary_lower: BoundaryCondition = BoundaryCondition(BoundaryKind.ZERO_GAMMA)
    boundary_upper: BoundaryCondition = BoundaryCondition(BoundaryKind.ZERO_GAMMA)
    barrier_mode: BarrierMode = BarrierMode.ON_GRID_DIRICHLET

    def __post_init__(self):
        if self.time_steps < 1:
            raise ValueError("need at least one time step")


# ---------------------------------------------------------------------------
# Spatial discretization


def first_derivative_weights(h_minus, h_plus):
    """Central nonuniform 3-point weights (w_lower, w_center, w_upper) for V_S."""
    return (-h_plus / (h_minus * (h_minus + h_plus)),
            (h_plus - h_minus) / (h_minus * h_plus),
            h_minus / (h_plus * (h_minus + h_plus)))


def second_derivative_weights(h_minus, h_plus):
    """Central nonuniform 3-point weights for V_SS (exact on quadratics)."""
    return (2.0 / (h_minus * (h_minus + h_plus)),
            -2.0 / (h_minus * h_plus),
            2.0 / (h_plus * (h_minus + h_plus)))


@dataclass
class SpatialOperator:
    """Tridiagonal rows of L; boundary rows depend on the PdeConfig."""

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    @property
    def n(self) -> int:
        return self.diag.size

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[1:] += self.lower[1:] * v[:-1]
        out[:-1] += self.upper[:-1] * v[1:]
        return out


def discretize_operator(grid: Grid, mkt: MarketParams) -> SpatialOperator:
    """Interior rows of the Black-Scholes operator; boundary rows left zero."""
    s = grid.points
    if s.size < 3:
        raise ValueError("need at least three grid nodes")
    if np.any(np.diff(s) <= 0.0):
        raise ValueError("grid is not strictly increasing")
    n = s.size
    lower = np.zeros(n)
    diag = np.zeros(n)
    upper = np.zeros(n)
    hm = s[1:-1] - s[:-2]
    hp = s[2:] - s[1:-1]
    d1 = first_derivative_weights(hm, hp)
    d2 = second_derivative_weights(hm, hp)
    si = s[1:-1]
    conv = (mkt.rate - mkt.dividend) * si
    diff = 0.5 * mkt.sigma ** 2 * si ** 2
    lower[1:-1] = diff * d2[0] + conv * d1[0]
    diag[1:-1] = diff * d2[1] + conv * d1[1] - mkt.rate
    upper[1:-1] = diff * d2[2] + conv * d1[2]
    return SpatialOperator(lower, diag, upper)


def attach_boundary_rows(op: SpatialOperator, grid: Grid, mkt: MarketParams,
                         config: PdeConfig) -> SpatialOperator:
    """Fill the first and last operator rows per the configured treatment."""
    lower = op.lower.copy()
    diag = op.diag.copy()
    upper = op.upper.copy()
    s = grid.points
    for row, bc in ((0, config.boundary_lower), (s.size - 1, config.boundary_upper)):
        if bc.kind is BoundaryKind.DIRICHLET_VALUE:
            lower[row] = diag[row] = upper[row] = 0.0
        elif bc.kind is BoundaryKind.DEGENERATE_EXACT:
            if abs(s[row]) > 1e-12 * (s[-1] - s[0]):
                raise ValueError("degenerate-exact row is only valid at S = 0")
            lower[row] = upper[row] = 0.0
            diag[row] = -mkt.rate
        else:  # zero gamma: drop V_SS, one-sided first derivative
            if row == 0:
                h = s[1] - s[0]
                conv = (mkt.rate - mkt.dividend) * s[0]
                lower[0] = 0.0
                diag[0] = -conv / h - mkt.rate
                upper[0] = conv / h
            else:
                h = s[-1] - s[-2]
                conv = (mkt.rate - mkt.dividend) * s[-1]
                lower[row] = -conv / h
                diag[row] = conv / h - mkt.rate
                upper[row] = 0.0
    return SpatialOperator(lower, diag, upper)


# ---------------------------------------------------------------------------
# Tridiagonal systems


@dataclass
class TridiagonalSystem:
    """A x = rhs with lower[i] = A[i, i-1], diag[i] = A[i, i], upper[i] = A[i, i+1].

    ``out_of_band`` optionally holds one extra (row, col, value) entry two
    columns off the diagonal, pending elimination.
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    rhs: np.ndarray
    out_of_band: tuple[int, int, float] | None = None

    def __post_init__(self):
        n = self.diag.size
        if not (self.lower.size == self.upper.size == self.rhs.size == n):
            raise ValueError("inconsistent system lengths")

    def reduce_outofband(self) -> "TridiagonalSystem":
        """Fold the out-of-band entry into the band via one row combination."""
        if self.out_of_band is None:
            return self
        row, col, value = self.out_of_band
        if abs(row - col) != 2:
            raise ValueError("out-of-band entry must sit two columns off the diagonal")
        mid = (row + col) // 2
        pivot = self.lower[mid] if col < row else self.upper[mid]
        if pivot == 0.0:
            raise SingularSystemError(mid, f"zero pivot in row {mid} during elimination")
        f = value / pivot
        lower = self.lower.copy()
        diag = self.diag.copy()
        upper = self.upper.copy()
        rhs = self.rhs.copy()
        if col < row:   # entry at (row, row-2), eliminate with row-1
            lower[row] -= f * diag[mid]
            diag[row] -= f * upper[mid]
        else:           # entry at (row, row+2), eliminate with row+1
            upper[row] -= f * diag[mid]
            diag[row] -= f * lower[mid]
        rhs[row] -= f * rhs[mid]
        return TridiagonalSystem(lower, diag, upper, rhs, None)


def solve_tridiagonal(sys: TridiagonalSystem) -> np.ndarray:
    """Thomas algorithm; raises SingularSystemError with the pivot row."""
    if sys.out_of_band is not None:
        raise ValueError("reduce_outofband before solving")
    n = sys.diag.size
    if n == 1:
        if sys.diag[0] == 0.0:
            raise SingularSystemError(0)
        return sys.rhs / sys.diag
    cp = np.empty(n)
    dp = np.empty(n)
    den = sys.diag[0]
    if den == 0.0:
        raise SingularSystemError(0)
    cp[0] = sys.upper[0] / den
    dp[0] = sys.rhs[0] / den
    for i in range(1, n):
        den = sys.diag[i] - sys.lower[i] * cp[i - 1]
        if den == 0.0:
            raise SingularSystemError(i)
        cp[i] = sys.upper[i] / den
        dp[i] = (sys.rhs[i] - sys.lower[i] * dp[i - 1]) / den
    for i in range(n - 2, -1, -1):
        dp[i] -= cp[i] * dp[i + 1]
    return dp


# ---------------------------------------------------------------------------
# Ghost-point barrier rows


class GhostSide(enum.Enum):
    UP = "up"
    DOWN = "down"


class GhostSubstage(enum.Enum):
    EXPLICIT_RHS = "explicit_rhs"
    IMPLICIT_MATRIX = "implicit_matrix"


@dataclass(frozen=True)
class GhostContext:
    """Off-grid barrier bracketed by nodes i0-1 and i0.

    For an up barrier the ghost node is i0 (first node at or above the
    barrier); for a down barrier it is i0-1 (first node at or below).  The
    barrier may coincide with the ghost node, in which case the rows reduce
    exactly to a Dirichlet row; coincidence with the interior-side node is
    rejected (use the on-grid Dirichlet treatment there).
    """

    points: np.ndarray
    i0: int
    barrier: float
    rebate: float = 0.0
    side: GhostSide = GhostSide.UP

    def __post_init__(self):
        s = self.points
        if not 1 <= self.i0 <= s.size - 1:
            raise ValueError("bracketing index out of range")
        lo, hi = s[self.i0 - 1], s[self.i0]
        if self.side is GhostSide.UP:
            if not lo < self.barrier <= hi:
                raise ValueError("need S[i0-1] < barrier <= S[i0] for an up barrier")
        else:
            if not lo <= self.barrier < hi:
                raise ValueError("need S[i0-1] <= barrier < S[i0] for a down barrier")

    @property
    def ghost(self) -> int:
        return self.i0 if self.side is GhostSide.UP else self.i0 - 1

    @property
    def inner(self) -> int:
        return self.i0 - 1 if self.side is GhostSide.UP else self.i0

    def linear_weights(self) -> tuple[float, float]:
        """(w_ghost, w_inner) with w.V interpolating the value at the barrier."""
        s = self.points
        g, a = self.ghost, self.inner
        if self.barrier == s[a]:
            raise ValueError("barrier on the interior-side node; use on-grid Dirichlet")
        return ((self.barrier - s[a]) / (s[g] - s[a]),
                (self.barrier - s[g]) / (s[a] - s[g]))

    def lagrange3_nodes(self) -> tuple[int, int, int]:
        """(ghost, inner, second-inner) node indices for the quadratic rows."""
        g, a = self.ghost, self.inner
        b = a - 1 if self.side is GhostSide.UP else a + 1
        if not 0 <= b < self.points.size:
            raise ValueError("three-point rows need two interior nodes beside the ghost")
        return g, a, b

    def lagrange3_weights(self) -> tuple[float, float, float]:
        s = self.points
        g, a, b = self.lagrange3_nodes()
        x = self.barrier
        wg = (x - s[a]) * (x - s[b]) / ((s[g] - s[a]) * (s[g] - s[b]))
        wa = (x - s[g]) * (x - s[b]) / ((s[a] - s[g]) * (s[a] - s[b]))
        wb = (x - s[g]) * (x - s[a]) / ((s[b] - s[g]) * (s[b] - s[a]))
        return wg, wa, wb


def apply_ghost_linear(ctx: GhostContext, substage: GhostSubstage, state):
    """Two-point ghost treatment of an off-grid barrier.

    EXPLICIT_RHS takes the value vector at the old time level and overrides
    the ghost node with G so that linear interpolation hits the rebate at
    the barrier.  IMPLICIT_MATRIX takes a TridiagonalSystem and replaces the
    ghost row with the interpolation weights and rhs = rebate.
    """
    wg, wa = ctx.linear_weights()
    g, a = ctx.ghost, ctx.inner
    if substage is GhostSubstage.EXPLICIT_RHS:
        v = np.asarray(state, dtype=float).copy()
        v[g] = (ctx.rebate - wa * v[a]) / wg
        return v
    sys: TridiagonalSystem = state
    lower = sys.lower.copy()
    diag = sys.diag.copy()
    upper = sys.upper.copy()
    rhs = sys.rhs.copy()
    diag[g] = wg
    if a == g - 1:
        lower[g] = wa
        upper[g] = 0.0
    else:
        upper[g] = wa
        lower[g] = 0.0
    rhs[g] = ctx.rebate
    return TridiagonalSystem(lower, diag, upper, rhs, sys.out_of_band)


def apply_ghost_lagrange3(ctx: GhostContext, substage: GhostSubstage, state):
    """Three-point (quadratic) ghost treatment of an off-grid barrier.

    The implicit form writes three Lagrange weights into the ghost row; the
    entry two columns off the diagonal is immediately eliminated against the
    neighboring row so the system stays tridiagonal.
    """
    wg, wa, wb = ctx.lagrange3_weights()
    g, a, b = ctx.lagrange3_nodes()
    if substage is GhostSubstage.EXPLICIT_RHS:
        v = np.asarray(state, dtype=float).copy()
        v[g] = (ctx.rebate - wa * v[a] - wb * v[b]) / wg
        return v
    sys: TridiagonalSystem = state
    lower = sys.lower.copy()
    diag = sys.diag.copy()
    upper = sys.upper.copy()
    rhs = sys.rhs.copy()
    diag[g] = wg
    if a == g - 1:
        lower[g] = wa
        upper[g] = 0.0
    else:
        upper[g] = wa
        lower[g] = 0.0
    rhs[g] = ctx.rebate
    out = TridiagonalSystem(lower, diag, upper, rhs, (g, b, wb))
    return out.reduce_outofband()


# ---------------------------------------------------------------------------
# Constraint hooks


class Hook:
    """Constraint applied while stepping; methods default to no-ops."""

    def override_previous(self, v: np.ndarray, tau: float) -> np.ndarray:
        return v

    def owned_rows(self) -> tuple[int, ...]:
        """Rows whose equations this hook replaces (boundary rows a hook
        owns must not be re-pinned by the configured boundary values)."""
        return ()

    def stamp_matrix(self, lower: np.ndarray, diag: np.ndarray, upper: np.ndarray):
        pass

    def adjust_rhs(self, rhs: np.ndarray, tau: float):
        pass

    def post_substage(self, v: np.ndarray, tau: float):
        pass

    def post_step(self, v: np.ndarray, step: int, tau: float):
        pass


class DirichletRegion(Hook):
    """Pin a contiguous index range to a fixed value (barrier knock-out rows).

    Values are re-stamped after each substage solve as well: banded LU with
    partial pivoting returns the pinned rows only to round-off, while the
    constraint is exact by definition.
    """

    def __init__(self, start: int, stop: int, value: float):
        self.start = start
        self.stop = stop
        self.value = value

    def stamp_matrix(self, lower, diag, upper):
        sl = slice(self.start, self.stop)
        lower[sl] = 0.0
        upper[sl] = 0.0
        diag[sl] = 1.0

    def adjust_rhs(self, rhs, tau):
        rhs[self.start:self.stop] = self.value

    def post_substage(self, v, tau):
        v[self.start:self.stop] = self.value


class GhostBarrier(Hook):
    """Ghost-point barrier row plus Dirichlet pins beyond it."""

    def __init__(self, ctx: GhostContext, order: BarrierMode):
        if order not in (BarrierMode.GHOST_LINEAR, BarrierMode.GHOST_LAGRANGE3):
            raise ValueError("ghost hook needs a ghost barrier mode")
        self.ctx = ctx
        self.order = order
        self._apply = (apply_ghost_linear if order is BarrierMode.GHOST_LINEAR
                       else apply_ghost_lagrange3)
        self._factor = 0.0
        self._mid = self.ctx.inner
        n = ctx.points.size
        g = ctx.ghost
        self.pin = (g + 1, n) if ctx.side is GhostSide.UP else (0, g)

    def override_previous(self, v, tau):
        return self._apply(self.ctx, GhostSubstage.EXPLICIT_RHS, v)

    def owned_rows(self):
        return (self.ctx.ghost,)

    def stamp_matrix(self, lower, diag, upper):
        probe = TridiagonalSystem(lower.copy(), diag.copy(), upper.copy(),
                                  np.zeros_like(diag))
        stamped = self._apply(self.ctx, GhostSubstage.IMPLICIT_MATRIX, probe)
        lower[:] = stamped.lower
        diag[:] = stamped.diag
        upper[:] = stamped.upper
        g = self.ctx.ghost
        if self.order is BarrierMode.GHOST_LAGRANGE3:
            # rhs of the elimination row enters the ghost rhs each solve
            _, _, wb = self.ctx.lagrange3_weights()
            _, a, b = self.ctx.lagrange3_nodes()
            pivot = probe.lower[a] if b < a else probe.upper[a]
            if pivot == 0.0:
                raise SingularSystemError(a, "zero pivot next to the ghost row")
            self._factor = wb / pivot
            self._mid = a
        lo, hi = self.pin
        lower[lo:hi] = 0.0
        upper[lo:hi] = 0.0
        diag[lo:hi] = 1.0

    def adjust_rhs(self, rhs, tau):
        rhs[self.ctx.ghost] = self.ctx.rebate - self._factor * rhs[self._mid]
        rhs[self.pin[0]:self.pin[1]] = self.ctx.rebate

    def post_substage(self, v, tau):
        v[self.pin[0]:self.pin[1]] = self.ctx.rebate


class AmericanProjection(Hook):
    """Keep the solution above the exercise payoff after every substage solve."""

    def __init__(self, obstacle: np.ndarray):
        self.obstacle = np.asarray(obstacle, dtype=float)

    def post_substage(self, v, tau):
        np.maximum(v, self.obstacle, out=v)


class DiscreteKnockout(Hook):
    """Set the knocked-out region to the rebate at each observation step."""

    def __init__(self, mask: np.ndarray, steps: set[int], rebate: float):
        self.mask = np.asarray(mask, dtype=bool)
        self.steps = steps
        self.rebate = rebate

    def post_step(self, v, step, tau):
        if step in self.steps:
            v[self.mask] = self.rebate


# ---------------------------------------------------------------------------
# TR-BDF2 stepping


class TrBdf2Stepper:
    """Backward-in-time marcher; owns its work buffers (one per pricing task)."""

    def __init__(self, grid: Grid, mkt: MarketParams, config: PdeConfig,
                 horizon: float, hooks: tuple[Hook, ...] = ()):
        if horizon <= 0.0:
            raise ValueError("horizon must be positive")
        self.grid = grid
        self.config = config
        self.hooks = tuple(hooks)
        self.dt = horizon / config.time_steps
        self.n_steps = config.time_steps
        op = attach_boundary_rows(discretize_operator(grid, mkt), grid, mkt, config)
        self.op = op
        n = op.n
        w = OMEGA * self.dt
        lower = -w * op.lower
        diag = 1.0 - w * op.diag
        upper = -w * op.upper
        hook_rows = {row for hook in self.hooks for row in hook.owned_rows()}
        self._dirichlet_rows = []
        for row, bc in ((0, config.boundary_lower), (n - 1, config.boundary_upper)):
            if bc.kind is BoundaryKind.DIRICHLET_VALUE and row not in hook_rows:
                lower[row] = 0.0
                upper[row] = 0.0
                diag[row] = 1.0
                self._dirichlet_rows.append((row, bc.value))
        for hook in self.hooks:
            hook.stamp_matrix(lower, diag, upper)
        self._ab = np.zeros((3, n))
        self._ab[0, 1:] = upper[:-1]
        self._ab[1, :] = diag
        self._ab[2, :-1] = lower[1:]
        self._w = w

    def _rhs_pins(self, rhs: np.ndarray, tau: float):
        for row, value in self._dirichlet_rows:
            rhs[row] = value
        for hook in self.hooks:
            hook.adjust_rhs(rhs, tau)

    def _value_pins(self, v: np.ndarray):
        # Partial pivoting solves pinned rows only to round-off; constraints
        # are exact, so re-stamp them.
        for row, value in self._dirichlet_rows:
            v[row] = value

    def step(self, v: np.ndarray, step_index: int, tau: float) -> np.ndarray:
        """One composite step from tau to tau + dt (tau is time to maturity)."""
        v_eff = v
        for hook in self.hooks:
            v_eff = hook.override_previous(v_eff, tau)

        rhs = v_eff + self._w * self.op.matvec(v_eff)
        self._rhs_pins(rhs, tau + GAMMA * self.dt)
        v_stage = solve_banded((1, 1), self._ab, rhs, check_finite=False,
                               overwrite_b=True)
        self._value_pins(v_stage)
        for hook in self.hooks:
            hook.post_substage(v_stage, tau + GAMMA * self.dt)

        rhs = BDF2_NEW * v_stage - BDF2_OLD * v_eff
        self._rhs_pins(rhs, tau + self.dt)
        v_new = solve_banded((1, 1), self._ab, rhs, check_finite=False,
                             overwrite_b=True)
        tau_new = tau + self.dt
        self._value_pins(v_new)
        for hook in self.hooks:
            hook.post_substage(v_new, tau_new)
        for hook in self.hooks:
            hook.post_step(v_new, step_index, tau_new)
        return v_new

    def run(self, terminal: np.ndarray) -> np.ndarray:
        v = np.asarray(terminal, dtype=float).copy()
        for j in range(self.n_steps):
            v = self.step(v, j + 1, j * self.dt)
        return v


def trbdf2_step(v: np.ndarray, dt: float, operator: SpatialOperator,
                constraints: tuple[Hook, ...] = (), tau: float = 0.0) -> np.ndarray:
    """Single composite TR-BDF2 step (one-shot convenience form).

    ``operator`` must already contain its boundary rows; hooks are applied to
    both substage systems and results, in order.  For repeated stepping use
    TrBdf2Stepper, which prepares the shared matrix once.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    n = operator.n
    w = OMEGA * dt
    lower = -w * operator.lower
    diag = 1.0 - w * operator.diag
    upper = -w * operator.upper
    for hook in constraints:
        hook.stamp_matrix(lower, diag, upper)

    v_eff = np.asarray(v, dtype=float)
    for hook in constraints:
        v_eff = hook.override_previous(v_eff, tau)

    rhs = v_eff + w * operator.matvec(v_eff)
    for hook in constraints:
        hook.adjust_rhs(rhs, tau + GAMMA * dt)
    stage = solve_tridiagonal(TridiagonalSystem(lower, diag, upper, rhs))
    for hook in constraints:
        hook.post_substage(stage, tau + GAMMA * dt)

    rhs = BDF2_NEW * stage - BDF2_OLD * v_eff
    for hook in constraints:
        hook.adjust_rhs(rhs, tau + dt)
    out = solve_tridiagonal(TridiagonalSystem(lower, diag, upper, rhs))
    for hook in constraints:
        hook.post_substage(out, tau + dt)
    for hook in constraints:
        hook.post_step(out, 1, tau + dt)
    return out
