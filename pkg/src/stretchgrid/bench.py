"""Configuration-driven convergence runner and micro-benchmarks.

A run prices one contract on a sweep of grid resolutions, compares against a
reference resolution of the same grid family (or a shared reference column
for continuously monitored tables), and reports absolute errors (x 1e5, the
usual benchmark convention) plus the measured convergence order.

Configs are flat ``key = value`` text files with dotted section names; a
``columns`` key plus ``column.<name>.<key>`` overrides describe several grid
regimes sharing one contract (see the bundled files under ``configs/``).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .fdm import (BarrierMode, BoundaryCondition, BoundaryKind, MarketParams,
                  PdeConfig, TrBdf2Stepper)
from .gridgen import (Grid, StretchKind, StretchMap, StretchSpec, KnotRule,
                      build_map, sample_grid)
from .instruments import (ContractSpec, ExerciseStyle, OptionType,
                          constraint_hooks, payoff)
from .placement import (PlacementGoal, PlacementMode, PlacementSpec, Target,
                        apply_placement)
from .spline import MonotoneCubic


class ConfigError(ValueError):
    """Malformed run configuration."""


class DomainFit:
    EXPLICIT = "explicit"
    BARRIER_EXACT = "barrier_exact"                  # domain = [L, U]
    BARRIER_OFFSET_HALF_CELL = "barrier_offset_half_cell"  # barriers mid-cell
    BARRIER_NODE_PAD = "barrier_node_pad"            # [L - h, U + h], h = (U-L)/I
    BARRIER_PAD = "barrier_pad"                      # [L - pad, U + pad]


@dataclass(frozen=True)
class DomainSpec:
    s_min: float = 0.0
    s_max: float = 0.0
    fit: str = DomainFit.EXPLICIT
    pad_fraction: float = 0.02


@dataclass(frozen=True)
class RunConfig:
    """One grid regime: contract + market + grid recipe + sweep settings."""

    contract: ContractSpec
    market: MarketParams
    stretch: StretchSpec
    placement: PlacementSpec
    pde: PdeConfig
    space_steps: tuple[int, ...]
    reference_steps: int
    report_spots: tuple[float, ...]
    domain: DomainSpec = DomainSpec()
    match_time_steps: bool = False   # N = I per row (continuous-barrier tables)
    label: str = "run"

    def __post_init__(self):
        if self.reference_steps <= max(self.space_steps, default=0):
            raise ConfigError("reference resolution must exceed the sweep")
        if not self.report_spots:
            raise ConfigError("need at least one report spot")


@dataclass
class ConvergenceRow:
    steps: int
    prices: dict[float, float]
    errors_1e5: dict[float, float]
    order: float = math.nan
    failed: str = ""


@dataclass
class ConvergenceReport:
    label: str
    spots: tuple[float, ...]
    rows: list[ConvergenceRow] = field(default_factory=list)
    reference: dict[float, float] = field(default_factory=dict)

    def errors(self, spot: float) -> list[float]:
        return [r.errors_1e5[spot] for r in self.rows if not r.failed]

    def orders(self, spot: float) -> list[float]:
        out = []
        prev = None
        for r in self.rows:
            if r.failed:
                prev = None
                continue
            if prev is not None:
                e_prev, e_cur = prev.errors_1e5[spot], r.errors_1e5[spot]
                if e_prev > 0.0 and e_cur > 0.0:
                    out.append(math.log(e_prev / e_cur) / math.log(r.steps / prev.steps))
                else:
                    out.append(math.nan)
            prev = r
        return out


# ---------------------------------------------------------------------------
# Grid construction per resolution


def resolve_domain(config: RunConfig, steps: int) -> tuple[float, float, int]:
    """Domain bounds and actual interval count for one sweep resolution."""
    c = config.contract
    fit = config.domain.fit
    if fit == DomainFit.EXPLICIT:
        return config.domain.s_min, config.domain.s_max, steps
    if c.barrier_lower is None or c.barrier_upper is None:
        raise ConfigError("barrier-fitted domains need both barriers")
    lo, hi = c.barrier_lower, c.barrier_upper
    if fit == DomainFit.BARRIER_EXACT:
        return lo, hi, steps
    if fit == DomainFit.BARRIER_OFFSET_HALF_CELL:
        h = (hi - lo) / steps
        return lo - 0.5 * h, hi + 0.5 * h, steps + 1
    if fit == DomainFit.BARRIER_NODE_PAD:
        # one extra cell beyond each barrier; on a uniform grid the barriers
        # are then nodes by construction
        h = (hi - lo) / steps
        return lo - h, hi + h, steps + 2
    if fit == DomainFit.BARRIER_PAD:
        pad = config.domain.pad_fraction * (hi - lo)
        return lo - pad, hi + pad, steps
    raise ConfigError(f"unknown domain fit {fit!r}")


class _MapCache:
    """Stretch maps are reused across rows; ODE-defined maps key on ode_steps."""

    def __init__(self):
        self._maps: dict[tuple, StretchMap] = {}

    def get(self, spec: StretchSpec, steps: int) -> StretchMap:
        if spec.kind is StretchKind.TAVELLA_RANDALL:
            key = (spec, max(16, 8 * steps))
            if key not in self._maps:
                self._maps[key] = build_map(spec, ode_steps=key[1])
        else:
            key = (spec, 0)
            if key not in self._maps:
                self._maps[key] = build_map(spec)
        return self._maps[key]


def build_run_grid(config: RunConfig, steps: int, cache: _MapCache | None = None) -> Grid:
    s_min, s_max, intervals = resolve_domain(config, steps)
    stretch = config.stretch
    if (stretch.s_min, stretch.s_max) != (s_min, s_max):
        stretch = replace(stretch, s_min=s_min, s_max=s_max)
    cache = cache or _MapCache()
    grid = sample_grid(cache.get(stretch, intervals), intervals)
    if config.placement.mode is not PlacementMode.NONE and config.placement.targets:
        grid = apply_placement(grid, config.placement)
    return grid


def price_run(config: RunConfig, steps: int, cache: _MapCache | None = None) -> dict[float, float]:
    """Price the contract on the grid for one resolution; spot -> price."""
    grid = build_run_grid(config, steps, cache)
    pde = config.pde
    if config.match_time_steps:
        pde = replace(pde, time_steps=steps)
    hooks = tuple(constraint_hooks(config.contract, grid, pde))
    stepper = TrBdf2Stepper(grid, config.market, pde, config.contract.maturity, hooks)
    values = stepper.run(payoff(config.contract, grid))
    interp = MonotoneCubic(grid.points, values)
    lo, hi = grid.points[0], grid.points[-1]
    out = {}
    for s in config.report_spots:
        if not lo <= s <= hi:
            raise ConfigError(f"report spot {s} outside the grid [{lo}, {hi}]")
        out[s] = float(interp(s))
    return out


def run_convergence(config: RunConfig,
                    reference_prices: dict[float, float] | None = None) -> ConvergenceReport:
    """Sweep the space resolutions against a same-regime reference.

    The reference is priced with the same stretch/placement recipe at
    ``reference_steps`` unless explicit reference prices are passed in (used
    by table runs whose published reference is shared across columns).
    Failed resolutions are marked in the report instead of aborting the sweep.
    """
    cache = _MapCache()
    if reference_prices is None:
        reference_prices = price_run(config, config.reference_steps, cache)
    report = ConvergenceReport(config.label, config.report_spots,
                               reference=dict(reference_prices))
    for steps in config.space_steps:
        try:
            prices = price_run(config, steps, cache)
        except Exception as exc:  # noqa: BLE001 - cell-level fault isolation
            report.rows.append(ConvergenceRow(steps, {}, {}, failed=str(exc)))
            continue
        errors = {s: abs(prices[s] - reference_prices[s]) * 1e5
                  for s in config.report_spots}
        report.rows.append(ConvergenceRow(steps, prices, errors))
    lead = config.report_spots[0]
    orders = iter(report.orders(lead))
    prev_ok = False
    for row in report.rows:
        if row.failed:
            prev_ok = False
            continue
        row.order = next(orders) if prev_ok else math.nan
        prev_ok = True
    return report


# ---------------------------------------------------------------------------
# CSV emission


def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return ""
        return f"{x:.10g}"
    return str(x)


def _csv_field(s: str) -> str:
    if any(ch in s for ch in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


def _csv_line(fields) -> str:
    return ",".join(_csv_field(_fmt(f)) for f in fields) + "\r\n"


def report_csv_lines(report: ConvergenceReport, prefix: tuple[str, ...] = ()) -> list[list]:
    """Rows as field lists: I, then price/err per spot, then order."""
    out = []
    for row in report.rows:
        fields: list = list(prefix) + [row.steps]
        for s in report.spots:
            if row.failed:
                fields += ["failed", "failed"]
            else:
                fields += [row.prices[s], row.errors_1e5[s]]
        fields.append(row.order if not row.failed else "")
        out.append(fields)
    return out


def emit_csv(report: ConvergenceReport, destination) -> int:
    """Write one report as CSV; returns bytes written.

    Column order is fixed (I, then per-spot price/error, then order), numbers
    carry 10 significant digits, fields are RFC-4180 quoted when needed and
    the file ends with a newline, so identical runs are byte-identical.
    """
    header = ["I"]
    for s in report.spots:
        header += [f"price_S{_fmt(float(s))}", f"err1e5_S{_fmt(float(s))}"]
    header.append("order")
    text = _csv_line(header)
    for fields in report_csv_lines(report):
        text += _csv_line(fields)
    data = text.encode("utf-8")
    if hasattr(destination, "write"):
        destination.write(data)
    else:
        Path(destination).write_bytes(data)
    return len(data)


def emit_table_csv(results: list[tuple[str, ConvergenceReport]], destination) -> int:
    """Concatenate per-column reports into one long-format CSV."""
    if not results:
        raise ConfigError("no reports to emit")
    spots = results[0][1].spots
    header = ["column", "I"]
    for s in spots:
        header += [f"price_S{_fmt(float(s))}", f"err1e5_S{_fmt(float(s))}"]
    header.append("order")
    text = _csv_line(header)
    for name, report in results:
        for fields in report_csv_lines(report, prefix=(name,)):
            text += _csv_line(fields)
    data = text.encode("utf-8")
    if hasattr(destination, "write"):
        destination.write(data)
    else:
        Path(destination).write_bytes(data)
    return len(data)


# ---------------------------------------------------------------------------
# Transform micro-benchmark


@dataclass
class TimingReport:
    samples: int
    seconds_baseline: float
    seconds_candidate: float

    @property
    def ratio(self) -> float:
        return self.seconds_baseline / self.seconds_candidate


def bench_transforms(samples: int = 10_000_000,
                     baseline: StretchSpec | None = None,
                     candidate: StretchSpec | None = None,
                     repetitions: int = 5) -> TimingReport:
    """Wall-clock of candidate (default cubic) vs baseline (default sinh)
    map evaluation over identical uniform samples; best-of-n timing."""
    if samples < 1_000_000:
        raise ConfigError("need at least 1e6 samples for a stable timing")
    if baseline is None:
        baseline = StretchSpec(StretchKind.SINH, 0.0, 150.0, (125.0,), (1.5,))
    if candidate is None:
        candidate = StretchSpec(StretchKind.CUBIC, 0.0, 150.0, (125.0,), (1.5,))
    map_a = build_map(baseline)
    map_b = build_map(candidate)
    u = np.random.default_rng(20240917).random(samples)
    warm = u[: min(samples, 1_000_000)]
    map_a(warm)
    map_b(warm)

    def best(mapping) -> float:
        t_best = math.inf
        for _ in range(repetitions):
            t0 = time.perf_counter()
            mapping(u)
            t_best = min(t_best, time.perf_counter() - t0)
        return t_best

    return TimingReport(samples, best(map_a), best(map_b))


# ---------------------------------------------------------------------------
# Config parsing


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in s.split(",") if tok.strip())


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in s.split(",") if tok.strip())


def _parse_targets(s: str) -> tuple[Target, ...]:
    targets = []
    for tok in s.split(","):
        tok = tok.strip()
        if not tok:
            continue
        goal, _, value = tok.partition(":")
        if not value:
            raise ConfigError(f"target {tok!r} must look like midcell:100")
        goal = goal.strip().lower()
        if goal == "midcell":
            targets.append(Target(float(value), PlacementGoal.MID_CELL))
        elif goal == "ongrid":
            targets.append(Target(float(value), PlacementGoal.ON_GRID))
        else:
            raise ConfigError(f"unknown placement goal {goal!r}")
    return tuple(targets)


def _parse_boundary(s: str) -> BoundaryCondition:
    kind, _, value = s.partition(":")
    kind = kind.strip().lower()
    table = {"zero_gamma": BoundaryKind.ZERO_GAMMA,
             "degenerate_exact": BoundaryKind.DEGENERATE_EXACT,
             "dirichlet": BoundaryKind.DIRICHLET_VALUE}
    if kind not in table:
        raise ConfigError(f"unknown boundary kind {kind!r}")
    return BoundaryCondition(table[kind], float(value) if value else 0.0)


def _build_run(kv: dict[str, str], label: str) -> RunConfig:
    def need(key: str) -> str:
        if key not in kv:
            raise ConfigError(f"missing config key {key!r}")
        return kv[key]

    style = ExerciseStyle(need("contract.style"))
    contract = ContractSpec(
        style=style,
        put_call=OptionType(need("contract.put_call")),
        strike=float(need("contract.strike")),
        maturity=float(need("contract.maturity")),
        barrier_lower=float(kv["contract.barrier_lower"]) if "contract.barrier_lower" in kv else None,
        barrier_upper=float(kv["contract.barrier_upper"]) if "contract.barrier_upper" in kv else None,
        rebate=float(kv.get("contract.rebate", "0")),
        observations_per_year=int(kv["contract.observations_per_year"]) if "contract.observations_per_year" in kv else None,
        observation_dates=_floats(kv["contract.observation_dates"]) if "contract.observation_dates" in kv else None,
    )
    market = MarketParams(rate=float(kv.get("market.rate", "0")),
                          dividend=float(kv.get("market.dividend", "0")),
                          sigma=float(kv.get("market.sigma", "0")))
    fit = kv.get("domain.fit", DomainFit.EXPLICIT)
    domain = DomainSpec(
        s_min=float(kv.get("domain.s_min", "0")),
        s_max=float(kv.get("domain.s_max", "0")),
        fit=fit,
        pad_fraction=float(kv.get("domain.pad_fraction", "0.02")),
    )
    if fit == DomainFit.EXPLICIT and not domain.s_min < domain.s_max:
        raise ConfigError("explicit domains need domain.s_min < domain.s_max")

    kind = StretchKind(kv.get("stretch.kind", "uniform"))
    points = _floats(kv.get("stretch.points", ""))
    alphas = _floats(kv["stretch.alpha"]) if "stretch.alpha" in kv else None
    # Bounds are provisional; build_run_grid rebinds them per resolved domain.
    s_min = domain.s_min if fit == DomainFit.EXPLICIT else (contract.barrier_lower or 0.0) - 1.0
    s_max = domain.s_max if fit == DomainFit.EXPLICIT else (contract.barrier_upper or 1.0) + 1.0
    stretch = StretchSpec(kind, s_min, s_max, points, alphas,
                          chi=float(kv.get("stretch.chi", "6")),
                          lam=float(kv.get("stretch.lambda", "0.25")),
                          knot_rule=KnotRule(kv.get("stretch.knot_rule", "inverse")))

    placement = PlacementSpec(PlacementMode(kv.get("placement.mode", "none")),
                              _parse_targets(kv.get("placement.targets", "")))

    raw_steps = kv.get("pde.time_steps", "match_space")
    match_time = raw_steps.strip() == "match_space"
    pde = PdeConfig(
        time_steps=1 if match_time else int(raw_steps),
        boundary_lower=_parse_boundary(kv.get("pde.boundary_lower", "zero_gamma")),
        boundary_upper=_parse_boundary(kv.get("pde.boundary_upper", "zero_gamma")),
        barrier_mode=BarrierMode(kv.get("pde.barrier_mode", "on_grid")),
    )

    return RunConfig(
        contract=contract, market=market, stretch=stretch, placement=placement,
        pde=pde,
        space_steps=_ints(need("sweep.space_steps")),
        reference_steps=int(need("sweep.reference_steps")),
        report_spots=_floats(need("sweep.report_spots")),
        domain=domain, match_time_steps=match_time, label=label,
    )


@dataclass(frozen=True)
class TableConfig:
    """A set of grid regimes (columns) sharing one contract and sweep."""

    columns: tuple[tuple[str, RunConfig], ...]
    reference_mode: str = "per_column"       # or "shared"
    reference_column: str = ""

    def run(self) -> list[tuple[str, ConvergenceReport]]:
        shared: dict[float, float] | None = None
        if self.reference_mode == "shared":
            by_name = dict(self.columns)
            if self.reference_column not in by_name:
                raise ConfigError(f"reference column {self.reference_column!r} not defined")
            ref_cfg = by_name[self.reference_column]
            shared = price_run(ref_cfg, ref_cfg.reference_steps)
        return [(name, run_convergence(cfg, shared)) for name, cfg in self.columns]


def parse_table_config(kv: dict[str, str]) -> TableConfig:
    names = [tok.strip() for tok in kv.get("columns", "").split(",") if tok.strip()]
    if not names:
        return TableConfig(columns=(("run", _build_run(kv, "run")),))
    columns = []
    for name in names:
        merged = {k: v for k, v in kv.items() if not k.startswith("column.")}
        prefix = f"column.{name}."
        scoped = {k[len(prefix):]: v for k, v in kv.items() if k.startswith(prefix)}
        # a column stretch/placement block replaces the base one wholesale
        for section in ("stretch.", "placement."):
            if any(k.startswith(section) for k in scoped):
                merged = {k: v for k, v in merged.items() if not k.startswith(section)}
        merged.update(scoped)
        columns.append((name, _build_run(merged, name)))
    return TableConfig(
        columns=tuple(columns),
        reference_mode=kv.get("sweep.reference_mode", "per_column"),
        reference_column=kv.get("sweep.reference_column", names[0]),
    )


def load_config(path_or_text: str | Path) -> TableConfig:
    p = Path(path_or_text)
    return parse_table_config(parse_config_text(p.read_text()))


BUNDLED_TABLES = {
    1: "discrete_ko_stretch.cfg",
    2: "discrete_ko_uniform_placed.cfg",
    3: "discrete_ko_stretch_placed.cfg",
    4: "double_ko_discrete_stretch.cfg",
    5: "double_ko_continuous_ghost.cfg",
    6: "double_ko_continuous_stretch.cfg",
}


def load_bundled(name_or_number: str | int) -> TableConfig:
    if isinstance(name_or_number, int) or str(name_or_number).isdigit():
        number = int(name_or_number)
        if number not in BUNDLED_TABLES:
            raise ConfigError(f"no bundled table {number}; choose 1..6")
        name = BUNDLED_TABLES[number]
    else:
        name = str(name_or_number)
        if not name.endswith(".cfg"):
            name += ".cfg"
    text = resources.files("stretchgrid").joinpath("configs").joinpath(name).read_text()
    return parse_table_config(parse_config_text(text))
