"""Tour of the stretching families: build each map, sample a grid, and show
where the nodes concentrate.

Run:  python demos/stretch_maps.py
"""

import numpy as np

from stretchgrid import (KnotRule, StretchKind, StretchSpec, build_map,
                         sample_grid, second_derivative_jump)


def spacing_sketch(points: np.ndarray, width: int = 72) -> str:
    """Crude ASCII density sketch: one bucket per column, '#' ~ node count."""
    lo, hi = points[0], points[-1]
    counts, _ = np.histogram(points, bins=width, range=(lo, hi))
    peak = counts.max()
    return "".join(" .:-=+*#"[min(7, int(7 * c / peak))] for c in counts)


def show(title: str, spec: StretchSpec, steps: int = 62, **kwargs):
    grid = sample_grid(build_map(spec, **kwargs), steps)
    gaps = np.diff(grid.points)
    print(f"\n{title}")
    print(f"  nodes {grid.n}, min gap {gaps.min():.4f} @ S~{grid.points[np.argmin(gaps)]:.2f}, "
          f"max gap {gaps.max():.4f}")
    print(f"  [{spacing_sketch(grid.points)}]")


def main():
    # Single barrier level at 125 on [0, 150]; alpha controls concentration.
    single = dict(s_min=0.0, s_max=150.0, critical_points=(125.0,), alphas=(1.5,))
    show("sinh stretch (alpha=1.5)", StretchSpec(StretchKind.SINH, **single))
    show("cubic stretch (alpha=1.5) - same shape, no transcendentals",
         StretchSpec(StretchKind.CUBIC, **single))
    show("Jacobian-defined stretch (shooting + RK4)",
         StretchSpec(StretchKind.TAVELLA_RANDALL, **single), ode_steps=1024)

    # Three critical points: both barriers and the strike of a double KO.
    multi = dict(s_min=54.0, s_max=183.0, critical_points=(90.0, 102.0, 110.0),
                 alphas=(1.3,))
    c1 = StretchSpec(StretchKind.PIECEWISE_CUBIC_C1, **multi)
    show("piecewise cubic, C1 at the joins", c1)
    mapping = build_map(c1)
    print("  second-derivative jumps at the interior joins (antisymmetric):")
    for i in (1, 2):
        left, right = second_derivative_jump(mapping, i)
        print(f"    join {i}: {left:10.2f} | {right:10.2f}")

    c2 = StretchSpec(StretchKind.PIECEWISE_C2, knot_rule=KnotRule.INVERSE, **multi)
    show("piecewise with quintic C2 patches (virtually the same nodes)", c2)


if __name__ == "__main__":
    main()
