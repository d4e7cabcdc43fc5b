"""Occupation measures, extinction-rate fits, exit times, bracket ranks.

Time integrals over trajectories interpolate linearly between stored
samples; since the simulator records every exact event time, the mode is
constant on each sample interval.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import SwitchedSystem, Trajectory
from .errors import DepthExceeded, EmptyWindow, MissingSplit, ValidationError

NORM_FLOOR = 1e-300


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned histogram grid: per-axis bounds (d, 2) and bin counts."""

    bounds: np.ndarray
    bins: tuple

    def __post_init__(self):
        b = np.array(self.bounds, dtype=float)
        if b.ndim != 2 or b.shape[1] != 2 or np.any(b[:, 1] <= b[:, 0]):
            raise ValidationError("bounds must be (d, 2) with lo < hi")
        b.flags.writeable = False
        object.__setattr__(self, "bounds", b)
        bins = self.bins
        if isinstance(bins, (int, np.integer)):
            bins = (int(bins),) * b.shape[0]
        bins = tuple(int(v) for v in bins)
        if len(bins) != b.shape[0] or any(v < 1 for v in bins):
            raise ValidationError("bins must be positive, one per axis")
        object.__setattr__(self, "bins", bins)

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    def widths(self) -> np.ndarray:
        return (self.bounds[:, 1] - self.bounds[:, 0]) / np.array(self.bins)


@dataclass(frozen=True)
class OccupationHistogram:
    """Empirical occupation measure on grid boxes times modes.

    mass has shape (*bins, n_modes); overflow holds per-mode mass that fell
    outside the bounds.  Everything sums to 1.
    """

    grid: GridSpec
    mass: np.ndarray
    overflow: np.ndarray
    horizon: float
    burn_in: float

    def total_mass(self) -> float:
        return float(self.mass.sum() + self.overflow.sum())

    def mode_marginal(self) -> np.ndarray:
        spatial_axes = tuple(range(self.grid.dim))
        return self.mass.sum(axis=spatial_axes) + self.overflow

    def spatial_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=-1)

    def to_csv(self, path) -> None:
        d = self.grid.dim
        lo = self.grid.bounds[:, 0]
        w = self.grid.widths()
        with open(path, "w", newline="\n") as fh:
            out = csv.writer(fh, lineterminator="\n")
            head = []
            for a in range(d):
                head += [f"x{a + 1}_lo", f"x{a + 1}_hi"]
            out.writerow(head + ["mode", "mass"])
            it = np.ndindex(*self.mass.shape)
            for idx in it:
                m = self.mass[idx]
                if m == 0.0:
                    continue
                row = []
                for a in range(d):
                    row += [format(lo[a] + idx[a] * w[a], ".17g"),
                            format(lo[a] + (idx[a] + 1) * w[a], ".17g")]
                out.writerow(row + [str(idx[-1] + 1), format(m, ".17g")])
            for mode0, m in enumerate(self.overflow):
                if m == 0.0:
                    continue
                out.writerow(["-inf", "inf"] * d + [str(mode0 + 1), format(m, ".17g")])


def _window_arrays(traj: Trajectory, burn_in: float):
    """Times/states/modes restricted to [burn_in, horizon], with the state
    at burn_in linearly interpolated in."""
    t = traj.times
    if burn_in >= traj.horizon:
        raise EmptyWindow(f"burn_in {burn_in} >= horizon {traj.horizon}")
    if burn_in <= t[0]:
        return t, traj.states, traj.mode_at
    j = int(np.searchsorted(t, burn_in, side="right"))
    frac = (burn_in - t[j - 1]) / (t[j] - t[j - 1])
    x_burn = traj.states[j - 1] + frac * (traj.states[j] - traj.states[j - 1])
    times = np.concatenate([[burn_in], t[j:]])
    states = np.vstack([x_burn, traj.states[j:]])
    modes = np.concatenate([[traj.mode_at[j - 1]], traj.mode_at[j:]])
    return times, states, modes


def occupation_measure(traj: Trajectory, grid: GridSpec | None = None,
                       burn_in: float = 0.0, subdivide: int = 4) -> OccupationHistogram:
    """Time-weighted histogram over (box, mode) cells.

    Each sample interval is split into `subdivide` equal slices of the
    linear interpolant; every slice contributes its duration at its
    midpoint.  Mass outside the grid bounds lands in the overflow bin.
    """
    if grid is None:
        if traj.bounding_box is None:
            raise ValidationError("no grid given and trajectory has no bounding box")
        grid = GridSpec(bounds=np.asarray(traj.bounding_box), bins=32)
    if grid.dim != traj.dim:
        raise ValidationError("grid dimension does not match trajectory")
    times, states, modes = _window_arrays(traj, burn_in)
    n_modes = int(traj.n_modes) if traj.n_modes else int(modes.max())
    window = float(times[-1] - times[0])
    q = max(1, int(subdivide))

    bins = np.array(grid.bins)
    lo = grid.bounds[:, 0]
    w = grid.widths()
    mass = np.zeros(tuple(grid.bins) + (n_modes,))
    flat = mass.reshape(-1, n_modes)
    overflow = np.zeros(n_modes)

    dts = np.diff(times)
    n_int = dts.size
    chunk = max(1, 200_000 // q)
    offsets = (np.arange(q) + 0.5) / q
    for a in range(0, n_int, chunk):
        b = min(n_int, a + chunk)
        x0 = states[a:b]
        dx = states[a + 1:b + 1] - x0
        mids = x0[:, None, :] + offsets[None, :, None] * dx[:, None, :]
        wts = np.repeat(dts[a:b] / q, q)
        mds = np.repeat(modes[a:b] - 1, q)
        pts = mids.reshape(-1, grid.dim)
        idx = np.floor((pts - lo) / w).astype(np.int64)
        ok = np.all((idx >= 0) & (idx < bins), axis=1)
        if np.any(~ok):
            np.add.at(overflow, mds[~ok], wts[~ok])
        if np.any(ok):
            lin = np.ravel_multi_index(idx[ok].T, tuple(grid.bins))
            np.add.at(flat, (lin, mds[ok]), wts[ok])
    mass /= window
    overflow /= window
    return OccupationHistogram(grid=grid, mass=mass, overflow=overflow,
                               horizon=traj.horizon, burn_in=float(burn_in))


def l1_distance(h1: OccupationHistogram, h2: OccupationHistogram,
                spatial_only: bool = False) -> float:
    """L1 distance between two histograms on identical grids."""
    if h1.grid.bins != h2.grid.bins or not np.array_equal(h1.grid.bounds, h2.grid.bounds):
        raise ValidationError("histograms live on different grids")
    if spatial_only:
        return float(np.abs(h1.spatial_marginal() - h2.spatial_marginal()).sum()
                     + abs(h1.overflow.sum() - h2.overflow.sum()))
    return float(np.abs(h1.mass - h2.mass).sum()
                 + np.abs(h1.overflow - h2.overflow).sum())


def low_norm_fraction(traj: Trajectory, threshold: float, burn_in: float = 0.0,
                      coords=None, subdivide: int = 8) -> float:
    """Fraction of post-burn-in time with ||x[coords]|| below the threshold.

    coords defaults to the transverse block (first n coordinates) when the
    trajectory declares a split.
    """
    if coords is None:
        if traj.split is None:
            raise MissingSplit("no coords given and trajectory has no split")
        coords = list(range(traj.split[0]))
    coords = np.asarray(coords, dtype=int)
    times, states, _ = _window_arrays(traj, burn_in)
    window = float(times[-1] - times[0])
    dts = np.diff(times)
    x0 = states[:-1][:, coords]
    dx = states[1:][:, coords] - x0
    offsets = (np.arange(subdivide) + 0.5) / subdivide
    mids = x0[:, None, :] + offsets[None, :, None] * dx[:, None, :]
    inside = np.linalg.norm(mids, axis=2) < threshold
    frac_in = inside.mean(axis=1)
    return float((frac_in * dts).sum() / window)


@dataclass(frozen=True)
class ExtinctionReport:
    slope: Optional[float]
    intercept: Optional[float]
    target: Optional[float]
    tolerance: float
    passed: Optional[bool]
    window: tuple
    underflow: bool
    n_points: int

    def to_dict(self) -> dict:
        return {
            "slope": self.slope, "intercept": self.intercept,
            "target": self.target, "tolerance": self.tolerance,
            "passed": self.passed, "window": list(self.window),
            "underflow": self.underflow, "n_points": self.n_points,
        }


def extinction_rate(traj: Trajectory, component: str = "full",
                    burn_in: float | None = None, target: float | None = None,
                    tolerance: float = 0.05) -> ExtinctionReport:
    """Least-squares slope of log norm versus time on the tail window.

    component "full" monitors ||x||; "first-n" monitors the transverse
    block norm and requires a declared split.  Default window is the last
    half of the horizon.  If the norm hits the 1e-300 floor the trajectory
    is reported as extinct beyond float range and the check passes.
    """
    horizon = traj.horizon
    start = 0.5 * horizon if burn_in is None else float(burn_in)
    if not 0.0 <= start < horizon:
        raise ValidationError("burn_in must lie in [0, horizon)")
    if component == "full":
        norms = np.linalg.norm(traj.states, axis=1)
    elif component == "first-n":
        if traj.split is None:
            raise MissingSplit("component 'first-n' requires a split")
        norms = np.linalg.norm(traj.states[:, :traj.split[0]], axis=1)
    else:
        raise ValidationError(f"unknown component {component!r}")
    sel = traj.times >= start
    if sel.sum() < 2:
        raise EmptyWindow("fewer than two samples in the fit window")
    t_w = traj.times[sel]
    n_w = norms[sel]
    underflow = bool(np.any(n_w <= NORM_FLOOR))
    if underflow:
        return ExtinctionReport(slope=None, intercept=None, target=target,
                                tolerance=tolerance, passed=True,
                                window=(float(t_w[0]), float(t_w[-1])),
                                underflow=True, n_points=int(sel.sum()))
    coeffs = np.polyfit(t_w, np.log(n_w), 1)
    slope = float(coeffs[0])
    passed = None if target is None else bool(slope <= target + tolerance)
    return ExtinctionReport(slope=slope, intercept=float(coeffs[1]), target=target,
                            tolerance=tolerance, passed=passed,
                            window=(float(t_w[0]), float(t_w[-1])),
                            underflow=False, n_points=int(sel.sum()))


def first_exit(traj: Trajectory, epsilon: float):
    """First time the transverse norm reaches epsilon, or None.

    Crossing times are solved exactly on the linear interpolant.
    """
    if traj.split is None:
        raise MissingSplit("first_exit requires a trajectory with a split")
    n = traj.split[0]
    xs = traj.states[:, :n]
    norms = np.linalg.norm(xs, axis=1)
    if norms[0] >= epsilon:
        return 0.0
    above = np.flatnonzero(norms >= epsilon)
    if above.size == 0:
        return None
    j = int(above[0])
    x0 = xs[j - 1]
    dx = xs[j] - x0
    a = float(dx @ dx)
    bq = 2.0 * float(x0 @ dx)
    cq = float(x0 @ x0) - epsilon * epsilon
    if a == 0.0:
        s = 1.0
    else:
        disc = max(0.0, bq * bq - 4.0 * a * cq)
        s = (-bq + np.sqrt(disc)) / (2.0 * a)
        s = min(max(s, 0.0), 1.0)
    t0, t1 = traj.times[j - 1], traj.times[j]
    return float(t0 + s * (t1 - t0))


# ---------------------------------------------------------------------------
# Lie-bracket rank conditions

def _bracket_closure(field_i, jac_i, v_func, h):
    """[F, V](x) = DV(x) F(x) - DF(x) V(x), DV applied directionally by
    central differences of V."""
    def bracket(x):
        fx = field_i(x)
        nf = float(np.linalg.norm(fx))
        if nf == 0.0:
            dvf = np.zeros_like(fx)
        else:
            u = fx / nf
            dvf = (v_func(x + h * u) - v_func(x - h * u)) * (nf / (2.0 * h))
        return dvf - jac_i(x) @ v_func(x)
    return bracket


def _initial_family(sys: SwitchedSystem, kind: str):
    fields = [(lambda y, i=i: np.asarray(sys.field(i, y), float))
              for i in range(1, sys.modes + 1)]
    if kind == "weak":
        return fields, fields
    if kind == "strong":
        diffs = []
        for i in range(sys.modes):
            for j in range(i + 1, sys.modes):
                diffs.append(lambda y, fi=fields[i], fj=fields[j]: fi(y) - fj(y))
        return fields, diffs
    raise ValidationError(f"kind must be 'weak' or 'strong', got {kind!r}")


def _num_rank(vectors, rel_tol: float) -> int:
    if not vectors:
        return 0
    mat = np.column_stack(vectors)
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rel_tol * sv[0]))


def bracket_generators(sys: SwitchedSystem, x, kind: str = "weak",
                       depth: int = 3, step_scale: float = 1e-5) -> np.ndarray:
    """Matrix whose columns are all family generators evaluated at x, up to
    the given bracket depth (no early stopping)."""
    x = np.asarray(x, dtype=float)
    h = step_scale * max(1.0, float(np.linalg.norm(x)))
    fields, level = _initial_family(sys, kind)
    jacs = [(lambda y, i=i: np.asarray(sys.jac(i, y), float))
            for i in range(1, sys.modes + 1)]
    vals = [f(x) for f in level]
    for _ in range(depth):
        nxt = []
        for v in level:
            for fi, ji in zip(fields, jacs):
                nxt.append(_bracket_closure(fi, ji, v, h))
        vals.extend(f(x) for f in nxt)
        level = nxt
    if not vals:
        return np.zeros((sys.dim, 0))
    return np.column_stack(vals)


def bracket_rank(sys: SwitchedSystem, x, kind: str = "weak", depth: int = 3,
                 step_scale: float = 1e-5, rel_tol: float = 1e-6,
                 require_full_rank: bool = False) -> int:
    """Numerical rank of the iterated bracket family at x.

    Rank counts singular values above rel_tol times the largest.  Iteration
    stops early once the rank reaches the state dimension.  With
    require_full_rank=True a final rank below the dimension raises
    DepthExceeded instead of returning.
    """
    if depth < 0:
        raise ValidationError("depth must be >= 0")
    x = np.asarray(x, dtype=float)
    h = step_scale * max(1.0, float(np.linalg.norm(x)))
    fields, level = _initial_family(sys, kind)
    jacs = [(lambda y, i=i: np.asarray(sys.jac(i, y), float))
            for i in range(1, sys.modes + 1)]
    vals = [f(x) for f in level]
    rank = _num_rank(vals, rel_tol)
    for _ in range(depth):
        if rank >= sys.dim:
            break
        nxt = []
        for v in level:
            for fi, ji in zip(fields, jacs):
                nxt.append(_bracket_closure(fi, ji, v, h))
        vals.extend(f(x) for f in nxt)
        level = nxt
        rank = max(rank, _num_rank(vals, rel_tol))
    if require_full_rank and rank < sys.dim:
        raise DepthExceeded(rank, depth)
    return rank
