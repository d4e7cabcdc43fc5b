"""PDMP simulation: deterministic flow punctuated by random mode jumps.

Switching uses exact exponential sampling when the rate matrix is constant
and Poisson thinning against the declared rate bound otherwise.  Every
random draw comes from one per-trajectory generator, so (seed, plan,
config) determine the output bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import SwitchedSystem, Trajectory, check_rate_matrix, is_irreducible
from .errors import (
    NonFiniteState,
    NotOnFace,
    RateBoundViolated,
    Reducible,
    ValidationError,
)
from .integrators import DEFAULT_CONFIG, IntegratorConfig, flow_path

STATIONARY_TOL = 1e-12


def rng_for(seed: int, *key) -> np.random.Generator:
    """Child generator for (master seed, derivation key).

    Ensemble members derive their streams as rng_for(seed, index), which is
    order-independent and collision-free.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return rng_for(int(seed))


@dataclass(frozen=True)
class SimulationPlan:
    horizon: float
    sample_dt: float
    seed: int
    init_state: np.ndarray
    init_mode: int = 1

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValidationError("horizon must be positive")
        if not 0 < self.sample_dt <= self.horizon:
            raise ValidationError("need 0 < sample_dt <= horizon")
        x0 = np.array(self.init_state, dtype=float).ravel()
        x0.flags.writeable = False
        object.__setattr__(self, "init_state", x0)


@dataclass(frozen=True)
class MarkovChainSpec:
    q_matrix: np.ndarray

    def __post_init__(self):
        q = np.array(self.q_matrix, dtype=float)
        check_rate_matrix(q)
        q.flags.writeable = False
        object.__setattr__(self, "q_matrix", q)

    @property
    def n_modes(self) -> int:
        return self.q_matrix.shape[0]


@dataclass(frozen=True)
class ModePath:
    """Piecewise-constant mode path on [0, horizon], 1-based modes."""

    initial_mode: int
    horizon: float
    event_times: np.ndarray
    event_sources: np.ndarray
    event_targets: np.ndarray

    @property
    def events(self) -> list:
        return [(float(t), int(f), int(g)) for t, f, g in
                zip(self.event_times, self.event_sources, self.event_targets)]

    def segments(self):
        """Yield (t0, t1, mode) over the whole horizon."""
        t, mode = 0.0, self.initial_mode
        for te, _f, to in zip(self.event_times, self.event_sources, self.event_targets):
            yield t, float(te), mode
            t, mode = float(te), int(to)
        if t < self.horizon:
            yield t, self.horizon, mode

    def occupation(self, n_modes: int | None = None) -> np.ndarray:
        """Fraction of time spent in each mode."""
        if n_modes is None:
            n_modes = max([self.initial_mode] + [int(v) for v in self.event_targets])
        occ = np.zeros(n_modes)
        for t0, t1, mode in self.segments():
            occ[mode - 1] += t1 - t0
        return occ / self.horizon


def stationary_distribution(spec) -> np.ndarray:
    """Probability vector p with p Q = 0, checked to residual 1e-12."""
    q = spec.q_matrix if isinstance(spec, MarkovChainSpec) else np.asarray(spec, float)
    check_rate_matrix(q)
    if not is_irreducible(q):
        raise Reducible("rate matrix is not irreducible")
    n = q.shape[0]
    if n == 1:
        return np.ones(1)
    a = q.T.copy()
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    p = np.linalg.solve(a, b)
    resid = float(np.max(np.abs(p @ q)))
    if resid > STATIONARY_TOL * max(1.0, float(np.max(np.abs(q)))):
        p, *_ = np.linalg.lstsq(np.vstack([q.T, np.ones(n)]),
                                np.concatenate([np.zeros(n), [1.0]]), rcond=None)
        resid = float(np.max(np.abs(p @ q)))
        if resid > STATIONARY_TOL * max(1.0, float(np.max(np.abs(q)))):
            raise ValidationError(f"stationary solve residual {resid:.3e}")
    if np.any(p <= 0):
        raise ValidationError("stationary distribution has nonpositive entries")
    return p / p.sum()


def _pick(rng: np.random.Generator, weights: np.ndarray) -> int:
    """Index sampled proportionally to nonnegative weights (0-based)."""
    c = np.cumsum(weights)
    return int(np.searchsorted(c, rng.random() * c[-1], side="right"))


def simulate_chain(spec: MarkovChainSpec, i0: int, horizon: float, seed) -> ModePath:
    """Continuous-time Markov chain path: exponential holding times with
    parameter -Q_ii, next mode proportional to the off-diagonal row."""
    q = spec.q_matrix
    n = spec.n_modes
    if not 1 <= i0 <= n:
        raise ValidationError(f"initial mode {i0} outside 1..{n}")
    rng = _as_rng(seed)
    times, sources, targets = [], [], []
    t, mode = 0.0, int(i0)
    while True:
        lam = -q[mode - 1, mode - 1]
        if lam <= 0.0:
            break
        t = t + rng.exponential(1.0 / lam)
        if t >= horizon:
            break
        row = q[mode - 1].copy()
        row[mode - 1] = 0.0
        j = _pick(rng, row) + 1
        times.append(t)
        sources.append(mode)
        targets.append(j)
        mode = j
    return ModePath(initial_mode=int(i0), horizon=float(horizon),
                    event_times=np.array(times), event_sources=np.array(sources, int),
                    event_targets=np.array(targets, int))


def _sample_grid(horizon: float, dt: float) -> list:
    n = int(np.floor(horizon / dt + 1e-9))
    ts = [k * dt for k in range(1, n + 1)]
    if not ts or ts[-1] < horizon - 1e-12 * max(1.0, horizon):
        ts.append(horizon)
    else:
        ts[-1] = horizon
    return ts


def simulate_pdmp(sys: SwitchedSystem, plan: SimulationPlan,
                  cfg: IntegratorConfig = DEFAULT_CONFIG) -> Trajectory:
    """Simulate (X_t, I_t): integrate F^{I_t} between jumps, switch modes at
    random times.

    Constant rates: holding times are exact exponentials.  State-dependent
    rates: propose times from a Poisson clock at sys.rate_bound, accept with
    probability total_rate(X)/rate_bound evaluated at the proposal state,
    then pick the target mode proportionally to the rate row.  The output
    contains samples every plan.sample_dt plus every exact event time.
    """
    if plan.init_state.size != sys.dim:
        raise ValidationError("init_state dimension mismatch")
    if not 1 <= plan.init_mode <= sys.modes:
        raise ValidationError("init_mode out of range")
    rng = rng_for(plan.seed)
    horizon = float(plan.horizon)
    x = plan.init_state.copy()
    mode = int(plan.init_mode)
    grid = _sample_grid(horizon, plan.sample_dt)
    grid_pos = 0

    times = [0.0]
    states = [x.copy()]
    modes = [mode]
    events = []

    def record(t, xval, mval):
        if times and abs(t - times[-1]) <= 1e-15 * max(1.0, horizon):
            states[-1] = xval.copy()
            modes[-1] = mval
        else:
            times.append(t)
            states.append(xval.copy())
            modes.append(mval)

    if sys.rates_constant:
        q = np.asarray(sys.rates(x), float)
    t = 0.0
    while t < horizon:
        if sys.rates_constant:
            lam = -q[mode - 1, mode - 1]
            t_prop = t + rng.exponential(1.0 / lam) if lam > 0 else np.inf
        else:
            if sys.rate_bound <= 0:
                t_prop = np.inf
            else:
                t_prop = t + rng.exponential(1.0 / sys.rate_bound)
        t_stop = min(t_prop, horizon)
        cps = []
        while grid_pos < len(grid) and grid[grid_pos] <= t_stop:
            if grid[grid_pos] > t:
                cps.append(grid[grid_pos])
            grid_pos += 1
        last_cp = cps.pop() if cps and cps[-1] == t_stop else None
        fld = lambda y, _i=mode: np.asarray(sys.field(_i, y), float)
        for tc, xc in flow_path(fld, x, t, t_stop, cfg, cps):
            x = xc
            if tc < t_stop or last_cp is not None or tc == horizon:
                record(tc, xc, mode)
        if not np.all(np.isfinite(x)):
            raise NonFiniteState(f"non-finite state at t={t_stop}")
        t = t_stop
        if t_prop >= horizon:
            break
        if sys.rates_constant:
            row = q[mode - 1].copy()
            row[mode - 1] = 0.0
            j = _pick(rng, row) + 1
        else:
            row = np.asarray(sys.rates(x), float)[mode - 1].copy()
            row[mode - 1] = 0.0
            lam_x = float(row.sum())
            if lam_x > sys.rate_bound * (1.0 + 1e-9):
                raise RateBoundViolated(
                    f"total rate {lam_x:.6g} exceeds bound {sys.rate_bound:.6g} at t={t}")
            if rng.random() * sys.rate_bound >= lam_x:
                continue  # thinning rejection, no jump
            j = _pick(rng, row) + 1
        events.append((t, mode, j))
        mode = j
        record(t, x, mode)

    if times[-1] < horizon:
        record(horizon, x, mode)
    return Trajectory(times=np.array(times), states=np.array(states),
                      mode_at=np.array(modes, int), events=tuple(events),
                      split=sys.split, n_modes=sys.modes,
                      bounding_box=sys.bounding_box)


def face_restriction(sys: SwitchedSystem) -> SwitchedSystem:
    """System induced on the invariant face: fields F_m^i(0_n, .) on R^m."""
    if sys.split is None:
        raise ValidationError("system declares no (n, m) split")
    n, m = sys.split

    def fld(i, xm):
        z = np.concatenate([np.zeros(n), np.asarray(xm, float)])
        return np.asarray(sys.field(i, z), float)[n:]

    def rts(xm):
        z = np.concatenate([np.zeros(n), np.asarray(xm, float)])
        return np.asarray(sys.rates(z), float)

    box = None
    if sys.bounding_box is not None:
        box = np.asarray(sys.bounding_box)[n:]
    return SwitchedSystem(dim=m, modes=sys.modes, field=fld, rates=rts,
                          rate_bound=sys.rate_bound,
                          rates_constant=sys.rates_constant,
                          bounding_box=box, name=sys.name + "-face")


def simulate_on_face(sys: SwitchedSystem, plan: SimulationPlan,
                     cfg: IntegratorConfig = DEFAULT_CONFIG) -> Trajectory:
    """Simulate with the first n coordinates pinned to exact zero."""
    if sys.split is None:
        raise ValidationError("system declares no (n, m) split")
    n, m = sys.split
    x0 = plan.init_state
    if np.any(x0[:n] != 0.0):
        raise NotOnFace(f"first {n} coordinates of init_state must be exactly zero")
    sub = face_restriction(sys)
    subplan = SimulationPlan(horizon=plan.horizon, sample_dt=plan.sample_dt,
                             seed=plan.seed, init_state=x0[n:],
                             init_mode=plan.init_mode)
    traj = simulate_pdmp(sub, subplan, cfg)
    full = np.zeros((len(traj.times), sys.dim))
    full[:, n:] = traj.states
    return Trajectory(times=traj.times, states=full, mode_at=traj.mode_at,
                      events=traj.events, split=sys.split, n_modes=sys.modes,
                      bounding_box=sys.bounding_box)


# ---------------------------------------------------------------------------
# CSV export (comma separated, '.' decimal, LF endings, 17 significant digits)

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_trajectory_csv(traj: Trajectory, path, events_path=None) -> None:
    d = traj.dim
    with open(path, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x_{j + 1}" for j in range(d)] + ["mode"])
        for t, x, m in zip(traj.times, traj.states, traj.mode_at):
            w.writerow([_fmt(t)] + [_fmt(v) for v in x] + [str(int(m))])
    if events_path is not None:
        write_events_csv(traj, events_path)


def write_events_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "from", "to"])
        for t, frm, to in traj.events:
            w.writerow([_fmt(t), str(int(frm)), str(int(to))])


def read_trajectory_csv(path, events_path=None) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    d = len(head) - 2
    times = np.array([float(r[0]) for r in body])
    states = np.array([[float(v) for v in r[1:1 + d]] for r in body])
    modes = np.array([int(r[-1]) for r in body])
    events = ()
    if events_path is not None:
        with open(events_path, newline="") as fh:
            erows = list(csv.reader(fh))[1:]
        events = tuple((float(r[0]), int(r[1]), int(r[2])) for r in erows)
    return Trajectory(times=times, states=states, mode_at=modes, events=events,
                      n_modes=int(modes.max()) if len(modes) else 0)
