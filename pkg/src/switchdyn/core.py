"""Domain types for randomly switched vector fields.

A switched system is a finite family of vector fields F^i on R^d sharing
the origin as a common equilibrium, together with a state-dependent rate
matrix driving the mode jumps.  An optional split (n, m) marks the
invariant face {0_n} x R^m, which forces the Jacobians at the origin into
block lower-triangular form.
"""

from __future__ import annotations

import sys as _sys
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    NotTriangular,
    MissingSplit,
    OriginNotEquilibrium,
    Reducible,
    ValidationError,
)

RATE_TOL = 1e-12
TRIANGULARITY_TOL = 1e-12
EQUILIBRIUM_TOL = 1e-9


def fd_jacobian(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                step: float | None = None) -> np.ndarray:
    """Central-difference Jacobian of f at x, step 1e-6 * max(1, ||x||)."""
    x = np.asarray(x, dtype=float)
    h = step if step is not None else 1e-6 * max(1.0, float(np.linalg.norm(x)))
    d = x.size
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        cols.append((np.asarray(f(x + e), float) - np.asarray(f(x - e), float)) / (2.0 * h))
    return np.column_stack(cols)


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


def check_rate_matrix(q: np.ndarray, tol: float = RATE_TOL) -> None:
    """Raise ValidationError unless q has zero row sums and nonnegative
    off-diagonal entries."""
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValidationError(f"rate matrix must be square, got shape {q.shape}")
    off = q - np.diag(np.diag(q))
    if np.any(off < -tol):
        raise ValidationError("rate matrix has negative off-diagonal entries")
    rows = np.abs(q.sum(axis=1))
    if np.any(rows > tol * max(1.0, float(np.max(np.abs(q))))):
        raise ValidationError(f"rate matrix row sums not zero (max |sum| = {rows.max():.3e})")


def is_irreducible(q: np.ndarray) -> bool:
    """Strong connectivity of the directed graph of positive off-diagonals."""
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    if n == 1:
        return True
    adj = (q > 0) & ~np.eye(n, dtype=bool)

    def reaches_all(mat):
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        stack = [0]
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(mat[i] & ~seen):
                seen[j] = True
                stack.append(j)
        return bool(seen.all())

    return reaches_all(adj) and reaches_all(adj.T)


@dataclass(frozen=True)
class SwitchedSystem:
    """Family of vector fields with a mode-jump mechanism.

    Evaluators use 1-based mode indices matching E = {1, ..., N}.
    All fields are immutable after construction; evaluators must be pure.
    """

    dim: int
    modes: int
    field: Callable[[int, np.ndarray], np.ndarray]
    rates: Callable[[np.ndarray], np.ndarray]
    rate_bound: float
    jacobian: Optional[Callable[[int, np.ndarray], np.ndarray]] = None
    split: Optional[tuple[int, int]] = None
    rates_constant: bool = False
    bounding_box: Optional[np.ndarray] = None
    default_state: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        if self.dim < 1 or self.modes < 1:
            raise ValidationError("dim and modes must be positive")
        if self.rate_bound < 0:
            raise ValidationError("rate_bound must be nonnegative")
        if self.split is not None:
            n, m = self.split
            if n < 1 or m < 1 or n + m != self.dim:
                raise ValidationError(f"split {self.split} incompatible with dim {self.dim}")
        if self.bounding_box is not None:
            box = _frozen(self.bounding_box)
            if box.shape != (self.dim, 2):
                raise ValidationError("bounding_box must have shape (dim, 2)")
            object.__setattr__(self, "bounding_box", box)
        if self.default_state is not None:
            x0 = _frozen(np.ravel(self.default_state))
            if x0.size != self.dim:
                raise ValidationError("default_state dimension mismatch")
            object.__setattr__(self, "default_state", x0)

    def jac(self, i: int, x: np.ndarray) -> np.ndarray:
        """Jacobian DF^i(x), analytic if supplied, else central differences."""
        if self.jacobian is not None:
            return np.asarray(self.jacobian(i, x), dtype=float)
        return fd_jacobian(lambda y: self.field(i, y), x)

    def total_leave_rate(self, i: int, x: np.ndarray) -> float:
        row = np.asarray(self.rates(x), dtype=float)[i - 1]
        return float(row.sum() - row[i - 1])


@dataclass(frozen=True)
class LinearSwitchedSystem:
    """Matrices of the linearization together with the rate matrix at 0."""

    k: int
    matrices: tuple
    q_matrix: np.ndarray

    def __post_init__(self):
        mats = tuple(_frozen(a) for a in self.matrices)
        if len(mats) == 0:
            raise ValidationError("need at least one matrix")
        for a in mats:
            if a.shape != (self.k, self.k):
                raise ValidationError(f"matrix shape {a.shape} != ({self.k}, {self.k})")
        q = _frozen(self.q_matrix)
        check_rate_matrix(q)
        if q.shape[0] != len(mats):
            raise ValidationError("q_matrix size must equal number of modes")
        if not is_irreducible(q):
            raise Reducible("rate matrix at the origin is not irreducible")
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "q_matrix", q)

    @property
    def n_modes(self) -> int:
        return len(self.matrices)

    def restrict(self, idx) -> "LinearSwitchedSystem":
        """Subsystem on the given coordinate indices (same switching)."""
        idx = np.asarray(idx, dtype=int)
        mats = tuple(a[np.ix_(idx, idx)] for a in self.matrices)
        return LinearSwitchedSystem(k=idx.size, matrices=mats, q_matrix=self.q_matrix)

    def as_switched_system(self, split: tuple[int, int] | None = None,
                           name: str = "") -> SwitchedSystem:
        """Wrap the matrices as a switched system with linear fields."""
        mats = self.matrices
        q = self.q_matrix
        bound = float(np.max(-np.diag(q))) if q.shape[0] > 1 else 0.0
        return SwitchedSystem(
            dim=self.k,
            modes=self.n_modes,
            field=lambda i, x: mats[i - 1] @ np.asarray(x, float),
            jacobian=lambda i, x: np.array(mats[i - 1]),
            rates=lambda x: np.array(q),
            rate_bound=bound,
            rates_constant=True,
            split=split,
            default_state=np.full(self.k, 1.0 / np.sqrt(self.k)),
            name=name,
        )


@dataclass(frozen=True)
class BlockDecomposition:
    """Blocks (B^i, C^i, D^i) of each matrix split at row/column n."""

    n: int
    m: int
    b_blocks: tuple
    c_blocks: tuple
    d_blocks: tuple
    residual: float

    @property
    def valid(self) -> bool:
        return self.residual <= TRIANGULARITY_TOL


@dataclass(frozen=True)
class Trajectory:
    """Sampled path (X_t, I_t) plus the exact switching-event log.

    mode_at is cadlag: the value at an event time is the post-jump mode, so
    modes are constant on [times[j], times[j+1]).
    """

    times: np.ndarray
    states: np.ndarray
    mode_at: np.ndarray
    events: tuple
    split: Optional[tuple[int, int]] = None
    n_modes: int = 0
    bounding_box: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "times", _frozen(self.times))
        st = np.array(self.states, dtype=float)
        if st.ndim == 1:
            st = st[:, None]
        st.flags.writeable = False
        object.__setattr__(self, "states", st)
        md = np.array(self.mode_at, dtype=int)
        md.flags.writeable = False
        object.__setattr__(self, "mode_at", md)
        object.__setattr__(self, "events", tuple(tuple(e) for e in self.events))

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def validate(self) -> None:
        if not np.all(np.diff(self.times) > 0):
            raise ValidationError("trajectory times must be strictly increasing")
        if len(self.times) != len(self.states) or len(self.times) != len(self.mode_at):
            raise ValidationError("times, states and mode_at lengths differ")
        t0, t1 = float(self.times[0]), float(self.times[-1])
        for (te, frm, to) in self.events:
            if not (t0 <= te <= t1):
                raise ValidationError(f"event at {te} outside [{t0}, {t1}]")
        # piecewise constancy: the mode may only change at a recorded event
        ev_times = {float(e[0]) for e in self.events}
        changes = np.flatnonzero(np.diff(self.mode_at) != 0)
        for j in changes:
            if float(self.times[j + 1]) not in ev_times:
                raise ValidationError("mode changed between samples without an event record")


# ---------------------------------------------------------------------------
# structural operations

def linearize_at_origin(sys: SwitchedSystem,
                        tol: float = EQUILIBRIUM_TOL) -> LinearSwitchedSystem:
    """Jacobians at the common equilibrium plus the rate matrix at 0."""
    zero = np.zeros(sys.dim)
    for i in range(1, sys.modes + 1):
        r = float(np.linalg.norm(np.asarray(sys.field(i, zero), float)))
        if r > tol:
            raise OriginNotEquilibrium(f"||F^{i}(0)|| = {r:.3e} > {tol:.1e}")
    mats = [sys.jac(i, zero) for i in range(1, sys.modes + 1)]
    return LinearSwitchedSystem(k=sys.dim, matrices=tuple(mats),
                                q_matrix=np.asarray(sys.rates(zero), float))


def block_decompose(lin: LinearSwitchedSystem, n: int,
                    tol: float = TRIANGULARITY_TOL,
                    strict: bool = False) -> BlockDecomposition:
    """Split each matrix at index n; residual is the largest upper-right entry."""
    k = lin.k
    if not 0 < n < k:
        raise ValidationError(f"block size n={n} must satisfy 0 < n < k={k}")
    m = k - n
    bs, cs, ds = [], [], []
    residual = 0.0
    for a in lin.matrices:
        bs.append(a[:n, :n])
        cs.append(a[n:, :n])
        ds.append(a[n:, n:])
        residual = max(residual, float(np.max(np.abs(a[:n, n:]))))
    if strict and residual > tol:
        raise NotTriangular(f"upper-right block residual {residual:.3e} > {tol:.1e}")
    return BlockDecomposition(n=n, m=m, b_blocks=tuple(bs), c_blocks=tuple(cs),
                              d_blocks=tuple(ds), residual=residual)


def validate_face_invariance(sys: SwitchedSystem, samples: int = 50,
                             radius: float = 1.0, seed: int = 0) -> dict:
    """Sample the face and report the largest transverse field residual."""
    if sys.split is None:
        raise MissingSplit("system declares no (n, m) split")
    n, m = sys.split
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    worst = 0.0
    for _ in range(samples):
        xm = rng.uniform(-radius, radius, size=m)
        nx = np.linalg.norm(xm)
        if nx > radius:
            xm *= radius / nx
        x = np.concatenate([np.zeros(n), xm])
        for i in range(1, sys.modes + 1):
            fn = np.asarray(sys.field(i, x), float)[:n]
            worst = max(worst, float(np.linalg.norm(fn)))
    return {
        "max_residual": worst,
        "passed": worst <= EQUILIBRIUM_TOL,
        "samples": samples,
        "radius": radius,
        "seed": seed,
    }


def validate_system(sys: SwitchedSystem, samples: int = 20, radius: float = 1.0,
                    seed: int = 0) -> dict:
    """Sampled structural checks: rate-matrix validity, irreducibility at 0,
    common equilibrium, and face invariance when a split is declared."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    pts = [np.zeros(sys.dim)]
    pts += [rng.uniform(-radius, radius, size=sys.dim) for _ in range(samples)]
    for x in pts:
        check_rate_matrix(np.asarray(sys.rates(x), float))
    q0 = np.asarray(sys.rates(np.zeros(sys.dim)), float)
    if q0.shape != (sys.modes, sys.modes):
        raise ValidationError("rates(0) has wrong shape")
    if not is_irreducible(q0):
        raise Reducible("rate matrix at the origin is not irreducible")
    zero = np.zeros(sys.dim)
    for i in range(1, sys.modes + 1):
        r = float(np.linalg.norm(np.asarray(sys.field(i, zero), float)))
        if r > EQUILIBRIUM_TOL:
            raise OriginNotEquilibrium(f"||F^{i}(0)|| = {r:.3e}")
    report = {"rates_ok": True, "irreducible": True, "origin_equilibrium": True}
    if sys.split is not None:
        report["face"] = validate_face_invariance(sys, samples=samples,
                                                  radius=radius, seed=seed)
    return report


# ---------------------------------------------------------------------------
# model registry

MODEL_REGISTRY: dict[str, Callable[..., SwitchedSystem]] = {}


def register_model(name: str):
    def deco(builder):
        MODEL_REGISTRY[name] = builder
        return builder
    return deco


def build_model(name: str, **overrides) -> SwitchedSystem:
    # populating import; models registers its builders on first use
    if name not in MODEL_REGISTRY:
        import importlib

        importlib.import_module("switchdyn.models")
    if name not in MODEL_REGISTRY:
        raise ValidationError(
            f"unknown model {name!r}; available: {sorted(MODEL_REGISTRY)}")
    return MODEL_REGISTRY[name](**overrides)


def load_linear_system(path) -> LinearSwitchedSystem:
    """Read a custom linear system from a TOML file.

    Keys: n_modes, k, q (row-major nested array), matrices (list of k*k
    row-major arrays, one per mode).
    """
    if _sys.version_info >= (3, 11):
        import tomllib as toml
    else:
        import tomli as toml
    with open(path, "rb") as fh:
        data = toml.load(fh)
    try:
        n_modes = int(data["n_modes"])
        k = int(data["k"])
        q = np.asarray(data["q"], dtype=float)
        mats = [np.asarray(m, dtype=float).reshape(k, k) for m in data["matrices"]]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed linear-system file {path}: {exc}") from exc
    if len(mats) != n_modes:
        raise ValidationError(f"expected {n_modes} matrices, found {len(mats)}")
    return LinearSwitchedSystem(k=k, matrices=tuple(mats), q_matrix=q)
