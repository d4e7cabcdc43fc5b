"""Deterministic flow integration between jumps.

Two methods: classic fixed-step RK4 and an embedded Dormand-Prince 5(4)
pair with step control.  Both honor hard endpoints exactly, which is what
the jump engine needs to stop at event times, and both are pure functions
of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteState, StepUnderflow, ValidationError

STEP_FLOOR = 1e-14

# Dormand-Prince 5(4) tableau
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
          187 / 2100, 1 / 40)
_DP_ERR = tuple(b5 - b4 for b5, b4 in zip(_DP_B5, _DP_B4))


@dataclass(frozen=True)
class IntegratorConfig:
    """method is "rk4-fixed" (uses step) or "dormand-prince-adaptive"
    (uses abs_tol / rel_tol).  renorm_period bounds the span between
    renormalizations in sphere-projected integration."""

    method: str = "dormand-prince-adaptive"
    step: float = 1e-3
    abs_tol: float = 1e-9
    rel_tol: float = 1e-9
    renorm_period: float = 1.0

    def __post_init__(self):
        if self.method not in ("rk4-fixed", "dormand-prince-adaptive"):
            raise ValidationError(f"unknown integrator method {self.method!r}")
        if self.step <= 0:
            raise ValidationError("step must be positive")
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValidationError("tolerances must be positive")
        if self.renorm_period <= 0:
            raise ValidationError("renorm_period must be positive")


DEFAULT_CONFIG = IntegratorConfig()


def _rk4_span(field, x, t0, t1, h):
    """Equal substeps of size <= h across [t0, t1]."""
    span = t1 - t0
    if span <= 0:
        return x
    nsteps = max(1, int(np.ceil(span / h - 1e-12)))
    hs = span / nsteps
    for _ in range(nsteps):
        k1 = field(x)
        k2 = field(x + 0.5 * hs * k1)
        k3 = field(x + 0.5 * hs * k2)
        k4 = field(x + hs * k3)
        x = x + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x)):
        raise NonFiniteState(f"non-finite state at t={t1}")
    return x


def _dp45_span(field, x, t0, t1, atol, rtol):
    """Adaptive Dormand-Prince across [t0, t1], stopping exactly at t1."""
    span = t1 - t0
    if span <= 0:
        return x
    t = t0
    # conservative initial step from the field scale
    f0 = field(x)
    scale = atol + rtol * np.abs(x)
    d0 = float(np.sqrt(np.mean((x / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2)))
    h = 0.01 * d0 / d1 if d0 > 1e-5 and d1 > 1e-5 else 1e-6
    h = min(h, span)
    k = [None] * 7
    k[0] = f0
    while t < t1:
        h = min(h, t1 - t)
        if h < STEP_FLOOR:
            raise StepUnderflow(f"step {h:.3e} below floor at t={t}")
        for s in range(1, 7):
            xs = x
            for j, a in enumerate(_DP_A[s]):
                if a != 0.0:
                    xs = xs + (h * a) * k[j]
            k[s] = field(xs)
        x5 = x
        for j, b in enumerate(_DP_B5):
            if b != 0.0:
                x5 = x5 + (h * b) * k[j]
        err = np.zeros_like(x)
        for j, e in enumerate(_DP_ERR):
            if e != 0.0:
                err = err + (h * e) * k[j]
        scale = atol + rtol * np.maximum(np.abs(x), np.abs(x5))
        enorm = float(np.sqrt(np.mean((err / scale) ** 2)))
        if not np.isfinite(enorm):
            raise NonFiniteState(f"non-finite state near t={t}")
        if enorm <= 1.0:
            t = t + h
            x = x5
            k[0] = k[6]  # FSAL
            fac = 5.0 if enorm == 0.0 else min(5.0, max(0.2, 0.9 * enorm ** -0.2))
            h = h * fac
        else:
            h = h * max(0.2, 0.9 * enorm ** -0.2)
    if not np.all(np.isfinite(x)):
        raise NonFiniteState(f"non-finite state at t={t1}")
    return x


def _advance(field, x, t0, t1, cfg):
    if cfg.method == "rk4-fixed":
        return _rk4_span(field, x, t0, t1, cfg.step)
    return _dp45_span(field, x, t0, t1, cfg.abs_tol, cfg.rel_tol)


def flow(field, x0, t: float, cfg: IntegratorConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Endpoint of the flow of the (autonomous) field after time t >= 0."""
    if t < 0:
        raise ValidationError("flow requires t >= 0")
    x = np.asarray(x0, dtype=float).copy()
    if t == 0:
        return x
    return _advance(field, x, 0.0, float(t), cfg)


def flow_path(field, x0, t0: float, t1: float, cfg: IntegratorConfig,
              checkpoints=()) -> list:
    """Integrate across [t0, t1] stopping exactly at each checkpoint.

    Returns [(t, state), ...] at every checkpoint in (t0, t1) plus the
    endpoint t1.  Checkpoints must be sorted.
    """
    x = np.asarray(x0, dtype=float).copy()
    out = []
    t = float(t0)
    for tc in checkpoints:
        if tc <= t or tc >= t1:
            continue
        x = _advance(field, x, t, float(tc), cfg)
        out.append((float(tc), x.copy()))
        t = float(tc)
    x = _advance(field, x, t, float(t1), cfg)
    out.append((float(t1), x.copy()))
    return out


def sphere_field(a: np.ndarray):
    """Right-hand side of the sphere-projected linear dynamics
    d(theta)/dt = A theta - <A theta, theta> theta."""
    def rhs(th):
        v = a @ th
        return v - th * float(v @ th)
    return rhs


def flow_on_sphere(lin, mode: int, theta0, t: float,
                   cfg: IntegratorConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Integrate the angular dynamics of a single mode for time t.

    theta0 must be a unit vector (within 1e-9).  The direction is divided
    by its norm every cfg.renorm_period and once more on output, so the
    result satisfies | ||theta|| - 1 | <= 1e-12.
    """
    th = np.asarray(theta0, dtype=float).copy()
    nrm = float(np.linalg.norm(th))
    if abs(nrm - 1.0) > 1e-9:
        raise ValidationError(f"theta0 norm {nrm} differs from 1 by more than 1e-9")
    a = np.asarray(lin.matrices[mode - 1], float)
    rhs = sphere_field(a)
    t = float(t)
    s = 0.0
    while s < t:
        e = min(t, s + cfg.renorm_period)
        th = _advance(rhs, th, s, e, cfg)
        th = th / np.linalg.norm(th)
        s = e
    return th
