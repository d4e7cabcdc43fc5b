"""Built-in switched systems with validated parameters and derived
quantities.

Model constructors place the common equilibrium at the origin and declare
the invariant-face split, so every analysis module sees the same normal
form.  Registry keys: lorenz-switch, sirs, linear-2d, linear-block.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    LinearSwitchedSystem,
    SwitchedSystem,
    check_rate_matrix,
    register_model,
)
from .errors import ValidationError
from .jump import stationary_distribution
from .lyapunov import metzler_lower_bound

_SYMMETRIC_Q = ((-1.0, 1.0), (1.0, -1.0))


def _pair(v, name: str) -> tuple:
    arr = tuple(float(x) for x in np.atleast_1d(v))
    if len(arr) == 1:
        arr = arr * 2
    if any(x <= 0 for x in arr):
        raise ValidationError(f"{name} entries must be positive")
    return arr


# ---------------------------------------------------------------------------
# switched Lorenz fields

@dataclass(frozen=True)
class LorenzSwitchParams:
    sigma: tuple = (10.0, 10.0)
    b: tuple = (8.0 / 3.0, 8.0 / 3.0)
    r: tuple = (28.0, 35.0)
    q_matrix: tuple = _SYMMETRIC_Q

    def __post_init__(self):
        object.__setattr__(self, "sigma", _pair(self.sigma, "sigma"))
        object.__setattr__(self, "b", _pair(self.b, "b"))
        object.__setattr__(self, "r", _pair(self.r, "r"))
        q = np.asarray(self.q_matrix, float)
        check_rate_matrix(q)
        if q.shape != (2, 2):
            raise ValidationError("lorenz-switch uses a 2x2 rate matrix")
        object.__setattr__(self, "q_matrix", tuple(tuple(row) for row in q))


@register_model("lorenz-switch")
def lorenz_system(params: Optional[LorenzSwitchParams] = None, **overrides) -> SwitchedSystem:
    """Two Lorenz fields sharing the z-axis as an invariant face.

    Coordinates (x, y | z): split (2, 1).  The Jacobian at the origin is
    block diagonal with B^i = [[-sigma_i, sigma_i], [r_i, -1]] and
    D^i = (-b_i).
    """
    if params is None:
        params = LorenzSwitchParams(**overrides)
    sig, bb, rr = params.sigma, params.b, params.r
    q = np.asarray(params.q_matrix, float)

    def fld(i, u):
        s, b_, r_ = sig[i - 1], bb[i - 1], rr[i - 1]
        x, y, z = u[0], u[1], u[2]
        return np.array([s * (y - x), r_ * x - y - x * z, x * y - b_ * z])

    def jac(i, u):
        s, b_, r_ = sig[i - 1], bb[i - 1], rr[i - 1]
        x, y, z = u[0], u[1], u[2]
        return np.array([[-s, s, 0.0], [r_ - z, -1.0, -x], [y, x, -b_]])

    r_max = max(rr)
    box = np.array([[-0.9 * r_max, 0.9 * r_max],
                    [-1.1 * r_max, 1.1 * r_max],
                    [-2.0, 2.0 * r_max]])
    return SwitchedSystem(
        dim=3, modes=2, field=fld, jacobian=jac,
        rates=lambda u: q, rate_bound=float(np.max(-np.diag(q))),
        rates_constant=True, split=(2, 1), bounding_box=box,
        default_state=np.array([0.0, 0.05, 0.05]), name="lorenz-switch")


def lorenz_invariant_region(params: LorenzSwitchParams) -> dict:
    """Quadratic trapping region shared by both fields.

    V(x, y, z) = r0 x^2 + sigma y^2 + sigma (z - 2 r0)^2 decreases outside
    a bounded ellipsoid for both fields (Young's inequality absorbs the
    cross term r1 - r0), so a high enough level set is forward invariant.
    Requires equal sigma across modes and |r1 - r0| < sqrt(2 r0).
    """
    sig = params.sigma
    if abs(sig[0] - sig[1]) > 0:
        raise ValidationError("trapping region derivation needs equal sigma")
    s = sig[0]
    r0 = params.r[0]
    dr = abs(params.r[1] - params.r[0])
    if dr >= 2.0 * np.sqrt(r0):
        raise ValidationError("r values too far apart for the trapping region")
    eps = 0.5 * (dr * dr / 4.0 + r0)
    alpha = r0 - eps
    beta = 1.0 - dr * dr / (4.0 * eps)
    b_min, b_max = min(params.b), max(params.b)
    budget = b_max * r0 * r0
    kappa = b_min
    payoff = max(r0 / alpha, s / beta)
    # maximize payoff*(budget - kappa w^2) + s (w - r0)^2 over |w| <= sqrt(budget/kappa),
    # where w = z - r0; quadratic in w
    aa = s - payoff * kappa
    bb_ = -2.0 * s * r0
    cc = payoff * budget + s * r0 * r0
    w_lim = np.sqrt(budget / kappa)
    cand = [-w_lim, w_lim]
    if aa < 0:
        cand.append(min(max(-bb_ / (2 * aa), -w_lim), w_lim))
    level = max(aa * w * w + bb_ * w + cc for w in cand) * 1.001
    return {
        "weights": (r0, s, s),
        "center": (0.0, 0.0, 2.0 * r0),
        "level": float(level),
    }


def lorenz_region_value(region: dict, u) -> float:
    w = region["weights"]
    c = region["center"]
    u = np.asarray(u, float)
    return float(sum(w[j] * (u[..., j] - c[j]) ** 2 for j in range(3)))


def lorenz_bounds_report(params: Optional[LorenzSwitchParams] = None,
                         p=None) -> dict:
    """Traces, Metzler lower bound for the transverse block, and the face
    exponent -(p0 b0 + p1 b1)."""
    if params is None:
        params = LorenzSwitchParams()
    if p is None:
        p = stationary_distribution(np.asarray(params.q_matrix, float))
    p = np.asarray(p, float)
    b_blocks = [np.array([[-params.sigma[i], params.sigma[i]],
                          [params.r[i], -1.0]]) for i in range(2)]
    traces = [float(np.trace(bk)) for bk in b_blocks]
    bound = metzler_lower_bound(b_blocks, p)
    lam_d_plus = -float(p @ np.asarray(params.b))
    return {
        "traces": traces,
        "metzler_lower_bound": bound,
        "lambda_d_plus": lam_d_plus,
        "predicts_transverse_growth": bool(bound > 0.0),
        "p": [float(v) for v in p],
    }


# ---------------------------------------------------------------------------
# SIRS in randomly switched environments

@dataclass(frozen=True)
class SirsParams:
    """Per-environment rates; Lambda (birth inflow) and mu (death rate) are
    shared across environments."""

    Lambda: float = 1.0
    mu: float = 0.5
    beta: tuple = (0.3, 0.6)
    lam: tuple = (0.3, 0.3)
    alpha: tuple = (0.1, 0.1)
    delta: tuple = (0.2, 0.2)
    incidence: str = "linear"
    sat_c: tuple = ()
    q_matrix: tuple = _SYMMETRIC_Q

    def __post_init__(self):
        if self.Lambda <= 0 or self.mu <= 0:
            raise ValidationError("Lambda and mu must be positive")
        n = len(np.atleast_1d(self.beta))
        for name in ("beta", "lam", "alpha", "delta"):
            vals = tuple(float(v) for v in np.atleast_1d(getattr(self, name)))
            if len(vals) != n or any(v <= 0 for v in vals):
                raise ValidationError(f"{name} must be {n} positive rates")
            object.__setattr__(self, name, vals)
        if self.incidence not in ("linear", "saturating"):
            raise ValidationError("incidence must be 'linear' or 'saturating'")
        if self.incidence == "saturating":
            cs = tuple(float(v) for v in np.atleast_1d(self.sat_c)) or (1.0,) * n
            if len(cs) != n or any(v <= 0 for v in cs):
                raise ValidationError("sat_c must hold one positive constant per environment")
            object.__setattr__(self, "sat_c", cs)
        q = np.asarray(self.q_matrix, float)
        check_rate_matrix(q)
        if q.shape != (n, n):
            raise ValidationError(f"q_matrix must be {n}x{n}")
        object.__setattr__(self, "q_matrix", tuple(tuple(row) for row in q))

    @property
    def n_env(self) -> int:
        return len(self.beta)

    def incidence_fn(self, k: int):
        """G_k and its derivative; G_k(0) = 0 and G_k'(0) = 1."""
        if self.incidence == "linear":
            return (lambda i: i), (lambda i: 1.0)
        c = self.sat_c[k - 1]
        return (lambda i: i / (1.0 + c * i)), (lambda i: 1.0 / (1.0 + c * i) ** 2)

    @property
    def g_prime0(self) -> tuple:
        return (1.0,) * self.n_env


def sirs_to_internal(params: SirsParams, sir) -> np.ndarray:
    """(S, I, R) -> (I, R, S - Lambda/mu)."""
    s, i, r = np.asarray(sir, float)
    return np.array([i, r, s - params.Lambda / params.mu])


def sirs_from_internal(params: SirsParams, u) -> np.ndarray:
    """(I, R, s) -> (S, I, R)."""
    u = np.asarray(u, float)
    return np.array([u[2] + params.Lambda / params.mu, u[0], u[1]])


@register_model("sirs")
def sirs_system(params: Optional[SirsParams] = None, **overrides) -> SwitchedSystem:
    """SIRS flows in reordered, shifted coordinates (I, R, S - Lambda/mu).

    The disease-free point becomes the origin and {I = 0} the invariant
    face, split (1, 2).  The declared bounding box is the image of the
    population simplex {S + I + R <= Lambda/mu, all >= 0}.
    """
    if params is None:
        params = SirsParams(**overrides)
    lam_in, mu = params.Lambda, params.mu
    s_star = lam_in / mu
    q = np.asarray(params.q_matrix, float)
    gs = [params.incidence_fn(k) for k in range(1, params.n_env + 1)]

    def fld(k, u):
        beta, lm, al, de = (params.beta[k - 1], params.lam[k - 1],
                            params.alpha[k - 1], params.delta[k - 1])
        g, _ = gs[k - 1]
        i_, r_, s_ = u[0], u[1], u[2]
        big_s = s_ + s_star
        inc = beta * big_s * g(i_)
        return np.array([inc - (mu + al + de) * i_,
                         de * i_ - (mu + lm) * r_,
                         -mu * s_ + lm * r_ - inc])

    def jac(k, u):
        beta, lm, al, de = (params.beta[k - 1], params.lam[k - 1],
                            params.alpha[k - 1], params.delta[k - 1])
        g, gp = gs[k - 1]
        i_, _r, s_ = u[0], u[1], u[2]
        big_s = s_ + s_star
        return np.array([
            [beta * big_s * gp(i_) - (mu + al + de), 0.0, beta * g(i_)],
            [de, -(mu + lm), 0.0],
            [-beta * big_s * gp(i_), lm, -mu - beta * g(i_)],
        ])

    pad = 0.02 * s_star
    box = np.array([[-pad, s_star + pad],
                    [-pad, s_star + pad],
                    [-s_star - pad, pad]])
    return SwitchedSystem(
        dim=3, modes=params.n_env, field=fld, jacobian=jac,
        rates=lambda u: q, rate_bound=float(np.max(-np.diag(q))),
        rates_constant=True, split=(1, 2), bounding_box=box,
        default_state=np.array([0.05 * s_star, 0.05 * s_star, -0.15 * s_star]),
        name="sirs")


def sirs_r0(params: Optional[SirsParams] = None, **overrides) -> dict:
    """Reproduction number and the transverse growth rate it thresholds.

    r0 < 1 exactly when lambda_b_plus < 0 (ties within 1e-12 count as the
    threshold itself).
    """
    if params is None:
        params = SirsParams(**overrides)
    p = stationary_distribution(np.asarray(params.q_matrix, float))
    s_star = params.Lambda / params.mu
    gp = params.g_prime0
    num = float(sum(p[k] * params.beta[k] * s_star * gp[k]
                    for k in range(params.n_env)))
    den = float(sum(p[k] * (params.mu + params.alpha[k] + params.delta[k])
                    for k in range(params.n_env)))
    r0 = num / den
    lam_b = num - den
    tie = 1e-12 * max(1.0, abs(num), abs(den))
    if abs(r0 - 1.0) <= tie and abs(lam_b) <= tie:
        consistent = True
    else:
        consistent = (r0 > 1.0) == (lam_b > 0.0) and (r0 < 1.0) == (lam_b < 0.0)
    return {
        "r0": r0,
        "lambda_b_plus": lam_b,
        "p": [float(v) for v in p],
        "sign_consistent": bool(consistent),
    }


def sirs_interior_equilibria(params: SirsParams, max_iter: int = 200) -> list:
    """Damped-Newton search for the per-environment endemic equilibrium,
    started from the simplex center; run for every environment whose
    transverse rate at the origin is positive."""
    sys_ = sirs_system(params)
    s_star = params.Lambda / params.mu
    out = []
    for k in range(1, params.n_env + 1):
        growth = (params.beta[k - 1] * s_star * params.g_prime0[k - 1]
                  - (params.mu + params.alpha[k - 1] + params.delta[k - 1]))
        if growth <= 0:
            out.append({"env": k, "growth": growth, "checked": False})
            continue
        u = np.array([s_star / 3.0, s_star / 3.0, -2.0 * s_star / 3.0])
        ok = False
        for _ in range(max_iter):
            f = sys_.field(k, u)
            nf = np.linalg.norm(f)
            if nf < 1e-12:
                ok = True
                break
            step = np.linalg.solve(sys_.jac(k, u), -f)
            lam = 1.0
            while lam > 1e-6:
                u_new = u + lam * step
                if np.linalg.norm(sys_.field(k, u_new)) < nf:
                    break
                lam *= 0.5
            u = u + lam * step
        sir = sirs_from_internal(params, u)
        interior = bool(np.all(sir > 0) and sir.sum() <= s_star * (1 + 1e-9))
        out.append({"env": k, "growth": growth, "checked": True,
                    "converged": ok, "equilibrium_sir": [float(v) for v in sir],
                    "interior": interior})
    return out


# ---------------------------------------------------------------------------
# linear demo systems

@register_model("linear-2d")
def linear_2d_system(b=(2.0, 0.0), c=(1.0, 3.0), d=(-1.0, -1.0),
                     q_matrix=_SYMMETRIC_Q) -> SwitchedSystem:
    """Two-dimensional lower-triangular family [[b_i, 0], [c_i, d_i]]."""
    b = tuple(float(v) for v in np.atleast_1d(b))
    c = tuple(float(v) for v in np.atleast_1d(c))
    d = tuple(float(v) for v in np.atleast_1d(d))
    if not len(b) == len(c) == len(d):
        raise ValidationError("b, c, d must have equal lengths")
    mats = [np.array([[b[i], 0.0], [c[i], d[i]]]) for i in range(len(b))]
    lin = LinearSwitchedSystem(k=2, matrices=tuple(mats),
                               q_matrix=np.asarray(q_matrix, float))
    out = lin.as_switched_system(split=(1, 1), name="linear-2d")
    return out


_BLOCK_DEFAULT = (
    ((1.0, 0.5, 0.0, 0.0),
     (0.0, 0.8, 0.0, 0.0),
     (0.3, -0.2, -1.0, 0.4),
     (0.1, 0.7, 0.0, -1.5)),
    ((0.2, -0.3, 0.0, 0.0),
     (0.4, 1.1, 0.0, 0.0),
     (-0.5, 0.2, -0.8, -0.3),
     (0.3, -0.1, 0.2, -2.0)),
)


@register_model("linear-block")
def linear_block_system(matrices=_BLOCK_DEFAULT, n: int = 2,
                        q_matrix=_SYMMETRIC_Q) -> SwitchedSystem:
    """Block lower-triangular linear demo (default k = 4, split (2, 2))."""
    mats = tuple(np.asarray(m, float) for m in matrices)
    k = mats[0].shape[0]
    lin = LinearSwitchedSystem(k=k, matrices=mats,
                               q_matrix=np.asarray(q_matrix, float))
    return lin.as_switched_system(split=(int(n), k - int(n)), name="linear-block")
