"""Command-line front end.

Commands: simulate, lyapunov, classify2d, check-triangular, occupation,
extinction, bracket, sweep, plus rerun for reproducing a finished
experiment from its manifest.  Exit codes: 0 success, 1 validation error,
2 numeric failure, 3 a pass/fail check returned fail.

Every run writes a manifest.json holding the fully resolved configuration;
rerunning from it reproduces the result files bit for bit.
"""

from __future__ import annotations

import argparse
import json
import os
import sys as _sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .core import (
    SwitchedSystem,
    build_model,
    linearize_at_origin,
    load_linear_system,
    validate_system,
)
from .errors import NumericError, ValidationError
from .integrators import IntegratorConfig
from .jump import SimulationPlan, rng_for, simulate_pdmp, write_trajectory_csv
from .lyapunov import (
    ESTIMATOR_CONFIG,
    check_triangular_max,
    classify_2d_triangular,
    estimate_growth_via_theta,
    estimate_top_exponent,
    minimum_growth_scan,
)
from .jump import stationary_distribution
from .models import SirsParams, sirs_r0
from .persistence import (
    GridSpec,
    bracket_rank,
    extinction_rate,
    low_norm_fraction,
    occupation_measure,
)

OUTPUT_ENV_VAR = "SWITCHDYN_OUTPUT_DIR"

COMMANDS = ("simulate", "lyapunov", "classify2d", "check-triangular",
            "occupation", "extinction", "bracket", "sweep")


@dataclass
class ExperimentConfig:
    command: str
    model: str | None = None
    linear_file: str | None = None
    model_params: dict = field(default_factory=dict)
    horizon: float = 100.0
    sample_dt: float = 0.1
    seed: int = 0
    x0: list | None = None
    mode0: int = 1
    replicates: int = 8
    burn_in: float | None = None
    method: str = "rk4-fixed"
    step: float = 5e-3
    abs_tol: float = 1e-9
    rel_tol: float = 1e-9
    renorm_period: float = 1.0
    output_dir: str = "."
    options: dict = field(default_factory=dict)

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(method=self.method, step=self.step,
                                abs_tol=self.abs_tol, rel_tol=self.rel_tol,
                                renorm_period=self.renorm_period)

    def to_dict(self) -> dict:
        return asdict(self)


def _json_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _write_json(path, obj) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(_json_dumps(obj))


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        if "," in text:
            return [_parse_value(t) for t in text.split(",")]
        return text


def _parse_vector(text: str) -> list:
    val = _parse_value(text)
    if isinstance(val, (int, float)):
        return [float(val)]
    return [float(v) for v in val]


def _build_system(cfg: ExperimentConfig) -> SwitchedSystem:
    if cfg.linear_file:
        lin = load_linear_system(cfg.linear_file)
        return lin.as_switched_system(name=os.path.basename(cfg.linear_file))
    if not cfg.model:
        raise ValidationError("no model given (use --model or --linear-file)")
    return build_model(cfg.model, **cfg.model_params)


def _resolve_x0(cfg: ExperimentConfig, sys_: SwitchedSystem) -> np.ndarray:
    if cfg.x0 is not None:
        return np.asarray(cfg.x0, dtype=float)
    if sys_.default_state is not None:
        return np.asarray(sys_.default_state, dtype=float)
    return np.full(sys_.dim, 0.05)


# ---------------------------------------------------------------------------
# command handlers: return (exit_code, outputs dict name -> writer)

def _cmd_simulate(cfg: ExperimentConfig, outdir: str) -> tuple:
    sys_ = _build_system(cfg)
    validate_system(sys_)
    plan = SimulationPlan(horizon=cfg.horizon, sample_dt=cfg.sample_dt,
                          seed=cfg.seed, init_state=_resolve_x0(cfg, sys_),
                          init_mode=cfg.mode0)
    traj = simulate_pdmp(sys_, plan, cfg.integrator())
    write_trajectory_csv(traj, os.path.join(outdir, "trajectory.csv"),
                         os.path.join(outdir, "events.csv"))
    return 0, ["trajectory.csv", "events.csv"]


def _linearized(cfg: ExperimentConfig):
    sys_ = _build_system(cfg)
    return sys_, linearize_at_origin(sys_)


def _cmd_lyapunov(cfg: ExperimentConfig, outdir: str) -> tuple:
    sys_, lin = _linearized(cfg)
    block = cfg.options.get("block", "full")
    if block != "full":
        n = cfg.options.get("n")
        if n is None:
            if sys_.split is None:
                raise ValidationError("--n required when the model has no split")
            n = sys_.split[0]
        from .core import block_decompose
        from .core import LinearSwitchedSystem

        dec = block_decompose(lin, int(n), strict=True)
        mats = dec.b_blocks if block == "B" else dec.d_blocks
        lin = LinearSwitchedSystem(k=mats[0].shape[0], matrices=mats,
                                   q_matrix=lin.q_matrix)
    method = cfg.options.get("method", "norm-growth")
    if method == "norm-growth":
        est = estimate_top_exponent(lin, None, cfg.horizon, cfg.replicates,
                                    seed=cfg.seed, burn_in=cfg.burn_in)
        payload = est.to_dict()
    elif method == "theta-average":
        theta0 = cfg.options.get("theta0")
        th = (np.asarray(theta0, float) if theta0 is not None
              else np.full(lin.k, 1.0 / np.sqrt(lin.k)))
        est = estimate_growth_via_theta(lin, th, cfg.horizon, cfg.replicates,
                                        seed=cfg.seed, burn_in=cfg.burn_in)
        payload = est.to_dict()
    elif method == "min-scan":
        payload = minimum_growth_scan(lin, cfg.horizon, replicates=cfg.replicates,
                                      seed=cfg.seed,
                                      n_starts=int(cfg.options.get("n_starts", 32)),
                                      burn_in=cfg.burn_in)
    else:
        raise ValidationError(f"unknown estimation method {method!r}")
    payload = {"block": block, "seed": cfg.seed, "horizon": cfg.horizon,
               "replicates": cfg.replicates, "estimate": payload}
    _write_json(os.path.join(outdir, "lyapunov.json"), payload)
    return 0, ["lyapunov.json"]


def _cmd_classify2d(cfg: ExperimentConfig, outdir: str) -> tuple:
    opts = cfg.options
    for key in ("b", "c", "d"):
        if key not in opts:
            raise ValidationError(f"classify2d requires --{key}")
    b = np.asarray(opts["b"], float)
    c = np.asarray(opts["c"], float)
    d = np.asarray(opts["d"], float)
    if "p" in opts and opts["p"] is not None:
        p = np.asarray(opts["p"], float)
    elif "q" in opts and opts["q"] is not None:
        p = stationary_distribution(np.asarray(opts["q"], float))
    else:
        raise ValidationError("classify2d requires --p or --q")
    verdict = classify_2d_triangular(b, c, d, p)
    payload = verdict.to_dict()
    payload["p"] = [float(v) for v in p]
    _write_json(os.path.join(outdir, "classify.json"), payload)
    return 0, ["classify.json"]


def _cmd_check_triangular(cfg: ExperimentConfig, outdir: str) -> tuple:
    sys_, lin = _linearized(cfg)
    n = cfg.options.get("n")
    if n is None:
        if sys_.split is None:
            raise ValidationError("--n required when the model has no split")
        n = sys_.split[0]
    report = check_triangular_max(lin, int(n), cfg.horizon, cfg.replicates,
                                  seed=cfg.seed)
    _write_json(os.path.join(outdir, "check_triangular.json"), report)
    return (0 if report["passed"] else 3), ["check_triangular.json"]


def _cmd_occupation(cfg: ExperimentConfig, outdir: str) -> tuple:
    sys_ = _build_system(cfg)
    plan = SimulationPlan(horizon=cfg.horizon, sample_dt=cfg.sample_dt,
                          seed=cfg.seed, init_state=_resolve_x0(cfg, sys_),
                          init_mode=cfg.mode0)
    traj = simulate_pdmp(sys_, plan, cfg.integrator())
    burn = cfg.burn_in if cfg.burn_in is not None else 0.0
    bins = int(cfg.options.get("bins", 32))
    grid = None
    if sys_.bounding_box is not None:
        grid = GridSpec(bounds=np.asarray(sys_.bounding_box), bins=bins)
    hist = occupation_measure(traj, grid, burn_in=burn)
    hist.to_csv(os.path.join(outdir, "histogram.csv"))
    payload = {
        "horizon": cfg.horizon,
        "burn_in": burn,
        "bins": bins,
        "total_mass": hist.total_mass(),
        "overflow": [float(v) for v in hist.overflow],
        "mode_marginal": [float(v) for v in hist.mode_marginal()],
    }
    delta = cfg.options.get("face_delta")
    if delta is not None and sys_.split is not None:
        payload["face_delta"] = float(delta)
        payload["face_mass"] = low_norm_fraction(traj, float(delta), burn_in=burn)
    _write_json(os.path.join(outdir, "occupation.json"), payload)
    return 0, ["histogram.csv", "occupation.json"]


def _cmd_extinction(cfg: ExperimentConfig, outdir: str) -> tuple:
    sys_ = _build_system(cfg)
    plan = SimulationPlan(horizon=cfg.horizon, sample_dt=cfg.sample_dt,
                          seed=cfg.seed, init_state=_resolve_x0(cfg, sys_),
                          init_mode=cfg.mode0)
    traj = simulate_pdmp(sys_, plan, cfg.integrator())
    target = cfg.options.get("target")
    rep = extinction_rate(traj, component=cfg.options.get("component", "full"),
                          burn_in=cfg.burn_in,
                          target=None if target is None else float(target))
    _write_json(os.path.join(outdir, "extinction.json"), rep.to_dict())
    code = 3 if rep.passed is False else 0
    return code, ["extinction.json"]


def _cmd_bracket(cfg: ExperimentConfig, outdir: str) -> tuple:
    sys_ = _build_system(cfg)
    if "x" not in cfg.options:
        raise ValidationError("bracket requires --x")
    x = np.asarray(cfg.options["x"], float)
    kind = cfg.options.get("kind", "weak")
    depth = int(cfg.options.get("depth", 3))
    rank = bracket_rank(sys_, x, kind=kind, depth=depth)
    payload = {"x": [float(v) for v in x], "kind": kind, "depth": depth,
               "rank": int(rank), "dim": sys_.dim,
               "full_rank": bool(rank == sys_.dim)}
    _write_json(os.path.join(outdir, "bracket.json"), payload)
    return 0, ["bracket.json"]


def _default_param(model: str | None, base: str):
    """Default value of a model parameter, for sweeps that override one
    component of a tuple that was never set explicitly."""
    import inspect

    from .core import MODEL_REGISTRY
    from .models import LorenzSwitchParams

    for cls in (LorenzSwitchParams, SirsParams):
        try:
            inst = cls()
        except Exception:
            continue
        if (model == "lorenz-switch" and cls is LorenzSwitchParams) or \
                (model == "sirs" and cls is SirsParams):
            if hasattr(inst, base):
                return getattr(inst, base)
    builder = MODEL_REGISTRY.get(model or "")
    if builder is not None:
        sig = inspect.signature(builder)
        par = sig.parameters.get(base)
        if par is not None and par.default is not inspect.Parameter.empty:
            return par.default
    raise ValidationError(f"cannot resolve default for parameter {base!r} of {model!r}")


def _apply_swept(params: dict, name: str, value: float, model: str | None) -> dict:
    out = dict(params)
    if "." in name:
        base, idx_s = name.rsplit(".", 1)
        idx = int(idx_s) - 1
        current = out.get(base)
        if current is None:
            current = _default_param(model, base)
        seq = list(np.atleast_1d(current))
        if not 0 <= idx < len(seq):
            raise ValidationError(f"index {idx_s} out of range for parameter {base}")
        seq[idx] = value
        out[base] = [float(v) for v in seq]
    else:
        out[name] = value
    return out


def _cmd_sweep(cfg: ExperimentConfig, outdir: str) -> tuple:
    sub = cfg.options.get("sub_command")
    if sub not in ("lyapunov", "extinction"):
        raise ValidationError("sweep supports sub-commands: lyapunov, extinction")
    name = cfg.options.get("param")
    grid = cfg.options.get("grid")
    if not name or grid is None:
        raise ValidationError("sweep requires --param and --grid")
    try:
        grid = [float(v) for v in np.atleast_1d(grid) if str(v).strip() != ""]
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad sweep grid: {exc}") from exc
    if len(grid) == 0:
        raise ValidationError("sweep grid is empty")
    rows = []
    for idx, value in enumerate(grid):
        sub_seed = int(rng_for(cfg.seed, idx).integers(2 ** 62))
        row = {"index": idx, "value": value, "seed": sub_seed,
               "status": "ok", "error": "", "r0": "", "lambda_b_plus": "",
               "estimate": "", "std_error": "", "slope": "", "passed": ""}
        try:
            params = _apply_swept(cfg.model_params, name, value, cfg.model)
            if cfg.model == "sirs":
                rep = sirs_r0(SirsParams(**params))
                row["r0"] = rep["r0"]
                row["lambda_b_plus"] = rep["lambda_b_plus"]
            point = ExperimentConfig(**{**cfg.to_dict(),
                                        "command": sub,
                                        "model_params": params,
                                        "seed": sub_seed,
                                        "options": {k: v for k, v in cfg.options.items()
                                                    if k not in ("sub_command", "param", "grid")}})
            sys_ = _build_system(point)
            lin = linearize_at_origin(sys_)
            if sub == "lyapunov":
                est = estimate_top_exponent(lin, None, point.horizon,
                                            point.replicates, seed=sub_seed,
                                            burn_in=point.burn_in)
                row["estimate"] = est.value
                row["std_error"] = est.std_error
            else:
                plan = SimulationPlan(horizon=point.horizon, sample_dt=point.sample_dt,
                                      seed=sub_seed,
                                      init_state=_resolve_x0(point, sys_),
                                      init_mode=point.mode0)
                traj = simulate_pdmp(sys_, plan, point.integrator())
                target = point.options.get("target")
                rep = extinction_rate(traj,
                                      component=point.options.get("component", "full"),
                                      burn_in=point.burn_in,
                                      target=None if target is None else float(target))
                row["slope"] = rep.slope if rep.slope is not None else ""
                row["passed"] = rep.passed if rep.passed is not None else ""
        except Exception as exc:  # record and continue
            row["status"] = "error"
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    cols = ["index", "value", "seed", "status", "error", "r0", "lambda_b_plus",
            "estimate", "std_error", "slope", "passed"]
    with open(os.path.join(outdir, "sweep.csv"), "w", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in cols) + "\n")
    return 0, ["sweep.csv"]


_HANDLERS = {
    "simulate": _cmd_simulate,
    "lyapunov": _cmd_lyapunov,
    "classify2d": _cmd_classify2d,
    "check-triangular": _cmd_check_triangular,
    "occupation": _cmd_occupation,
    "extinction": _cmd_extinction,
    "bracket": _cmd_bracket,
    "sweep": _cmd_sweep,
}


def run(cfg: ExperimentConfig) -> int:
    """Execute one experiment: result files plus manifest.json."""
    if cfg.command not in _HANDLERS:
        raise ValidationError(f"unknown command {cfg.command!r}")
    outdir = cfg.output_dir or "."
    os.makedirs(outdir, exist_ok=True)
    if not os.access(outdir, os.W_OK):
        raise ValidationError(f"output directory {outdir!r} is not writable")
    t0 = time.perf_counter()
    code, outputs = _HANDLERS[cfg.command](cfg, outdir)
    manifest = {
        "schema": 1,
        "command": cfg.command,
        "config": cfg.to_dict(),
        "version": __version__,
        "workers": 1,
        "wall_time_s": time.perf_counter() - t0,
        "outputs": outputs,
        "exit_code": code,
    }
    _write_json(os.path.join(outdir, "manifest.json"), manifest)
    return code


def run_from_manifest(manifest_path: str, output_dir: str | None = None) -> int:
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    cfg = ExperimentConfig(**manifest["config"])
    if output_dir is not None:
        cfg.output_dir = output_dir
    return run(cfg)


# ---------------------------------------------------------------------------
# argument parsing

def _load_config_file(path: str) -> dict:
    if _sys.version_info >= (3, 11):
        import tomllib as toml
    else:
        import tomli as toml
    with open(path, "rb") as fh:
        data = toml.load(fh)
    out = {}
    out.update(data.get("plan", {}))
    out.update(data.get("integrator", {}))
    for key in ("command", "model", "linear_file", "output_dir", "replicates",
                "burn_in"):
        if key in data:
            out[key] = data[key]
    out["model_params"] = data.get("model_params", {})
    out["options"] = data.get("options", {})
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="switchdyn",
                                 description="randomly switched vector fields: "
                                             "simulation and exponent analysis")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, plan=True):
        p.add_argument("--config", help="TOML config file (flags override it)")
        p.add_argument("--model", help="registry key, e.g. lorenz-switch")
        p.add_argument("--linear-file", help="TOML file with a custom linear system")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VAL",
                       help="model parameter override, may repeat")
        p.add_argument("-o", "--output-dir",
                       default=None, help=f"output directory (or ${OUTPUT_ENV_VAR})")
        p.add_argument("--seed", type=int, default=None)
        if plan:
            p.add_argument("--T", dest="horizon", type=float, default=None)
            p.add_argument("--dt", dest="sample_dt", type=float, default=None)
            p.add_argument("--x0", default=None, help="comma-separated initial state")
            p.add_argument("--mode0", type=int, default=None)
            p.add_argument("--burn-in", dest="burn_in", type=float, default=None)
            p.add_argument("--replicates", type=int, default=None)
            p.add_argument("--integrator", dest="method", default=None,
                           choices=["rk4-fixed", "dormand-prince-adaptive"])
            p.add_argument("--step", type=float, default=None)
            p.add_argument("--abs-tol", dest="abs_tol", type=float, default=None)
            p.add_argument("--rel-tol", dest="rel_tol", type=float, default=None)

    p = sub.add_parser("simulate", help="simulate one trajectory")
    common(p)

    p = sub.add_parser("lyapunov", help="estimate a top/average growth rate")
    common(p)
    p.add_argument("--block", choices=["full", "B", "D"], default=None)
    p.add_argument("--n", type=int, default=None, help="block split index")
    p.add_argument("--method", dest="est_method", default=None,
                   choices=["norm-growth", "theta-average", "min-scan"])
    p.add_argument("--n-starts", type=int, default=None)

    p = sub.add_parser("classify2d", help="classify a 2-d triangular family")
    common(p, plan=False)
    p.add_argument("--b", required=True)
    p.add_argument("--c", required=True)
    p.add_argument("--d", required=True)
    p.add_argument("--q", default=None, help="rate matrix, JSON")
    p.add_argument("--p", default=None, help="stationary law, comma-separated")

    p = sub.add_parser("check-triangular", help="full vs block top exponents")
    common(p)
    p.add_argument("--n", type=int, default=None)

    p = sub.add_parser("occupation", help="empirical occupation histogram")
    common(p)
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--face-delta", dest="face_delta", type=float, default=None)

    p = sub.add_parser("extinction", help="log-norm decay slope")
    common(p)
    p.add_argument("--component", choices=["full", "first-n"], default=None)
    p.add_argument("--target", type=float, default=None)

    p = sub.add_parser("bracket", help="Lie bracket rank at a point")
    common(p, plan=False)
    p.add_argument("--x", required=True, help="comma-separated point")
    p.add_argument("--kind", choices=["weak", "strong"], default=None)
    p.add_argument("--depth", type=int, default=None)

    p = sub.add_parser("sweep", help="run a sub-command over a parameter grid")
    common(p)
    p.add_argument("--sub-command", dest="sub_command", required=True,
                   choices=["lyapunov", "extinction"])
    p.add_argument("--param", required=True,
                   help="model parameter, 1-based component as name.k")
    p.add_argument("--grid", required=True, help="comma-separated values")
    p.add_argument("--component", choices=["full", "first-n"], default=None)
    p.add_argument("--target", type=float, default=None)

    p = sub.add_parser("rerun", help="re-execute an experiment from its manifest")
    p.add_argument("manifest")
    p.add_argument("-o", "--output-dir", default=None)
    return ap


_OPTION_KEYS = {
    "lyapunov": [("block", "block"), ("n", "n"), ("est_method", "method"),
                 ("n_starts", "n_starts")],
    "classify2d": [("b", "b"), ("c", "c"), ("d", "d"), ("q", "q"), ("p", "p")],
    "check-triangular": [("n", "n")],
    "occupation": [("bins", "bins"), ("face_delta", "face_delta")],
    "extinction": [("component", "component"), ("target", "target")],
    "bracket": [("x", "x"), ("kind", "kind"), ("depth", "depth")],
    "sweep": [("sub_command", "sub_command"), ("param", "param"), ("grid", "grid"),
              ("component", "component"), ("target", "target")],
}

_VECTOR_OPTIONS = {"b", "c", "d", "q", "p", "x", "grid", "theta0"}


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    base = {}
    if getattr(args, "config", None):
        base = _load_config_file(args.config)
    merged = ExperimentConfig(command=args.command)
    for key in ("model", "linear_file", "output_dir", "horizon", "sample_dt",
                "seed", "mode0", "replicates", "burn_in", "method", "step",
                "abs_tol", "rel_tol"):
        if key in base and base[key] is not None:
            setattr(merged, key, base[key])
        flag = getattr(args, key, None)
        if flag is not None:
            setattr(merged, key, flag)
    if base.get("x0") is not None:
        merged.x0 = [float(v) for v in np.atleast_1d(base["x0"])]
    if getattr(args, "x0", None) is not None:
        merged.x0 = _parse_vector(args.x0)
    if merged.output_dir == "." and os.environ.get(OUTPUT_ENV_VAR):
        merged.output_dir = os.environ[OUTPUT_ENV_VAR]
    merged.model_params = dict(base.get("model_params", {}))
    for item in getattr(args, "set", []) or []:
        if "=" not in item:
            raise ValidationError(f"--set expects KEY=VALUE, got {item!r}")
        key, val = item.split("=", 1)
        merged.model_params[key.strip()] = _parse_value(val.strip())
    merged.options = dict(base.get("options", {}))
    for attr, opt in _OPTION_KEYS.get(args.command, []):
        val = getattr(args, attr, None)
        if val is not None:
            if opt in _VECTOR_OPTIONS and isinstance(val, str):
                val = _parse_value(val)
                if isinstance(val, str) and "," in val:
                    val = [float(v) for v in val.split(",")]
            merged.options[opt] = val
    return merged


def _normalize_argv(argv) -> list:
    """Join option values that start with a minus sign (e.g. --d -1,-1) so
    argparse does not mistake them for flags."""
    import re

    out = []
    skip = False
    for i, tok in enumerate(argv):
        if skip:
            skip = False
            continue
        nxt = argv[i + 1] if i + 1 < len(argv) else None
        if (tok.startswith("--") and "=" not in tok and nxt is not None
                and re.match(r"^-[0-9.]", nxt)):
            out.append(f"{tok}={nxt}")
            skip = True
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    if argv is None:
        argv = _sys.argv[1:]
    args = build_parser().parse_args(_normalize_argv(list(argv)))
    try:
        if args.command == "rerun":
            return run_from_manifest(args.manifest, args.output_dir)
        return run(config_from_args(args))
    except ValidationError as exc:
        print(f"switchdyn: validation error: {exc}", file=_sys.stderr)
        return 1
    except NumericError as exc:
        print(f"switchdyn: numeric failure: {exc}", file=_sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
