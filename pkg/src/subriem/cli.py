"""Command line interface: ``subriem <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import abnormal, chaplygin, geometry, hamiltonian, schouten
from .errors import ConfigError, SubRiemError
from .fieldspec import compile_jet, parse
from .integrate import Trajectory
from .scenarios import NAMES, Scenario, load, validate

DEFAULTS = {
    "T": 1.0,
    "step": 1e-3,
    "tol": geometry.DEFAULT_RANK_TOL,
    "kernel_tol": abnormal.KERNEL_TOL,
}

# report thresholds, scaled by SUBRIEM_TOL_OVERRIDE
CHECKS = {
    "energy_drift": 1e-8,
    "speed_drift": 1e-8,
    "horizontality": 1e-8,
    "pmp_residual": 1e-10,
    "eq3_residual": 1e-9,
    "connection_residual": 1e-8,
    "force_work": 1e-10,
    "norm_drift": 1e-8,
}

CONFIG_KEYS = (
    "command", "scenario", "custom", "mode", "q0", "v0", "lambda", "k0", "charge", "controls",
    "curve", "w", "a", "point", "T", "step", "tol", "kernel_tol", "csv", "report", "sweep",
)


def tol_scale() -> float:
    raw = os.environ.get("SUBRIEM_TOL_OVERRIDE", "1")
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"SUBRIEM_TOL_OVERRIDE must be a number, got {raw!r}") from None
    if not value > 0:
        raise ConfigError("SUBRIEM_TOL_OVERRIDE must be positive")
    return value


# ---------------------------------------------------------------------------
# config handling


def _vector(value, name: str, size: int | None = None) -> np.ndarray | None:
    if value is None:
        return None
    if isinstance(value, str):
        try:
            value = [float(v) for v in value.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"{name}: expected comma-separated numbers, got {value!r}") from None
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if size is not None and arr.shape != (size,):
        raise ConfigError(f"{name}: expected {size} values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name}: values must be finite")
    return arr


def _expr_list(value) -> list[str] | None:
    if value is None:
        return None
    if isinstance(value, str):
        return [v.strip() for v in value.split(",")]
    return [str(v) for v in value]


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(cfg) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return cfg


def merge(cfg: dict, args: argparse.Namespace) -> dict:
    """Config values overridden by flags given on the command line."""
    out = dict(cfg)
    for key in CONFIG_KEYS:
        attr = key.replace("-", "_")
        if key == "lambda":
            attr = "lam"
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = value
    for key, value in DEFAULTS.items():
        out.setdefault(key, value)
    for key in ("T", "step", "tol", "kernel_tol"):
        try:
            out[key] = float(out[key])
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be a number") from None
        if not out[key] > 0:
            raise ConfigError(f"{key} must be positive")
    return out


def _custom_scenario(block: dict) -> Scenario:
    if not isinstance(block, dict):
        raise ConfigError("custom must be an object")
    structure = bundle = None
    if "frame" in block:
        frame = block["frame"]
        rigging = block.get("rigging", [])
        structure = geometry.SRStructure(frame, rigging, block.get("gD"), name=block.get("name", "custom"))
    if "bundle" in block:
        b = block["bundle"]
        gname = b.get("group", "R1")
        if gname not in chaplygin.GROUPS:
            raise ConfigError(f"unknown group {gname!r}; choose from {', '.join(chaplygin.GROUPS)}")
        group = chaplygin.GROUPS[gname]()
        if "g_alg" in b:
            group = chaplygin.MatrixLieGroup(group.name, group.basis, b["g_alg"], group.kind)
        bundle = chaplygin.ChaplyginBundle(group, b["potential"], b.get("gM"), name=block.get("name", "custom"))
        if structure is None and group.has_chart:
            structure = chaplygin.chart_structure(bundle)
    if structure is None and bundle is None:
        raise ConfigError("custom scenario needs a frame or a bundle")
    return validate(Scenario(block.get("name", "custom"), "custom scenario", structure, bundle))


def scenario_from(cfg: dict) -> Scenario:
    if cfg.get("custom") is not None:
        return _custom_scenario(cfg["custom"])
    name = cfg.get("scenario")
    if name is None:
        raise ConfigError("a scenario name or a custom block is required")
    return load(name)


# ---------------------------------------------------------------------------
# output


def write_csv(path: str | None, header: list[str], table: np.ndarray) -> None:
    if path is None:
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in table:
            w.writerow([format(float(v), ".17g") for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def checks(diagnostics: dict) -> dict:
    scale = tol_scale()
    out = {}
    for key, limit in CHECKS.items():
        if key in diagnostics:
            out[key] = bool(diagnostics[key] < limit * scale)
    return out


def emit(cfg: dict, solver: str, result: dict, start: float) -> dict:
    report = {
        "solver": solver,
        **result,
        "checks": checks(result.get("diagnostics", {})),
        "wall_time": time.perf_counter() - start,
        "config": {k: cfg[k] for k in sorted(cfg) if k in CONFIG_KEYS},
    }
    report = _jsonable(report)
    text = json.dumps(report, indent=2, sort_keys=True)
    if cfg.get("report"):
        Path(cfg["report"]).parent.mkdir(parents=True, exist_ok=True)
        Path(cfg["report"]).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return report


def _emit_trajectory(cfg: dict, tr: Trajectory) -> None:
    write_csv(cfg.get("csv"), *tr.columns())


# ---------------------------------------------------------------------------
# commands


def _initial(cfg, S):
    q0 = _vector(cfg.get("q0"), "q0", S.n)
    return np.zeros(S.n) if q0 is None else q0


def _require(cfg, key):
    if cfg.get(key) is None:
        raise ConfigError(f"missing required value {key!r}")
    return cfg[key]


def _parse_sweep(text: str):
    try:
        name, rng = text.split("=")
        a, b, step = (float(v) for v in rng.split(":"))
    except ValueError:
        raise ConfigError(f"sweep must look like lambda=start:stop:step, got {text!r}") from None
    if name != "lambda" or step <= 0 or b < a:
        raise ConfigError("only increasing lambda sweeps are supported")
    count = int(np.floor((b - a) / step + 1e-9)) + 1
    return [a + i * step for i in range(count)]


def cmd_geodesic(cfg: dict) -> dict:
    sc = scenario_from(cfg)
    S = sc.require_structure()
    q0 = _initial(cfg, S)
    mode = cfg.get("mode") or "normal"
    T, h = cfg["T"], cfg["step"]
    if mode == "normal":
        v0 = _vector(_require(cfg, "v0"), "v0", S.m)
        if cfg.get("sweep"):
            values = _parse_sweep(cfg["sweep"])

            def one(lam):
                return hamiltonian.normal_geodesic(S, q0, v0, np.full(S.n - S.m, lam), T, h)

            with ThreadPoolExecutor() as pool:
                runs = list(pool.map(one, values))
            if cfg.get("csv"):
                stem = Path(cfg["csv"])
                for i, tr in enumerate(runs):
                    write_csv(str(stem.with_name(f"{stem.stem}_{i}{stem.suffix}")), *tr.columns())
            return {"sweep": [{"lambda": lam, "final": tr.final, "diagnostics": tr.diagnostics}
                              for lam, tr in zip(values, runs)]}
        lam = _vector(cfg.get("lambda"), "lambda", S.n - S.m)
        tr = hamiltonian.normal_geodesic(S, q0, v0, lam, T, h)
    elif mode == "straightest":
        v0 = _vector(_require(cfg, "v0"), "v0", S.m)
        tr = schouten.s_geodesic(S, q0, v0, T, h)
    elif mode == "control":
        exprs = _expr_list(_require(cfg, "controls"))
        if len(exprs) != S.m:
            raise ConfigError(f"controls: expected {S.m} expressions in t")
        f = compile_jet([parse(e, 1, {"t": 0}) for e in exprs], 1)
        tr = hamiltonian.horizontal_curve_from_control(S, q0, lambda t: f([t])[0], T, h)
    else:
        raise ConfigError(f"unknown geodesic mode {mode!r}")
    _emit_trajectory(cfg, tr)
    return {"mode": mode, "rows": len(tr), "final": tr.final, "diagnostics": tr.diagnostics}


def cmd_abnormal(cfg: dict) -> dict:
    S = scenario_from(cfg).require_structure()
    q0 = _initial(cfg, S)
    k0 = _vector(cfg.get("k0"), "k0", S.n - S.m)
    k0 = np.ones(S.n - S.m) if k0 is None else k0
    tol = cfg["kernel_tol"] * tol_scale()
    tr = abnormal.abnormal_curve(S, abnormal.CodistState(q0, k0), cfg["T"], cfg["step"], tol=tol)
    _emit_trajectory(cfg, Trajectory(tr.times, tr.q, k=tr.k))
    return {"status": tr.status, "rows": len(tr), "final": tr.final, "diagnostics": tr.diagnostics}


def cmd_flag(cfg: dict) -> dict:
    S = scenario_from(cfg).require_structure()
    point = _vector(cfg.get("point", cfg.get("q0")), "point", S.n)
    point = np.zeros(S.n) if point is None else point
    tol = cfg["tol"] * tol_scale()
    prof = geometry.growth_vector(S, point, tol=tol)
    out = {"growth": prof.growth, "depth": prof.depth, "bracket_generating": prof.bracket_generating}
    try:
        sym = geometry.symbol_algebra(S, point, tol=tol)
    except SubRiemError as exc:
        out["symbol"] = {"regular": False, "reason": str(exc)}
    else:
        out["symbol"] = {
            "regular": True,
            "bracket_table": sym.bracket_table,
            "grade_residual": sym.grade_residual,
            "generation_residual": sym.generation_residual,
        }
    return out


def _bundle_start(cfg, B):
    x0 = _vector(cfg.get("q0"), "q0", B.base_dim)
    return np.zeros(B.base_dim) if x0 is None else x0


def cmd_chaplygin(cfg: dict) -> dict:
    sc = scenario_from(cfg)
    B = sc.require_bundle()
    mode = cfg.get("mode") or "s-geodesic"
    T, h = cfg["T"], cfg["step"]
    G = B.group
    if mode in ("lift", "s-geodesic"):
        x0 = _bundle_start(cfg, B)
        if mode == "lift":
            exprs = _expr_list(_require(cfg, "curve"))
            if len(exprs) != B.base_dim:
                raise ConfigError(f"curve: expected {B.base_dim} expressions in t")
            f = compile_jet([parse(e, 1, {"t": 0}) for e in exprs], 1)
            x = lambda t: np.array(f([t])[0])
            xdot = lambda t: np.array(f([t])[1])[:, 0]
            curve = chaplygin.horizontal_lift(B, x, xdot, G.identity(), T, h)
        else:
            v0 = _vector(_require(cfg, "v0"), "v0", B.base_dim)
            curve = chaplygin.chaplygin_s_geodesic(B, x0, v0, G.identity(), T, h)
        tr = curve.to_trajectory(G)
        _emit_trajectory(cfg, tr)
        return {"mode": mode, "rows": len(tr), "final": tr.final, "diagnostics": curve.diagnostics}
    if mode == "wong":
        x0 = _bundle_start(cfg, B)
        v0 = _vector(_require(cfg, "v0"), "v0", B.base_dim)
        charge = _vector(cfg.get("charge"), "charge", G.dim)
        charge = np.zeros(G.dim) if charge is None else charge
        tr = chaplygin.wong_dynamics(B, x0, v0, charge, T, h)
        _emit_trajectory(cfg, Trajectory(tr.times, tr.q, v=tr.v))
        return {"mode": mode, "rows": len(tr), "final": tr.final, "diagnostics": tr.diagnostics}
    if mode == "factorize":
        n = B.base_dim + G.dim
        q0 = _vector(cfg.get("q0"), "q0", n)
        q0 = np.zeros(n) if q0 is None else q0
        w = _vector(_require(cfg, "w"), "w", n)
        a = _vector(_require(cfg, "a"), "a", G.dim)
        dev, prod, sr = chaplygin.factorization_check(B, q0, w, a, T, h)
        _emit_trajectory(cfg, prod)
        return {"mode": mode, "deviation": dev, "diagnostics": sr.diagnostics}
    raise ConfigError(f"unknown chaplygin mode {mode!r}")


def cmd_compare(cfg: dict) -> dict:
    S = scenario_from(cfg).require_structure()
    q0 = _initial(cfg, S)
    v0 = _vector(_require(cfg, "v0"), "v0", S.m)
    T, h = cfg["T"], cfg["step"]
    with ThreadPoolExecutor(max_workers=2) as pool:
        fs = pool.submit(schouten.s_geodesic, S, q0, v0, T, h)
        fh = pool.submit(hamiltonian.normal_geodesic, S, q0, v0, None, T, h)
        ts, th = fs.result(), fh.result()
    gap = np.linalg.norm(ts.q - th.q, axis=1)
    write_csv(cfg.get("csv"), ["t", "gap"], np.column_stack([ts.times, gap]))
    return {"deviation": float(np.max(gap)), "diagnostics": {"speed_drift": ts.diagnostics["speed_drift"],
                                                             "energy_drift": th.diagnostics["energy_drift"]}}


def cmd_validate(cfg: dict) -> dict:
    sc = scenario_from(cfg)
    out: dict = {"scenario": sc.name, "valid": True}
    if sc.structure is not None:
        S = sc.structure
        pts = [np.zeros(S.n)]
        out["structure"] = {
            "n": S.n,
            "m": S.m,
            "condition_at_origin": S.validate(pts),
            "growth_at_origin": geometry.growth_vector(S, np.zeros(S.n)).growth,
        }
    if sc.bundle is not None:
        G = sc.bundle.group
        out["group"] = {
            "name": G.name,
            "dim": G.dim,
            "abelian": G.is_abelian,
            "ad_invariant": G.is_ad_invariant,
            "jacobi_residual": G.jacobi_residual(),
        }
    return out


COMMANDS = {
    "geodesic": cmd_geodesic,
    "abnormal": cmd_abnormal,
    "flag": cmd_flag,
    "chaplygin": cmd_chaplygin,
    "compare": cmd_compare,
    "validate": cmd_validate,
}


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its keys")
    common.add_argument("--scenario", help=f"built-in scenario ({', '.join(NAMES)})")
    common.add_argument("--T", type=float, help="time horizon")
    common.add_argument("--step", type=float, help="integration step")
    common.add_argument("--csv", help="trajectory CSV path")
    common.add_argument("--report", help="report JSON path (default: stdout)")
    common.add_argument("--q0", help="initial point, comma separated")

    p = argparse.ArgumentParser(prog="subriem", description="Sub-Riemannian geodesic toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("geodesic", parents=[common], help="normal, straightest or control-driven curves")
    g.add_argument("--mode", choices=["normal", "straightest", "control"])
    g.add_argument("--v0", help="initial frame coefficients")
    g.add_argument("--lambda", dest="lam", help="initial annihilator covector")
    g.add_argument("--controls", help="control expressions in t, comma separated")
    g.add_argument("--sweep", help="lambda=start:stop:step")

    a = sub.add_parser("abnormal", parents=[common], help="characteristic curves of the annihilator")
    a.add_argument("--k0", help="initial fibre coordinates")
    a.add_argument("--kernel-tol", dest="kernel_tol", type=float)

    f = sub.add_parser("flag", parents=[common], help="growth vector and symbol algebra")
    f.add_argument("--point", help="evaluation point")
    f.add_argument("--tol", type=float, help="relative rank tolerance")

    c = sub.add_parser("chaplygin", parents=[common], help="bundle solvers")
    c.add_argument("--mode", choices=["lift", "wong", "factorize", "s-geodesic"])
    c.add_argument("--v0", help="base velocity")
    c.add_argument("--charge", help="Wong charge")
    c.add_argument("--curve", help="base curve expressions in t, comma separated")
    c.add_argument("--w", help="initial velocity on the total space (factorize)")
    c.add_argument("--a", help="algebra element with conn(w) = -a (factorize)")

    m = sub.add_parser("compare", parents=[common], help="straightest versus shortest")
    m.add_argument("--v0", help="initial frame coefficients")

    sub.add_parser("validate", parents=[common], help="load and validate a scenario")

    r = sub.add_parser("run", help="run the command named in a config file")
    r.add_argument("--config", required=True)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.perf_counter()
    try:
        cfg = load_config(args.config)
        command = args.command
        if command == "run":
            command = cfg.get("command")
            if command not in COMMANDS:
                raise ConfigError(f"config must name a command ({', '.join(COMMANDS)})")
        cfg = merge(cfg, args)
        cfg["command"] = command
        result = COMMANDS[command](cfg)
        emit(cfg, command, result, start)
    except SubRiemError as exc:
        return _fail(exc.category, str(exc), exc.exit_code)
    except (ValueError, KeyError, TypeError) as exc:
        return _fail(ConfigError.category, f"{type(exc).__name__}: {exc}", ConfigError.exit_code)
    return 0


def _fail(category: str, message: str, code: int) -> int:
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
