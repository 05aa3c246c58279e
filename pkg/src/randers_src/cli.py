"""``randers-src`` command-line entry point.

A job is a JSON file::

    {"model": {"name": "kerr", "params": {"m": 1.0, "a": 0.5}},
     "command": "timeconvexity",
     "command_params": {"boundary": "sphere", "boundary_params": {"radius": 50}},
     "output_dir": "out", "seed": 0}

Exit status: 0 on success, 2 when ``--expect-convex`` is given and a
convexity verdict is ``violated``, 1 on any error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import asymptotics, connector, convexity, models
from .core_metric import reverse_metric
from .errors import ConfigError, RandersError
from .geodesic import integrate_pregeodesic, lift_lightlike
from .io import write_json, write_trajectory_csv

COMMANDS = ("fermat", "geodesic", "convexity", "timeconvexity", "scan-sphere", "decay", "connect", "lens")

_vec = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 4}
_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int = {"type": "integer", "minimum": 1}
_boundary = {"boundary": {"type": "string"}, "boundary_params": {"type": "object"}}

PARAM_SCHEMAS = {
    "fermat": {"points": {"type": "array", "items": _vec, "minItems": 1},
               "vectors": {"type": "array", "items": _vec}},
    "geodesic": {"x0": _vec, "v0": _vec, "max_s": _pos, "t_p": _num,
                 "lift": {"enum": ["none", "lightlike"]}, "slice": {"enum": ["none", "equatorial"]}},
    "convexity": dict(_boundary, density=_int, n_dirs=_int, kind={"enum": ["light", "randers"]},
                      random_samples={"type": "integer", "minimum": 0}),
    "timeconvexity": dict(_boundary, density=_int, n_dirs=_int, random_samples={"type": "integer", "minimum": 0}),
    "scan-sphere": {"radii": {"type": "array", "items": _pos, "minItems": 1}, "density": _int, "n_dirs": _int},
    "decay": {"r_min": _pos, "r_max": _pos, "per_decade": _int, "n_dirs": _int, "classify": {"type": "boolean"}},
    "connect": dict(_boundary, p=_vec, q=_vec, mode={"enum": ["lightlike", "timelike"]}, ell=_pos, t_p=_num,
                    orientation={"enum": ["future", "past"]}, slice={"enum": ["none", "equatorial"]},
                    direction_grid=_int, max_solutions=_int, winding_range={"type": "integer", "minimum": 0}),
    "lens": dict(_boundary, p=_vec, q=_vec, t_p=_num, winding_range={"type": "integer", "minimum": 0},
                 slice={"enum": ["none", "equatorial"]}, direction_grid=_int),
}
REQUIRED_PARAMS = {"geodesic": ["x0", "v0"], "connect": ["p", "q"], "lens": ["p", "q"], "fermat": ["points"]}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "command"],
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {"name": {"enum": list(models.MODEL_NAMES)}, "params": {"type": "object"}},
        },
        "command": {"enum": list(COMMANDS)},
        "command_params": {"type": "object"},
        "output_dir": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
    },
    "allOf": [
        {"if": {"properties": {"command": {"const": c}}},
         "then": {"properties": {"command_params": {"type": "object", "additionalProperties": False,
                                                     "properties": props,
                                                     "required": REQUIRED_PARAMS.get(c, [])}}}}
        for c, props in PARAM_SCHEMAS.items()
    ],
}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["command", "model", "seed", "result"],
    "additionalProperties": False,
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "model": {"type": "object"},
        "seed": {"type": "integer"},
        "result": {"type": ["object", "array"]},
    },
}


def _locate(text, path):
    """Line and column of the JSON value at ``path`` (best effort)."""
    pos = 0
    for key in path:
        if isinstance(key, str):
            i = text.find(json.dumps(key), pos)
            if i < 0:
                break
            pos = i
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


def load_config(path):
    """Parse and validate a job file; raises ConfigError with line/column."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc.msg}", exc.lineno, exc.colno) from exc
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path_ = list(err.absolute_path)
        if err.validator == "additionalProperties":
            extra = [k for k in err.instance if k not in err.schema.get("properties", {})]
            path_ = path_ + extra[:1]
        line, col = _locate(text, path_)
        where = "/".join(str(p) for p in path_) or "<root>"
        raise ConfigError(f"schema error at {where}: {err.message}", line, col)
    return cfg


def thread_cap():
    """Worker cap from ``RANDERS_SRC_THREADS`` (default: CPU count)."""
    raw = os.environ.get("RANDERS_SRC_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"RANDERS_SRC_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"RANDERS_SRC_THREADS must be a positive integer, got {raw!r}")
    return n


# ---------------------------------------------------------------- commands


def _model(cfg, params):
    M = models.build(cfg["model"])
    if params.get("slice", "none") == "equatorial":
        M = models.equatorial(M)
    return M


def _boundary(M, params, default):
    kind = params.get("boundary", default)
    return M.boundary(kind, params.get("density", 1), **params.get("boundary_params", {}))


def _add_random_samples(H, sampler, n, rng):
    """Append ``n`` probes interpolated between neighbouring probes of the sampler.

    Interpolation keeps seeds inside the chart; directions keep their
    interpolated length so every probe still reaches the boundary.
    """
    if not n:
        return sampler
    seeds, dirs = np.broadcast_arrays(np.atleast_2d(sampler.seeds), np.atleast_2d(sampler.directions))
    i = rng.integers(0, seeds.shape[0], n)
    j = (i + 1) % seeds.shape[0]
    lam = rng.uniform(size=(n, 1))
    new_seeds = (1 - lam) * seeds[i] + lam * seeds[j]
    new_dirs = (1 - lam) * dirs[i] + lam * dirs[j]
    size = (1 - lam) * np.linalg.norm(dirs[i], axis=1, keepdims=True) + lam * np.linalg.norm(dirs[j], axis=1,
                                                                                               keepdims=True)
    new_dirs *= size / np.maximum(np.linalg.norm(new_dirs, axis=1, keepdims=True), 1e-300)
    return convexity.RadialProbes(np.vstack([seeds, new_seeds]), np.vstack([dirs, new_dirs]),
                                  sampler.s_max, sampler.n_bracket)


def cmd_fermat(cfg, params, out, rng):
    M = _model(cfg, params)
    F = M.randers
    X = np.asarray(params["points"], dtype=float)
    res = {"points": []}
    Y = np.asarray(params.get("vectors", []), dtype=float).reshape(-1, X.shape[1])
    for i, x in enumerate(X):
        entry = {"x": x, "h": F.h(x), "omega": F.omega(x), "norm_omega": float(F.norm_omega(x))}
        if i < Y.shape[0]:
            entry["y"] = Y[i]
            entry["F"] = float(F(x, Y[i]))
            entry["F_reverse"] = float(reverse_metric(F)(x, Y[i]))
        res["points"].append(entry)
    return res, 0, f"fermat: {X.shape[0]} point(s) evaluated"


def cmd_geodesic(cfg, params, out, rng):
    M = _model(cfg, params)
    F = M.randers
    traj = integrate_pregeodesic(F, params["x0"], params["v0"], params.get("max_s", 10.0))
    lift = None
    res = {"exit_flag": traj.exit_flag, "randers_length": traj.randers_length,
           "reverse_length": traj.reverse_length, "steps": int(traj.s.size),
           "speed_drift": traj.speed_drift(F), "endpoint": traj.endpoint}
    if params.get("lift", "none") == "lightlike":
        lift = lift_lightlike(F, traj, params.get("t_p", 0.0))
        res.update(arrival_time=lift.arrival_time, lift_residual=lift.max_residual,
                   conserved_drift=lift.conserved_drift)
    csv = write_trajectory_csv(out / "trajectory.csv", traj, lift)
    res["csv_path"] = csv.name
    return res, 0, f"geodesic: {traj.exit_flag}, length {traj.randers_length:.12g}"


def _convexity_result(rep, expect):
    verdict = rep.classification
    code = 2 if (expect and verdict == "violated") else 0
    w = rep.worst_witness
    return rep.to_dict(), code, f"{rep.kind}-convexity: {verdict} (worst margin {w['margin']:.6g} at x={w['x']})"


def cmd_convexity(cfg, params, out, rng, expect=False):
    M = _model(cfg, params)
    H, sampler = _boundary(M, params, "sphere")
    sampler = _add_random_samples(H, sampler, params.get("random_samples", 0), rng)
    n_dirs = params.get("n_dirs", 64)
    if params.get("kind", "light") == "light" and M.splitting is not None:
        rep = convexity.check_light_convexity(M.splitting, H, sampler, n_dirs=n_dirs)
    else:
        rep = convexity.check_randers_convexity(M.randers, H, sampler, n_dirs=n_dirs, kind="randers")
    return _convexity_result(rep, expect)


def cmd_timeconvexity(cfg, params, out, rng, expect=False):
    M = _model(cfg, params)
    if M.splitting is None:
        raise ConfigError("timeconvexity needs a model with stationary data")
    H, sampler = _boundary(M, params, "sphere")
    sampler = _add_random_samples(H, sampler, params.get("random_samples", 0), rng)
    rep = convexity.check_time_convexity(M.splitting, H, sampler, n_dirs=params.get("n_dirs", 64))
    return _convexity_result(rep, expect)


def cmd_scan_sphere(cfg, params, out, rng, expect=False):
    M = _model(cfg, params)
    rows = []
    code = 0
    for R in params.get("radii", [10.0, 20.0, 50.0]):
        H, sampler = M.boundary("sphere", params.get("density", 1), radius=R)
        light = convexity.check_light_convexity(M.splitting, H, sampler, n_dirs=params.get("n_dirs", 32))
        time = convexity.check_time_convexity(M.splitting, H, sampler, n_dirs=params.get("n_dirs", 32))
        rows.append({"radius": R, "light": light.classification, "time": time.classification,
                     "light_worst": light.worst_witness, "time_worst": time.worst_witness})
        if expect and "violated" in (light.classification, time.classification):
            code = 2
    summary = ", ".join(f"r={r['radius']:g}: {r['light']}/{r['time']}" for r in rows)
    return {"spheres": rows}, code, f"scan-sphere (light/time): {summary}"


def cmd_decay(cfg, params, out, rng):
    M = _model(cfg, params)
    spec = asymptotics.end_spec_for(M, r_min=params.get("r_min", 100.0), r_max=params.get("r_max", 1e4),
                                    per_decade=params.get("per_decade", 32), n_dirs=params.get("n_dirs", 8))
    if params.get("classify", True) and M.splitting is not None:
        cls = asymptotics.classify_large_spheres(M.splitting, spec)
        res = cls.to_dict()
        line = f"decay: light {cls.light_verdict}, time {cls.time_verdict}, C {cls.C_sign}"
    else:
        flat = asymptotics.verify_flatness(M.splitting or M.randers, spec)
        res = flat.to_dict()
        line = f"decay: conformally flat {flat.is_conformally_flat}, flat {flat.is_flat}"
    table = "\n".join(f"  {f['quantity']:<8} exponent {f['exponent']!s:<22} residual {f['residual']:.3g}"
                      for f in res["fits"])
    return res, 0, line + "\n" + table


def _solutions_index(sols, out, product=False):
    index = []
    for i, s in enumerate(sols):
        csv = write_trajectory_csv(out / f"solution_{i:03d}.csv", s.trajectory, s.lift, product=product)
        index.append({"winding": s.homotopy_tag, "length": s.randers_length, "arrival_time": s.arrival_time,
                      "confined": s.confined, "csv_path": csv.name})
    return index


def cmd_connect(cfg, params, out, rng):
    M = _model(cfg, params)
    H = _boundary(M, params, "sphere")[0] if "boundary" in params else None
    q = connector.ConnectionQuery(p=params["p"], q=params["q"], domain=H, mode=params.get("mode", "lightlike"),
                                  ell=params.get("ell"), t_p=params.get("t_p", 0.0),
                                  orientation=params.get("orientation", "future"),
                                  direction_grid=params.get("direction_grid"),
                                  max_solutions=params.get("max_solutions", 10),
                                  winding_range=params.get("winding_range", 0))
    if q.mode == "timelike":
        sols = connector.timelike_connect(M.splitting, q, F=M.randers)
        index = _solutions_index(sols, out, product=True)
    else:
        R = M.randers if q.orientation == "future" else reverse_metric(M.randers)
        sols = connector.shoot_connect(R, q)
        if M.splitting is not None:
            for s in sols:
                s.lift = lift_lightlike(M.randers, s.trajectory, q.t_p, q.orientation)
                s.arrival_time = s.lift.arrival_time
        index = _solutions_index(sols, out)
    return {"solutions": index}, 0, f"connect: {len(index)} solution(s), shortest length {index[0]['length']:.12g}"


def cmd_lens(cfg, params, out, rng):
    M = _model(cfg, params)
    H = _boundary(M, params, "annulus" if "annulus" in M.boundaries else "sphere")[0]
    K = params.get("winding_range", 2)
    q = connector.ConnectionQuery(p=params["p"], q=params["q"], domain=H, t_p=params.get("t_p", 0.0),
                                  direction_grid=params.get("direction_grid"))
    rep = connector.lens_census(M.randers, q, winding_range=K)
    index = _solutions_index(rep.solutions, out)
    res = dict(rep.to_dict(), solutions=index)
    return res, 0, f"lens: {len(index)} confined solution(s) over windings -{K}..{K}"


HANDLERS = {
    "fermat": cmd_fermat, "geodesic": cmd_geodesic, "convexity": cmd_convexity,
    "timeconvexity": cmd_timeconvexity, "scan-sphere": cmd_scan_sphere, "decay": cmd_decay,
    "connect": cmd_connect, "lens": cmd_lens,
}
CONVEXITY_COMMANDS = ("convexity", "timeconvexity", "scan-sphere")


def run(cfg, out_dir=None, seed=None, expect_convex=False, verbose=False, stream=None):
    """Execute a validated job; returns the exit code."""
    stream = stream or sys.stdout
    command = cfg["command"]
    params = cfg.get("command_params", {})
    out = Path(out_dir or cfg.get("output_dir", "randers_out"))
    seed = seed if seed is not None else cfg.get("seed", 0)
    rng = np.random.default_rng(seed)
    thread_cap()
    out.mkdir(parents=True, exist_ok=True)
    handler = HANDLERS[command]
    kwargs = {"expect": expect_convex} if command in CONVEXITY_COMMANDS else {}
    result, code, line = handler(cfg, params, out, rng, **kwargs)
    report = {"command": command, "model": cfg["model"], "seed": int(seed), "result": result}
    path = write_json(out / f"{command}.json", report)
    print(line, file=stream)
    if verbose:
        print(f"report written to {path}", file=stream)
    return code


def main(argv=None):
    ap = argparse.ArgumentParser(prog="randers-src", description=__doc__.split("\n")[0])
    ap.add_argument("--config", required=True, help="JSON job file")
    ap.add_argument("--expect-convex", action="store_true",
                    help="exit with status 2 when a convexity verdict is 'violated'")
    ap.add_argument("--out", help="output directory (overrides output_dir)")
    ap.add_argument("--seed", type=int, help="sampling seed (overrides seed)")
    ap.add_argument("--verbose", action="store_true")
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return run(cfg, args.out, args.seed, args.expect_convex, args.verbose)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except RandersError as exc:
        name = cfg["command"] if "cfg" in locals() else "load"
        print(f"{name} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
