"""Batch front door: configuration, orchestration, and report emission.

Every command resolves its settings from built-in defaults, then an optional
JSON config file (--config), then explicit flags, in that order.  Reports
are UTF-8 JSON with sorted keys, so identical config and seed produce
byte-identical files; wall-clock metadata lives in a sidecar ``.meta`` file
next to each report, never inside it.  Exit status: 0 when every asserted
check passed, 1 when a check failed (the failing report path is printed),
2 for usage or configuration errors.  The only environment variable read is
SLAGLAB_THREADS, the worker count for multi-entry verification.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import math
import os
import re
import sys
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .catalog import CATALOG_NAMES, SphereJet, get_entry
from .errors import SlaglabError
from .grid import GridField, read_field, write_field
from .operators import OperatorModel, classify_phase, level_set_concavity_probe
from .rank import (
    eigen_fields,
    hom2_audit,
    min_principle_check,
    rank_report,
    splitting_detector,
)
from .solver import SolveConfig, solve_dirichlet
from .transforms import (
    RotationParams,
    legendre_lewy_transform,
    legendre_transform,
    rotate_graph,
)
from .viscosity import check_higher_rank_inequality, check_supersolution_lambda1

COMMANDS = (
    "verify-catalog",
    "solve",
    "rotate",
    "legendre",
    "lewy",
    "analyze",
    "probe-levelset",
    "check-viscosity",
    "hom2-audit",
)

_DEFAULTS: dict[str, dict] = {
    "verify-catalog": {
        "entry": "warren",
        "box": None,
        "nodes": 9,
        "tol": 1e-11,
        "out": None,
        "sample_out": None,
        "seed": 0,
    },
    "solve": {
        "op": None,
        "theta": None,
        "boundary": None,
        "out": None,
        "tol": 1e-10,
        "max_iters": 50,
        "report": None,
        "seed": 0,
    },
    "rotate": {
        "input": None,
        "beta": None,
        "margin": 0.0,
        "out": None,
        "report": None,
        "seed": 0,
    },
    "legendre": {"input": None, "out": None, "report": None, "seed": 0},
    "lewy": {"input": None, "n": None, "out": None, "report": None, "seed": 0},
    "analyze": {
        "field": None,
        "report": "rank",
        "slice": "z=0",
        "shift": 0.0,
        "theta": None,
        "tol_rank": 1e-6,
        "out_dir": ".",
        "seed": 0,
    },
    "probe-levelset": {
        "n": 3,
        "theta": None,
        "trials": 1000,
        "tol": 1e-12,
        "pole_margin": 1e-6,
        "out": "probe_levelset.json",
        "seed": 0,
    },
    "check-viscosity": {
        "field": None,
        "op": "sigma2",
        "theta": None,
        "ineq": None,
        "block": 1,
        "residual_tol": 1e-8,
        "interior_fraction": 0.5,
        "slack": None,
        "out": "viscosity_report.json",
        "seed": 0,
    },
    "hom2-audit": {
        "q": "1,1,0",
        "theta": None,
        "tol_eq": 1e-6,
        "tol_dev": 1e-8,
        "out": "hom2_audit.json",
        "seed": 0,
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved settings for one command run; embedded in every report."""

    command: str
    params: dict
    seed: int

    def as_dict(self) -> dict:
        return {"command": self.command, "seed": self.seed, **self.params}


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    return value


def _thread_count(parser: argparse.ArgumentParser) -> int:
    raw = os.environ.get("SLAGLAB_THREADS")
    if raw is None:
        return 1
    try:
        count = int(raw)
    except ValueError:
        count = 0
    if count < 1:
        parser.error(f"SLAGLAB_THREADS must be a positive integer, got {raw!r}")
    return count


def _resolve(args: argparse.Namespace, parser: argparse.ArgumentParser) -> ExperimentConfig:
    defaults = _DEFAULTS[args.command]
    params = dict(defaults)
    if getattr(args, "config", None) is not None:
        path = Path(args.config)
        if not path.is_file():
            parser.error(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            parser.error(f"config file does not parse: {exc}")
        if not isinstance(loaded, dict):
            parser.error("config file must hold a JSON object")
        unknown = set(loaded) - set(defaults) - {"command"}
        if unknown:
            parser.error(f"unknown config keys for {args.command}: {sorted(unknown)}")
        if loaded.get("command", args.command) != args.command:
            parser.error(
                f"config file is for {loaded['command']!r}, not {args.command!r}"
            )
        params.update({k: v for k, v in loaded.items() if k != "command"})
    for key in defaults:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            params[key] = flag_value
    seed = params.pop("seed", 0)
    if seed is None:
        seed = 0
    return ExperimentConfig(args.command, params, int(seed))


def _require(cfg: ExperimentConfig, key: str, parser: argparse.ArgumentParser):
    value = cfg.params.get(key)
    if value is None:
        parser.error(f"--{key.replace('_', '-')} is required for {cfg.command}")
    return value


def _load_field(path, parser: argparse.ArgumentParser) -> GridField:
    p = Path(path)
    if not p.is_file():
        parser.error(f"input field not found: {p}")
    try:
        return read_field(p)
    except SlaglabError as exc:
        parser.error(f"input field does not parse: {exc}")


def _write_report(path, cfg: ExperimentConfig, results: dict, passed: bool, threads: int) -> str:
    report = {
        "command": cfg.command,
        "config": _jsonable(cfg.as_dict()),
        "seed": cfg.seed,
        "results": _jsonable(results),
        "pass": bool(passed),
    }
    path = Path(path)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    meta = {
        "written_at": datetime.now(timezone.utc).isoformat(),
        "threads": threads,
    }
    Path(str(path) + ".meta").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return str(path)


def _write_pgm(matrix: np.ndarray, path) -> None:
    """8-bit binary PGM, values scaled to the matrix range."""
    lo = float(matrix.min())
    hi = float(matrix.max())
    if hi > lo:
        scaled = np.round(255.0 * (matrix - lo) / (hi - lo)).astype(np.uint8)
    else:
        scaled = np.zeros(matrix.shape, dtype=np.uint8)
    header = f"P5\n{matrix.shape[1]} {matrix.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + scaled.tobytes())


def _parse_slice(text: str, field: GridField, parser: argparse.ArgumentParser):
    match = re.fullmatch(r"\s*([xyz])\s*=\s*([-+0-9.eE]+)\s*", str(text))
    if match is None:
        parser.error(f"slice must look like 'z=0', got {text!r}")
    axis = "xyz".index(match.group(1))
    if axis >= field.n_dims:
        parser.error(f"slice axis {match.group(1)!r} outside a {field.n_dims}-d field")
    value = float(match.group(2))
    coords = field.axis_coords(axis)
    index = int(np.argmin(np.abs(coords - value)))
    return axis, index, float(coords[index])


# ---------------------------------------------------------------- commands


def _entry_residuals(entry, box: float, nodes: int, threads: int) -> dict:
    axes = [np.linspace(-box, box, nodes)] * entry.n
    points = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, entry.n)
    if entry.name == "hom2":
        keep = np.linalg.norm(points, axis=1) > 1e-9
        points = points[keep]

    def scan(chunk) -> dict:
        worst_primary = 0.0
        worst_trace_det = 0.0
        min_sigma1 = math.inf
        for x in chunk:
            _, _, hess = entry.evaluator(x)
            lam = np.linalg.eigvalsh(hess)
            if entry.theta == "sigma2":
                s1 = float(lam.sum())
                s2 = 0.5 * (s1 * s1 - float(np.dot(lam, lam)))
                worst_primary = max(worst_primary, abs(s2 - 1.0))
                min_sigma1 = min(min_sigma1, s1)
            else:
                resid = abs(float(np.arctan(lam).sum()) - entry.theta)
                worst_primary = max(worst_primary, resid)
                if entry.name == "li":
                    trace_det = abs(float(np.trace(hess)) - float(np.linalg.det(hess)))
                    worst_trace_det = max(worst_trace_det, trace_det)
        return {
            "primary": worst_primary,
            "trace_det": worst_trace_det,
            "min_sigma1": min_sigma1,
        }

    chunks = np.array_split(points, max(1, min(threads, len(points))))
    if threads > 1 and len(chunks) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(scan, chunks))
    else:
        parts = [scan(c) for c in chunks]
    combined = {
        "primary": max(p["primary"] for p in parts),
        "trace_det": max(p["trace_det"] for p in parts),
        "min_sigma1": min(p["min_sigma1"] for p in parts),
    }
    out = {"points": int(len(points)), "box": float(box), "nodes": int(nodes)}
    if entry.theta == "sigma2":
        out["max_sigma2_residual"] = combined["primary"]
        out["min_sigma1"] = combined["min_sigma1"]
    else:
        out["max_angle_residual"] = combined["primary"]
        if entry.name == "li":
            out["max_trace_det_residual"] = combined["trace_det"]
    return out


def _entry_passes(entry_results: dict, tol: float) -> bool:
    if "max_sigma2_residual" in entry_results:
        return (
            entry_results["max_sigma2_residual"] < tol
            and entry_results["min_sigma1"] > 0.0
        )
    ok = entry_results["max_angle_residual"] < tol
    if "max_trace_det_residual" in entry_results:
        ok = ok and entry_results["max_trace_det_residual"] < tol
    return ok


def _cmd_verify_catalog(cfg, parser, threads):
    entry_name = cfg.params["entry"]
    names = CATALOG_NAMES if entry_name == "all" else (entry_name,)
    for name in names:
        if name not in CATALOG_NAMES:
            parser.error(f"unknown catalog entry {name!r}; choose from {CATALOG_NAMES}")
    nodes = int(cfg.params["nodes"])
    tol = float(cfg.params["tol"])

    def verify(name: str):
        entry = get_entry(name)
        box = cfg.params["box"]
        box = entry.admissible_box if box is None else float(box)
        results = _entry_residuals(entry, box, nodes, threads if len(names) == 1 else 1)
        return name, results

    if len(names) > 1 and threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            verified = dict(pool.map(verify, names))
    else:
        verified = dict(verify(name) for name in names)

    passed = all(_entry_passes(verified[name], tol) for name in names)
    results = {"entries": verified, "tol": tol}
    if cfg.params["sample_out"] is not None and len(names) == 1:
        entry = get_entry(names[0])
        box = cfg.params["box"]
        box = entry.admissible_box if box is None else float(box)
        sample = GridField.centered(
            lambda x: entry.evaluator(x)[0], box, nodes, n_dims=entry.n
        )
        write_field(sample, cfg.params["sample_out"])
        results["sample_out"] = str(cfg.params["sample_out"])
    out = cfg.params["out"] or f"verify_{entry_name.replace('-', '_')}.json"
    return passed, _write_report(out, cfg, results, passed, threads)


def _cmd_solve(cfg, parser, threads):
    op_name = _require(cfg, "op", parser)
    if op_name not in ("slag", "sigma2"):
        parser.error(f"--op must be slag or sigma2, got {op_name!r}")
    boundary = _load_field(_require(cfg, "boundary", parser), parser)
    out = Path(_require(cfg, "out", parser))
    if op_name == "slag":
        if cfg.params["theta"] is None:
            parser.error("--theta is required when --op slag")
        op = OperatorModel.slag(boundary.n_dims, float(cfg.params["theta"]))
    else:
        op = OperatorModel.sigma2(boundary.n_dims)
    solve_config = SolveConfig(
        max_newton_iters=int(cfg.params["max_iters"]),
        residual_tol=float(cfg.params["tol"]),
    )
    report_path = cfg.params["report"] or str(out) + ".report.json"
    try:
        solution, solve_report = solve_dirichlet(op, boundary, solve_config)
    except SlaglabError as exc:
        results = {"error": str(exc)}
        return False, _write_report(report_path, cfg, results, False, threads)
    write_field(solution, out)
    passed = solve_report.final_residual <= float(cfg.params["tol"])
    results = {
        "solution": str(out),
        "iterations": solve_report.iterations,
        "final_residual": solve_report.final_residual,
        "min_ellipticity": solve_report.min_ellipticity,
        "branch_flag": solve_report.branch_flag,
        "residual_history": list(solve_report.residual_history),
    }
    from .plots import history_png

    figure = out.parent / (out.stem + "_history.png")
    history_png(solve_report.residual_history, figure, title="Newton residual")
    results["figure"] = str(figure)
    return passed, _write_report(report_path, cfg, results, passed, threads)


def _cmd_rotate(cfg, parser, threads):
    u = _load_field(_require(cfg, "input", parser), parser)
    beta = float(_require(cfg, "beta", parser))
    out = Path(_require(cfg, "out", parser))
    params = RotationParams(beta, float(cfg.params["margin"]))
    report_path = cfg.params["report"] or str(out) + ".report.json"
    try:
        samples, rotated, details = rotate_graph(u, params, details=True)
    except SlaglabError as exc:
        results = {"error": str(exc), "beta": beta}
        return False, _write_report(report_path, cfg, results, False, threads)
    write_field(rotated, out)
    results = {
        "rotated": str(out),
        "beta": beta,
        "curl_residual": float(details["curl_residual"]),
        "min_pole_gap": float(np.min(details["pole_gap"])),
        "target_origin": details["target_origin"],
        "target_spacing": details["target_spacing"],
        "sample_count": len(samples),
    }
    return True, _write_report(report_path, cfg, results, True, threads)


def _cmd_legendre(cfg, parser, threads):
    u = _load_field(_require(cfg, "input", parser), parser)
    out = Path(_require(cfg, "out", parser))
    report_path = cfg.params["report"] or str(out) + ".report.json"
    try:
        dual = legendre_transform(u)
    except SlaglabError as exc:
        results = {"error": str(exc)}
        return False, _write_report(report_path, cfg, results, False, threads)
    write_field(dual, out)
    results = {
        "dual": str(out),
        "output_origin": dual.origin,
        "output_spacing": dual.spacing_vector,
        "value_range": [float(dual.values.min()), float(dual.values.max())],
    }
    return True, _write_report(report_path, cfg, results, True, threads)


def _cmd_lewy(cfg, parser, threads):
    u = _load_field(_require(cfg, "input", parser), parser)
    out = Path(_require(cfg, "out", parser))
    n = cfg.params["n"]
    n = u.n_dims if n is None else int(n)
    report_path = cfg.params["report"] or str(out) + ".report.json"
    try:
        result = legendre_lewy_transform(u, n)
    except SlaglabError as exc:
        results = {"error": str(exc)}
        return False, _write_report(report_path, cfg, results, False, threads)
    write_field(result.w_field, out)
    results = {
        "transformed": str(out),
        "modulus": result.m,
        "mu_range": list(result.mu_range),
    }
    return True, _write_report(report_path, cfg, results, True, threads)


def _cmd_analyze(cfg, parser, threads):
    u = _load_field(_require(cfg, "field", parser), parser)
    kind = cfg.params["report"]
    if kind not in ("rank", "min-principle", "split"):
        parser.error(f"--report must be rank, min-principle, or split, got {kind!r}")
    out_dir = Path(cfg.params["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    theta = cfg.params["theta"]
    theta = 0.5 * (u.n_dims - 2) * math.pi if theta is None else float(theta)
    spec = classify_phase(u.n_dims, theta)

    fields = eigen_fields(u)
    lam_min = fields.value_field(0)
    if kind == "rank":
        rep = rank_report(u, float(cfg.params["shift"]), spec, float(cfg.params["tol_rank"]))
        results = {
            "shift": rep.shift,
            "tol_rank": rep.tol_rank,
            "min_rank": rep.min_rank,
            "max_rank": rep.max_rank,
            "threshold_margin": rep.threshold_margin,
            "interior_min_sites": [list(site) for site in rep.interior_min_sites],
            "lambda_min_range": [
                float(lam_min.values.min()),
                float(lam_min.values.max()),
            ],
        }
    elif kind == "min-principle":
        rep = min_principle_check(lam_min)
        results = {
            "verdict": rep.verdict,
            "spread": rep.spread,
            "min_value": rep.min_value,
            "interior_sites": [list(site) for site in rep.interior_sites],
        }
    else:
        rep = splitting_detector(u, spec)
        results = {
            "verdict": rep.verdict,
            "direction": rep.direction,
            "eigenvalue_spread": rep.eigenvalue_spread,
            "direction_spread": rep.direction_spread,
        }

    axis, index, snapped = _parse_slice(cfg.params["slice"], lam_min, parser)
    indexer = [slice(None)] * lam_min.n_dims
    indexer[axis] = index
    matrix = lam_min.as_array()[tuple(indexer)]
    if matrix.ndim == 1:
        matrix = matrix[None, :]
    stem = f"lambda_min_{'xyz'[axis]}{snapped:g}"
    csv_path = out_dir / (stem + ".csv")
    np.savetxt(csv_path, matrix, delimiter=",", fmt="%.17g")
    pgm_path = out_dir / (stem + ".pgm")
    _write_pgm(matrix, pgm_path)
    from .plots import heatmap_png

    png_path = out_dir / (stem + ".png")
    kept = [a for a in range(lam_min.n_dims) if a != axis]
    heatmap_png(
        matrix,
        png_path,
        title=f"smallest eigenvalue, {'xyz'[axis]} = {snapped:g}",
        xlabel="xyz"[kept[1]] if len(kept) == 2 else "node",
        ylabel="xyz"[kept[0]] if len(kept) == 2 else "",
    )
    results["slice"] = {
        "axis": "xyz"[axis],
        "value": snapped,
        "csv": str(csv_path),
        "pgm": str(pgm_path),
        "png": str(png_path),
    }
    report_path = _write_report(out_dir / "analyze_report.json", cfg, results, True, threads)
    return True, report_path


def _cmd_probe_levelset(cfg, parser, threads):
    theta = float(_require(cfg, "theta", parser))
    try:
        spec = classify_phase(int(cfg.params["n"]), theta)
        probe = level_set_concavity_probe(
            spec,
            int(cfg.params["trials"]),
            cfg.seed,
            violation_tol=float(cfg.params["tol"]),
            pole_margin=float(cfg.params["pole_margin"]),
        )
    except ValueError as exc:
        parser.error(str(exc))
    results = asdict(probe)
    passed = probe.violations == 0
    return passed, _write_report(cfg.params["out"], cfg, results, passed, threads)


def _cmd_check_viscosity(cfg, parser, threads):
    u = _load_field(_require(cfg, "field", parser), parser)
    ineq = _require(cfg, "ineq", parser)
    if ineq not in ("4.3", "4.5", "final"):
        parser.error(f"--ineq must be 4.3, 4.5, or final, got {ineq!r}")
    op_name = cfg.params["op"]
    if op_name == "slag":
        if cfg.params["theta"] is None:
            parser.error("--theta is required when --op slag")
        op = OperatorModel.slag(u.n_dims, float(cfg.params["theta"]))
    elif op_name == "sigma2":
        op = OperatorModel.sigma2(u.n_dims)
    else:
        parser.error(f"--op must be slag or sigma2, got {op_name!r}")
    slack = cfg.params["slack"]
    slack = float(np.max(u.spacing_vector)) if slack is None else float(slack)
    kwargs = {
        "residual_tol": float(cfg.params["residual_tol"]),
        "interior_fraction": float(cfg.params["interior_fraction"]),
    }
    try:
        if ineq == "final":
            rep = check_higher_rank_inequality(u, op, int(cfg.params["block"]), **kwargs)
        else:
            rep = check_supersolution_lambda1(u, op, **kwargs)
    except (SlaglabError, ValueError) as exc:
        results = {"error": str(exc), "requested": ineq}
        return False, _write_report(cfg.params["out"], cfg, results, False, threads)
    passed = rep.worst_violation <= slack
    results = {
        "requested": ineq,
        "inequality": rep.inequality,
        "sites_checked": rep.sites_checked,
        "worst_violation": rep.worst_violation,
        "drift_bound": rep.drift_bound,
        "slack": slack,
        "notes": rep.notes,
    }
    return passed, _write_report(cfg.params["out"], cfg, results, passed, threads)


def _cmd_hom2_audit(cfg, parser, threads):
    raw = str(cfg.params["q"])
    try:
        values = [float(v) for v in raw.split(",")]
    except ValueError:
        parser.error(f"--q must be comma-separated numbers, got {raw!r}")
    if len(values) == 3:
        Q = np.diag(values)
    elif len(values) == 9:
        Q = np.array(values).reshape(3, 3)
    else:
        parser.error("--q takes 3 diagonal entries or 9 full-matrix entries")
    jet = SphereJet.from_quadratic(Q)
    theta = cfg.params["theta"]
    theta = float(np.sum(np.arctan(np.linalg.eigvalsh(Q)))) if theta is None else float(theta)
    spec = classify_phase(3, theta)
    audit = hom2_audit(
        jet, spec, tol_eq=float(cfg.params["tol_eq"]), tol_dev=float(cfg.params["tol_dev"])
    )
    results = asdict(audit)
    passed = audit.verdict != "violation"
    return passed, _write_report(cfg.params["out"], cfg, results, passed, threads)


_HANDLERS = {
    "verify-catalog": _cmd_verify_catalog,
    "solve": _cmd_solve,
    "rotate": _cmd_rotate,
    "legendre": _cmd_legendre,
    "lewy": _cmd_lewy,
    "analyze": _cmd_analyze,
    "probe-levelset": _cmd_probe_levelset,
    "check-viscosity": _cmd_check_viscosity,
    "hom2-audit": _cmd_hom2_audit,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slaglab",
        description="Batch verification and transformation of Hessian eigenvalue fields.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; explicit flags override it")
    common.add_argument("--seed", type=int, help="RNG seed recorded in every report")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-catalog", parents=[common],
                       help="check closed-form entries against their defining equations")
    p.add_argument("--entry", choices=CATALOG_NAMES + ("all",))
    p.add_argument("--box", type=float, help="half-width of the sampling cube")
    p.add_argument("--nodes", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--out", help="report path")
    p.add_argument("--sample-out", dest="sample_out", help="also write sampled values as a grid file")

    p = sub.add_parser("solve", parents=[common], help="Dirichlet solve on a boundary-data grid")
    p.add_argument("--op", choices=("slag", "sigma2"))
    p.add_argument("--theta", type=float, help="phase level (required for --op slag)")
    p.add_argument("--boundary", help="grid file with boundary data")
    p.add_argument("--out", help="solution grid file")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--report", help="report path")

    p = sub.add_parser("rotate", parents=[common], help="rotate a gradient graph and resample")
    p.add_argument("--in", dest="input", help="input grid file")
    p.add_argument("--beta", type=float, help="rotation angle in radians")
    p.add_argument("--margin", type=float, help="validity margin angle")
    p.add_argument("--out", help="rotated grid file")
    p.add_argument("--report", help="report path")

    p = sub.add_parser("legendre", parents=[common], help="convex conjugate of a grid potential")
    p.add_argument("--in", dest="input", help="input grid file")
    p.add_argument("--out", help="transformed grid file")
    p.add_argument("--report", help="report path")

    p = sub.add_parser("lewy", parents=[common], help="shifted Legendre transform to the positive cone")
    p.add_argument("--in", dest="input", help="input grid file")
    p.add_argument("--n", type=int, help="dimension for the shift modulus")
    p.add_argument("--out", help="transformed grid file")
    p.add_argument("--report", help="report path")

    p = sub.add_parser("analyze", parents=[common],
                       help="rank / minimum-principle / splitting analysis with heatmap slices")
    p.add_argument("--field", help="grid file to analyze")
    p.add_argument("--report", choices=("rank", "min-principle", "split"))
    p.add_argument("--slice", help="slice spec like z=0")
    p.add_argument("--shift", type=float, help="eigenvalue shift a for the rank count")
    p.add_argument("--theta", type=float, help="phase level for threshold margins")
    p.add_argument("--tol-rank", dest="tol_rank", type=float)
    p.add_argument("--out-dir", dest="out_dir")

    p = sub.add_parser("probe-levelset", parents=[common],
                       help="Monte-Carlo midpoint concavity probe of the operator level set")
    p.add_argument("--n", type=int)
    p.add_argument("--theta", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--pole-margin", dest="pole_margin", type=float)
    p.add_argument("--out", help="report path")

    p = sub.add_parser("check-viscosity", parents=[common],
                       help="differential-inequality checks on a solution field")
    p.add_argument("--field", help="grid file holding the solution")
    p.add_argument("--op", choices=("slag", "sigma2"))
    p.add_argument("--theta", type=float)
    p.add_argument("--ineq", choices=("4.3", "4.5", "final"))
    p.add_argument("--block", type=int, help="degenerate block size for --ineq final")
    p.add_argument("--residual-tol", dest="residual_tol", type=float)
    p.add_argument("--interior-fraction", dest="interior_fraction", type=float)
    p.add_argument("--slack", type=float, help="pass threshold for the worst margin")
    p.add_argument("--out", help="report path")

    p = sub.add_parser("hom2-audit", parents=[common],
                       help="rigidity audit of a 2-homogeneous jet")
    p.add_argument("--q", help="3 diagonal or 9 full entries, comma-separated")
    p.add_argument("--theta", type=float)
    p.add_argument("--tol-eq", dest="tol_eq", type=float)
    p.add_argument("--tol-dev", dest="tol_dev", type=float)
    p.add_argument("--out", help="report path")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    threads = _thread_count(parser)
    cfg = _resolve(args, parser)
    try:
        passed, report_path = _HANDLERS[args.command](cfg, parser, threads)
    except SlaglabError as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 1
    if not passed:
        print(report_path)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
