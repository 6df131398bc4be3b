"""Command-line front end.

Every subcommand reads one JSON config (``--config``), lets a few flags
override it, and writes deterministic JSON/CSV artifacts into ``--out``.
The fully resolved config, defaults included, is written as
``config.json`` and embedded in each summary.

Exit codes: 0 success, 1 usage or I/O error, 2 numerical/pipeline failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .core import FiniteMdp, ModelError, StationaryPolicy, discretize, dump_model_json, load_model_json, model_from_dict
from .discounted import ConvergenceError, value_iteration, write_solution_json
from .models import (LqParams, inventory_grid, inventory_model, lq_grid, lq_model, random_mdp,
                     single_state_model, two_atom_noise)
from .oracle import OracleError, enumerate_optimal, lq_riccati, oracle_to_dict, relative_value_iteration
from .vanishing import (PipelineError, alpha_grid, app_sets_to_dict, certificate_from_dict, certificate_to_dict,
                        solve_average, verify_certificate, write_json, write_trace_csv)

log = logging.getLogger("acmdp")

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2

DEFAULTS = {
    "model": {"builtin": "single_state", "cost": 1.0},
    "alpha": None,
    "alphas": None,
    "vi_tol": 1e-9,
    "cert_tol": 1e-6,
    "match_tol": 1e-8,
    "x_alpha_tol": 1e-8,
    "tail_window": 3,
    "min_count": 2,
    "neighborhood": None,
    "horizons": [1000],
    "max_iter": 1_000_000,
    "oracle_method": "auto",
    "enumeration_cap": 10**6,
    "rvi_tol": 1e-10,
    "certificate": None,
    "lq": {"gamma": 1.0, "beta": 1.0, "q": 1.0, "r": 1.0, "sigma": 1.0, "radius": 6.0, "step": 0.1,
           "action_radius": None, "action_step": None, "boundary_policy": "clamp"},
}

RANDOM_DEFAULTS = {"seed": 0, "n_states": 4, "n_actions": 2, "cost_range": [0.0, 1.0], "sparsity": 0.0,
                   "infinite_cost_fraction": 0.0, "unichain": True}
INVENTORY_DEFAULTS = {"holding_rate": 1.0, "order_cost": 2.0, "demand": [[0.0, 0.3], [1.0, 0.4], [2.0, 0.3]],
                      "capacity": 5.0, "step": 1.0}


class UsageError(Exception):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "model":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        try:
            user = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(user, dict):
            raise UsageError("config must be a JSON object")
        unknown = set(user) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg = _merge(cfg, user)
    model = cfg["model"]
    if model.get("builtin") == "random":
        cfg["model"] = model = _merge(RANDOM_DEFAULTS, model)
    elif model.get("builtin") == "inventory":
        cfg["model"] = model = _merge(INVENTORY_DEFAULTS, model)
    if args.seed is not None:
        if model.get("builtin") != "random":
            raise UsageError("--seed only applies to the random builtin model")
        model["seed"] = args.seed
    if args.alphas is not None:
        try:
            cfg["alphas"] = [float(a) for a in args.alphas.split(",") if a.strip()]
        except ValueError as exc:
            raise UsageError(f"bad --alphas: {exc}") from exc
    if args.tol is not None:
        key = {"oracle": "rvi_tol", "verify": "cert_tol"}.get(args.command, "vi_tol")
        cfg[key] = args.tol
    return cfg


def build_model(spec: dict, base_dir: Path | None = None) -> FiniteMdp:
    if "path" in spec:
        p = Path(spec["path"])
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        return load_model_json(p)
    if "inline" in spec:
        doc = spec["inline"]
        if "states" in doc:
            return model_from_dict(doc)
        # compact form: parallel lists per state, kernel rows as {next_state: prob}
        kernels = [[{int(y): float(q) for y, q in row.items()} if isinstance(row, dict) else row for row in rows]
                   for rows in doc["kernels"]]
        return FiniteMdp.from_lists(doc["actions"], doc["costs"], kernels, lower_bound=doc.get("lower_bound"))
    kind = spec.get("builtin")
    if kind == "single_state":
        return single_state_model(float(spec.get("cost", 1.0)))
    if kind == "random":
        return random_mdp(int(spec["seed"]), int(spec["n_states"]), int(spec["n_actions"]),
                          tuple(spec["cost_range"]), float(spec["sparsity"]),
                          float(spec["infinite_cost_fraction"]), unichain=bool(spec["unichain"]))
    if kind == "inventory":
        inv = inventory_model(spec["holding_rate"], spec["order_cost"], spec["demand"], spec["capacity"])
        return discretize(inv, inventory_grid(spec["capacity"], spec["step"]))
    if kind == "lq":
        params, grid = _lq_setup(_merge(DEFAULTS["lq"], {k: v for k, v in spec.items() if k != "builtin"}))
        return discretize(lq_model(params, *_lq_intervals(grid)), grid)
    raise ModelError(f"unknown model spec {spec!r}")


def _lq_setup(lq: dict):
    params = LqParams(lq["gamma"], lq["beta"], lq["q"], lq["r"], two_atom_noise(float(lq["sigma"])))
    grid = lq_grid(lq["radius"], lq["step"], lq["action_radius"], lq["action_step"], lq["boundary_policy"])
    return params, grid


def _lq_intervals(grid):
    s, a = grid.state_points, grid.action_points
    return (float(s[0]), float(s[-1])), (float(a[0]), float(a[-1]))


def _alphas(cfg: dict) -> np.ndarray:
    return alpha_grid() if cfg["alphas"] is None else np.asarray(cfg["alphas"], dtype=float)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _num(v):
    return None if not math.isfinite(v) else float(v)


# -- subcommands ----------------------------------------------------------------


def cmd_solve_discounted(cfg: dict, model: FiniteMdp, out: Path) -> int:
    alpha = cfg["alpha"]
    if alpha is None:
        if not cfg["alphas"] or len(cfg["alphas"]) != 1:
            raise UsageError("solve-discounted needs a single discount factor ('alpha' or --alphas)")
        alpha = cfg["alphas"][0]
    sol = value_iteration(model, float(alpha), cfg["vi_tol"], cfg["max_iter"], match_tol=cfg["match_tol"])
    write_solution_json(sol, out / "solution.json", extra={"config": cfg})
    return EXIT_OK


def _average_summary(cfg: dict, res) -> dict:
    tr, cert = res.trace, res.certificate
    doc = {
        "config": cfg,
        "w_low": tr.w_low,
        "w_high": tr.w_high,
        "lambda_star": tr.lambda_star,
        "w_bar": cert.w_bar,
        "certificate_pass": cert.passed,
        "min_slack": _num(cert.min_slack),
        "policy": list(cert.policy.choice),
        "app_policy": list(res.app_sets.policy.choice) if res.app_sets else None,
        "app_warning": res.app_sets.warning if res.app_sets else None,
        "assumption": res.assumption.overall.value if res.assumption else None,
        "x_alpha_union": list(res.x_alpha.union),
        "failure": cert.failure,
    }
    if res.tauberian is not None:
        t = res.tauberian
        doc["tauberian"] = {
            "alphas": [float(a) for a in t.alphas],
            "horizons": list(t.horizons),
            "gain": [_num(g) for g in t.gain],
            "discounted_gap": [float(g.max()) for g in t.discounted_gaps],
            "cesaro_gap": [float(g.max()) for g in t.cesaro_gaps],
        }
    return doc


def _run_average(cfg: dict, model: FiniteMdp, require_pass: bool):
    return solve_average(
        model, _alphas(cfg), vi_tol=cfg["vi_tol"], cert_tol=cfg["cert_tol"], match_tol=cfg["match_tol"],
        tail_window=cfg["tail_window"], min_count=cfg["min_count"], neighborhood=cfg["neighborhood"],
        horizons=cfg["horizons"], x_alpha_tol=cfg["x_alpha_tol"], require_pass=require_pass,
    )


def _write_average(cfg, res, out: Path) -> dict:
    write_trace_csv(res.trace, out / "trace.csv")
    write_json(certificate_to_dict(res.certificate), out / "certificate.json")
    if res.app_sets is not None:
        write_json(app_sets_to_dict(res.app_sets), out / "app_sets.json")
    summary = _average_summary(cfg, res)
    write_json(summary, out / "summary.json")
    return summary


def cmd_solve_average(cfg: dict, model: FiniteMdp, out: Path) -> int:
    res = _run_average(cfg, model, require_pass=False)
    _write_average(cfg, res, out)
    if not res.certificate.passed:
        f = res.certificate.failure or {}
        log.error("build_certificate: certificate failed at state %s (min gap %s)", f.get("state"), f.get("min_gap"))
        return EXIT_FAIL
    return EXIT_OK


def cmd_oracle(cfg: dict, model: FiniteMdp, out: Path) -> int:
    method = cfg["oracle_method"]
    if method not in ("auto", "enumeration", "rvi"):
        raise UsageError("oracle_method must be auto, enumeration or rvi")
    res = None
    if method in ("auto", "enumeration"):
        try:
            res = enumerate_optimal(model, cfg["enumeration_cap"])
        except OracleError as exc:
            if method == "enumeration":
                raise
            log.info("%s; falling back to relative value iteration", exc)
    if res is None:
        res = relative_value_iteration(model, cfg["rvi_tol"])
    doc = oracle_to_dict(res)
    doc["config"] = cfg
    write_json(doc, out / "oracle.json")
    return EXIT_OK


def cmd_lq_demo(cfg: dict, model: FiniteMdp | None, out: Path) -> int:
    """LQ pipeline run compared with the Riccati solution."""
    lq = cfg["lq"]
    params, grid = _lq_setup(lq)
    model = discretize(lq_model(params, *_lq_intervals(grid)), grid)
    ric = lq_riccati(params.gamma, params.beta, params.q, params.r, params.noise_variance)
    res = _run_average(cfg, model, require_pass=False)
    xs, acts = grid.state_points, grid.action_points
    chosen = acts[np.asarray(res.certificate.policy.choice, dtype=int)]
    target = np.clip(-ric.K * xs, acts[0], acts[-1])
    inner = np.abs(xs) <= 0.5 * max(abs(xs[0]), abs(xs[-1])) + 1e-9
    slope = float(np.polyfit(xs[inner], chosen[inner], 1)[0])
    rows = [[repr(float(x)), repr(float(a)), repr(float(t)), repr(float(a - t))] for x, a, t in zip(xs, chosen, target)]
    _write_csv(out / "lq_comparison.csv", ["x", "policy_action", "riccati_action", "difference"], rows)
    summary = _write_average(cfg, res, out)
    w_star = ric.w_star
    summary.update({
        "riccati_p": ric.p,
        "riccati_gain": ric.K,
        "optimal_average_cost": w_star,
        "w_high_relative_error": abs(res.trace.w_high - w_star) / w_star if w_star > 0 else abs(res.trace.w_high),
        "policy_slope": slope,
        "slope_relative_error": abs(slope + ric.K) / ric.K if ric.K > 0 else abs(slope),
        "x_alpha_points": [float(xs[i]) for i in res.x_alpha.union],
    })
    write_json(summary, out / "summary.json")
    return EXIT_OK


def cmd_verify(cfg: dict, model: FiniteMdp, out: Path, base_dir: Path | None = None) -> int:
    if not cfg["certificate"]:
        raise UsageError("verify needs a 'certificate' path in the config")
    p = Path(cfg["certificate"])
    if not p.is_absolute() and base_dir is not None:
        p = base_dir / p
    try:
        cert = certificate_from_dict(json.loads(p.read_text()))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise UsageError(f"cannot read certificate {p}: {exc}") from exc
    ok, slack = verify_certificate(model, cert.u, cert.w_bar, StationaryPolicy(cert.policy.choice), cfg["cert_tol"])
    write_json({"config": cfg, "pass": ok, "min_slack": _num(float(slack.min())), "tol": cfg["cert_tol"],
                "slack": [_num(float(s)) for s in slack]}, out / "verify.json")
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "solve-discounted": cmd_solve_discounted,
    "solve-average": cmd_solve_average,
    "oracle": cmd_oracle,
    "lq-demo": cmd_lq_demo,
    "verify": cmd_verify,
}


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="acmdp", description="Average-cost MDPs by vanishing discount.")
    ap.add_argument("--verbose", "-v", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="seed for the random builtin model")
        p.add_argument("--alphas", help="comma-separated discount factors")
        p.add_argument("--tol", type=float, help="main tolerance of the subcommand")
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    base_dir = Path(args.config).resolve().parent if args.config else None
    try:
        cfg = resolve_config(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        model = None
        if args.command != "lq-demo":
            model = build_model(cfg["model"], base_dir)
            dump_model_json(model, out / "model.json")
        write_json(cfg, out / "config.json")
    except (UsageError, ModelError, OSError, KeyError, TypeError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    fn = COMMANDS[args.command]
    try:
        if args.command == "verify":
            return fn(cfg, model, out, base_dir)
        return fn(cfg, model, out)
    except UsageError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except PipelineError as exc:
        log.error("%s failed: %s", exc.stage, exc.cause)
        return EXIT_FAIL
    except (ConvergenceError, OracleError, ValueError, ArithmeticError, RuntimeError) as exc:
        log.error("%s failed: %s", args.command, exc)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
