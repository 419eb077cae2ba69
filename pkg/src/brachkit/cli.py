"""Scenario-driven command line front end.

One JSON scenario file describes the model, the endpoints, and per-command
blocks; results land in machine-readable files under the output directory.
Logs go to standard error; standard output carries a one-line summary only.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .bvp import ObserverWorldline, ShootConfig, ShootingProblem, multistart_survey, shoot
from .curves import Curve, curve_to_csv, curve_from_json_dict, curve_to_json_dict
from .dynamics import (BrachistochroneSolution, IntegratorConfig, conservation_report,
                       integrate_brachistochrone)
from .errors import BrachkitError, ConfigError
from .geometry import conformal_geometry
from .models import MODEL_NAMES, ModelSpec, make_model
from .oracle import PenaltyConfig, discrete_minimize
from .transform import correspondence_report, deform_D

log = logging.getLogger("brachkit.cli")

COMMANDS = ("solve", "shoot", "survey", "jacobi", "index", "verify", "oracle")

_TOL_KEYS = {"rtol", "atol", "grid_n", "tol_cons", "tol_bvp"}
_TOP_KEYS = {"model", "k", "p", "gamma_anchor", "tolerances", "out"} | set(COMMANDS)
_BLOCK_KEYS = {
    "solve": {"u", "T"},
    "shoot": {"guess_u", "guess_T"},
    "survey": {"n_starts", "T_bracket", "seed", "n_basis", "attach_indices"},
    "jacobi": {"solution"},
    "index": {"solution", "n_basis"},
    "verify": {"solution"},
    "oracle": {"n_segments", "epsilon", "gtol", "max_iters", "init", "shoot_check",
               "guess_T"},
}


# ---------------------------------------------------------------------------
# Deterministic JSON with round-trip exact floats

def _canon(obj):
    if isinstance(obj, dict):
        items = sorted(obj.items())
        return "{" + ",".join(json.dumps(k) + ":" + _canon(v) for k, v in items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_canon(v) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format(float(obj), ".17g")
    if isinstance(obj, np.ndarray):
        return _canon(obj.tolist())
    return json.dumps(obj)


def dumps_canonical(obj) -> str:
    return _canon(obj) + "\n"


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# Config handling

def _require_keys(block: dict, allowed: set, where: str):
    extra = set(block) - allowed
    if extra:
        raise ConfigError(f"unknown keys {sorted(extra)} in {where}")


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario file: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("scenario file must hold a JSON object")
    _require_keys(cfg, _TOP_KEYS, "the scenario")
    if "model" not in cfg:
        raise ConfigError("scenario lacks a 'model' block")
    _require_keys(cfg["model"], {"name", "params"}, "'model'")
    if cfg["model"].get("name") not in MODEL_NAMES:
        raise ConfigError(f"model name must be one of {MODEL_NAMES}")
    for cmd, keys in _BLOCK_KEYS.items():
        if cmd in cfg:
            _require_keys(cfg[cmd], keys, f"'{cmd}'")
    if "tolerances" in cfg:
        _require_keys(cfg["tolerances"], _TOL_KEYS, "'tolerances'")
    return cfg


def _integrator_config(cfg) -> IntegratorConfig:
    tol = cfg.get("tolerances", {})
    return IntegratorConfig(
        rtol=float(tol.get("rtol", 1e-10)),
        atol=float(tol.get("atol", 1e-10)),
        grid_n=int(tol.get("grid_n", 400)),
        tol_cons=float(tol.get("tol_cons", 1e-7)),
    )


def _model_of(cfg):
    block = cfg["model"]
    return make_model(ModelSpec(block["name"], block.get("params", {})))


def _solution_dict(model_block, sol: BrachistochroneSolution) -> dict:
    return {
        "model": model_block,
        "k": sol.k,
        "T": sol.T,
        "residuals": {
            "conservation_Y": sol.residual_conservation_Y,
            "conservation_speed": sol.residual_conservation_speed,
            "equation": sol.residual_ode,
        },
        "curve": curve_to_json_dict(sol.sigma),
    }


def _load_solution(path: Path):
    with open(path) as fh:
        d = json.load(fh)
    model = make_model(ModelSpec(d["model"]["name"], d["model"].get("params", {})))
    sol = BrachistochroneSolution(
        sigma=curve_from_json_dict(d["curve"]), T=float(d["T"]), k=float(d["k"]),
        residual_conservation_Y=float(d["residuals"]["conservation_Y"]),
        residual_conservation_speed=float(d["residuals"]["conservation_speed"]),
        residual_ode=float(d["residuals"]["equation"]),
    )
    return model, d["model"], sol


def _unit_horizontal(model, q, seed):
    from .geometry import riemannian_metric_matrix
    seed = np.asarray(seed, dtype=float)
    g = model.g(q)
    y = model.y(q)
    u = seed - (float(seed @ g @ y) / float(y @ g @ y)) * y
    gr = riemannian_metric_matrix(model, q)
    nn = np.sqrt(max(float(u @ gr @ u), 0.0))
    if nn < 1e-12:
        raise ConfigError("direction seed is parallel to the observer field")
    return u / nn


# ---------------------------------------------------------------------------
# Commands

def _cmd_solve(cfg, out_dir: Path, seed, threads) -> str:
    model = _model_of(cfg)
    icfg = _integrator_config(cfg)
    block = cfg["solve"]
    p = np.asarray(cfg["p"], dtype=float)
    u = _unit_horizontal(model, p, block["u"])
    sol = integrate_brachistochrone(model, float(cfg["k"]), p, u, float(block["T"]), icfg)
    report = conservation_report(model, sol)
    doc = _solution_dict(cfg["model"], sol)
    doc["conservation_report"] = report
    name = cfg.get("out", {}).get("solution", "solution.json")
    _write(out_dir / name, dumps_canonical(doc))
    return f"solve: T={sol.T:.17g} residuals Y={sol.residual_conservation_Y:.3e}"


def _cmd_shoot(cfg, out_dir: Path, seed, threads) -> str:
    model = _model_of(cfg)
    icfg = _integrator_config(cfg)
    block = cfg["shoot"]
    tol = cfg.get("tolerances", {})
    p = np.asarray(cfg["p"], dtype=float)
    gamma = ObserverWorldline(np.asarray(cfg["gamma_anchor"], dtype=float), model)
    prob = ShootingProblem(model, p, gamma, float(cfg["k"]),
                           ShootConfig(tol_bvp=float(tol.get("tol_bvp", 1e-10)),
                                       integrator=icfg))
    sol = shoot(prob, (np.asarray(block["guess_u"], dtype=float), float(block["guess_T"])))
    rep = correspondence_report(model, sol)
    doc = _solution_dict(cfg["model"], sol)
    doc["correspondence"] = rep.as_dict()
    name = cfg.get("out", {}).get("solution", "solution.json")
    _write(out_dir / name, dumps_canonical(doc))
    return f"shoot: T={sol.T:.17g} roundtrip={rep.roundtrip_error:.3e}"


def _cmd_survey(cfg, out_dir: Path, seed, threads) -> str:
    model = _model_of(cfg)
    icfg = _integrator_config(cfg)
    block = cfg["survey"]
    tol = cfg.get("tolerances", {})
    p = np.asarray(cfg["p"], dtype=float)
    gamma = ObserverWorldline(np.asarray(cfg["gamma_anchor"], dtype=float), model)
    prob = ShootingProblem(model, p, gamma, float(cfg["k"]),
                           ShootConfig(tol_bvp=float(tol.get("tol_bvp", 1e-10)),
                                       integrator=icfg))
    use_seed = int(block["seed"]) if seed is None else int(seed)
    res = multistart_survey(
        prob, int(block["n_starts"]), tuple(block["T_bracket"]), use_seed,
        attach_indices=bool(block.get("attach_indices", True)),
        n_basis=int(block.get("n_basis", 50)), threads=threads)
    sol_docs = []
    for i, rec in enumerate(res.solutions):
        ref = f"survey_sol_{i:03d}.csv"
        _write(out_dir / ref, curve_to_csv(rec["solution"].sigma))
        entry = {
            "T": rec["T"],
            "residuals": {
                "conservation_Y": rec["residual_conservation_Y"],
                "conservation_speed": rec["residual_conservation_speed"],
            },
            "curve_ref": ref,
        }
        for key in ("index_morse", "index_geometric", "n_zero"):
            if key in rec:
                entry[key] = rec[key]
        sol_docs.append(entry)
    doc = {
        "seed": use_seed,
        "n_starts": int(block["n_starts"]),
        "T_bracket": [float(x) for x in block["T_bracket"]],
        "count": len(sol_docs),
        "parity": res.parity,
        "parity_note": res.parity_note,
        "odd_count_consistent": res.odd_count_consistent,
        "n_failures": res.n_failures,
        "solutions": sol_docs,
    }
    name = cfg.get("out", {}).get("survey", "survey.json")
    _write(out_dir / name, dumps_canonical(doc))
    return f"survey: {len(sol_docs)} solutions, parity {res.parity}"


def _cmd_jacobi(cfg, out_dir: Path, seed, threads) -> str:
    from .jacobi import bfocal_points
    block = cfg["jacobi"]
    model, _, sol = _load_solution(out_dir / block["solution"])
    rep = bfocal_points(model, sol)
    doc = rep.as_dict()
    name = cfg.get("out", {}).get("focal", "focal.json")
    _write(out_dir / name, dumps_canonical(doc))
    ts, dets = rep.determinant_trace
    lines = ["t,det"] + [f"{format(t, '.17g')},{format(d, '.17g')}"
                         for t, d in zip(ts, dets)]
    _write(out_dir / name.replace(".json", "_trace.csv"), "\n".join(lines) + "\n")
    return f"jacobi: geometric index {rep.geometric_index}"


def _cmd_index(cfg, out_dir: Path, seed, threads) -> str:
    from .variation import ConformalCurveData, assemble_hessian, restricted_index_report
    block = cfg["index"]
    model, _, sol = _load_solution(out_dir / block["solution"])
    n_basis = int(block.get("n_basis", 80))
    cg = conformal_geometry(model, sol.k)
    w = deform_D(model, sol, n_out=400)
    wrev = w.reversed()
    data = ConformalCurveData(cg, wrev)
    triple = restricted_index_report(cg, wrev, n_basis, data=data)
    hm = assemble_hessian(cg, wrev, "full", n_basis, data=data)
    doc = {
        "n_basis": n_basis,
        "indices": {"full": triple[0], "horizontal": triple[1],
                    "perpendicular": triple[2]},
        "eps_eig": hm.eps_eig,
        "n_zero": hm.n_zero,
        "basis": hm.basis,
    }
    name = cfg.get("out", {}).get("hessian", "index.json")
    _write(out_dir / name, dumps_canonical(doc))
    rows = [",".join(format(x, ".17g") for x in row) for row in hm.entries]
    _write(out_dir / name.replace(".json", "_matrix.csv"), "\n".join(rows) + "\n")
    return f"index: full={triple[0]} horizontal={triple[1]} perpendicular={triple[2]}"


def _cmd_verify(cfg, out_dir: Path, seed, threads) -> str:
    block = cfg["verify"]
    model, _, sol = _load_solution(out_dir / block["solution"])
    tol = cfg.get("tolerances", {})
    tol_cons = float(tol.get("tol_cons", 1e-7))
    rep = conservation_report(model, sol)
    failures = []
    if rep["residual_Y_max"] > tol_cons * (1.0 + sol.k * sol.T):
        failures.append("conservation_Y")
    if rep["residual_speed_max"] > tol_cons * (1.0 + sol.T ** 2):
        failures.append("conservation_speed")
    corr = None
    if not failures:
        corr = correspondence_report(model, sol)
        if corr.geodesic_residual > 1e-5 * (1.0 + sol.T ** 2):
            failures.append("geodesic_residual")
        if corr.energy_vs_halfT2 > 1e-7 * (1.0 + sol.T ** 2):
            failures.append("energy_identity")
        if corr.roundtrip_error > 1e-6:
            failures.append("roundtrip")
    doc = {
        "conservation": rep,
        "correspondence": corr.as_dict() if corr else None,
        "failures": failures,
        "passed": not failures,
    }
    name = cfg.get("out", {}).get("report", "verify.json")
    _write(out_dir / name, dumps_canonical(doc))
    if failures:
        raise BrachkitError(f"verification failed: {', '.join(failures)}")
    return "verify: all invariants hold"


def _cmd_oracle(cfg, out_dir: Path, seed, threads) -> str:
    model = _model_of(cfg)
    block = cfg.get("oracle", {})
    p = np.asarray(cfg["p"], dtype=float)
    anchor = np.asarray(cfg["gamma_anchor"], dtype=float)
    pc = PenaltyConfig(epsilon=float(block.get("epsilon", 0.5)))
    init = None
    if "init" in block:
        from .curves import curve_from_csv
        with open(out_dir / block["init"]) as fh:
            init = curve_from_csv(fh.read())
    cand = discrete_minimize(model, p, anchor, float(cfg["k"]),
                             int(block.get("n_segments", 200)), init=init, pc=pc,
                             gtol=float(block.get("gtol", 1e-7)),
                             max_iters=int(block.get("max_iters", 20000)))
    doc = {"T_estimate": cand.T_estimate, "constraint_penalty": cand.constraint_penalty}
    if block.get("shoot_check", True):
        icfg = _integrator_config(cfg)
        tolb = cfg.get("tolerances", {})
        gamma = ObserverWorldline(anchor, model)
        prob = ShootingProblem(model, p, gamma, float(cfg["k"]),
                               ShootConfig(tol_bvp=float(tolb.get("tol_bvp", 1e-10)),
                                           integrator=icfg))
        guess_dir = cand.polyline.velocities[0]
        sol = shoot(prob, (guess_dir, float(block.get("guess_T", cand.T_estimate))))
        w = deform_D(model, sol, n_out=cand.polyline.n_segments)
        from .geometry import riemannian_metric_matrix
        worst = 0.0
        for qa, qb in zip(cand.polyline.points, w.points):
            d = model.wrap_difference(qb - qa)
            gr = riemannian_metric_matrix(model, qa)
            worst = max(worst, float(np.sqrt(max(d @ gr @ d, 0.0))))
        doc["shoot_T"] = sol.T
        doc["T_difference"] = abs(sol.T - cand.T_estimate)
        doc["curve_distance"] = worst
    name = cfg.get("out", {}).get("oracle", "oracle.json")
    _write(out_dir / name, dumps_canonical(doc))
    _write(out_dir / name.replace(".json", "_polyline.csv"), curve_to_csv(cand.polyline))
    return f"oracle: T={cand.T_estimate:.17g}"


_HANDLERS = {
    "solve": _cmd_solve,
    "shoot": _cmd_shoot,
    "survey": _cmd_survey,
    "jacobi": _cmd_jacobi,
    "index": _cmd_index,
    "verify": _cmd_verify,
    "oracle": _cmd_oracle,
}


def run_scenario(config: dict, command: str, out_dir, seed=None, threads: int = 1) -> str:
    if command not in _HANDLERS:
        raise ConfigError(f"unknown command '{command}'")
    if command not in config and command not in ("oracle",):
        raise ConfigError(f"scenario lacks a '{command}' block")
    return _HANDLERS[command](config, Path(out_dir), seed, threads)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="brachkit",
        description="Travel-time extremal curves in stationary spacetimes")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="scenario JSON file")
    parser.add_argument("--out-dir", default=".", help="directory for result files")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, default=None,
                        help="override the scenario seed (survey)")
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        summary = run_scenario(cfg, args.command, args.out_dir, seed=args.seed,
                               threads=args.threads)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return 2
    except (BrachkitError, ValueError, np.linalg.LinAlgError) as exc:
        log.error("numerical failure: %s", exc)
        try:
            _write(Path(args.out_dir) / "error.json",
                   dumps_canonical({"error": type(exc).__name__, "message": str(exc)}))
        except OSError:
            pass
        return 3
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
