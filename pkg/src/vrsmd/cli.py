"""Command-line entry point: ``vrsmd {simulate,solve,verify,compare}``.

Exit codes: 0 success, 1 solver or oracle failure, 2 usage or file error.
Settings resolve as command-line flags, then a JSON ``--config`` file,
then built-in defaults. Every run directory is named by a hash of its
resolved configuration and input file hashes and holds one
``manifest.json``; wall-clock times live in a separate ``timing.json`` so
that everything else is reproducible bit for bit.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .core import DesignProblem, load_problem_csv, objective_value, save_problem_csv
from .experiments import CompareSettings, SimulationSpec, compare_solvers, simulate_sparse_data
from .mirror import MirrorDomainError, PowerNorm, SquaredL2, bregman_divergence, parse_mirror
from .oracles import (
    InterpolantConvergenceError,
    NotCertifiableError,
    RateRegimeError,
    check_s_good,
    epsilon_solution_check,
    min_l1_interpolant,
    min_mirror_interpolant,
    re_constant,
    recovery_error_bound,
    delta_bound,
    tau_interpolant,
    tau_l2,
    theoretical_bound_rhs,
)
from .solvers import (
    SOLVERS,
    NonFiniteIterateError,
    SolverConfig,
    run_solver,
    step_size_bound,
    write_trace_csv,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


DEFAULTS = {
    "simulate": dict(n=100, p=200, s=5, rho=0.5, noise_sd=0.0, cov="rows", seed=0, out_dir="runs"),
    "solve": dict(
        data=None, header=False, solver="vrsmd", mirror="l2", eta=None, inner_m=None, outer_s=50,
        option=2, seed=0, record_every=None, init_scale=1e-3, radius=None, out_dir="runs", threads=1,
    ),
    "verify": dict(run_dir=None, beta=None, truth=None, s=None, xi=None, epsilon=1e-3, threads=1),
    "compare": dict(
        data=None, header=False, truth=None, repeats=10, train_frac=0.75, folds=5, delta=0.1,
        eta=None, inner_m=None, outer_s=200, hadamard_eta=None, hadamard_steps=40, hadamard_outer=150,
        init_scale=1e-3, step_fraction=48.0, radius=None, baseline="hadamard", seed=0, threads=1,
        out_dir="runs",
    ),
}


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"{type(o).__name__} is not JSON serializable")


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True, default=_jsonable) + "\n")


def _config_hash(sub, config, inputs) -> str:
    # where outputs go and how many workers run does not change them
    config = {k: v for k, v in config.items() if k not in ("out_dir", "threads")}
    blob = json.dumps({"sub": sub, "config": config, "inputs": inputs}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _run_dir(out_dir, sub, config, inputs) -> Path:
    d = Path(out_dir) / f"{sub}-{_config_hash(sub, config, inputs)}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_manifest(d: Path, sub, config, inputs, outputs):
    _dump(d / "manifest.json", {
        "subcommand": sub,
        "config": config,
        "seed": config.get("seed"),
        "version": __version__,
        "inputs": inputs,
        "outputs": sorted(outputs),
    })


def _resolve(args, sub) -> dict:
    """Merge flags over the JSON config file over the defaults."""
    conf = dict(DEFAULTS[sub])
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc})") from None
        unknown = set(loaded) - set(conf)
        if unknown:
            raise UsageError(f"{path}: unknown keys {sorted(unknown)}")
        conf.update(loaded)
    for key in conf:
        val = getattr(args, key, None)
        if val is not None:
            conf[key] = val
    return conf


def _load(path, header):
    if path is None:
        raise UsageError("--data is required")
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"data file not found: {p}")
    return load_problem_csv(p, header=bool(header))


def _load_vector(path):
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"file not found: {p}")
    return np.loadtxt(p, delimiter=",", ndmin=1)


def _save_vector(path, v):
    np.savetxt(path, np.asarray(v, dtype=float).reshape(-1, 1), delimiter=",", fmt="%.17g")


def _default_radius(prob):
    sp = prob.spectral
    b = sp.row_basis @ ((sp.col_basis.T @ prob.y) / sp.singular_values)
    return max(1.0, float(np.max(np.abs(b))))


def _auto_eta(prob, psi, radius):
    try:
        alpha = psi.strong_convexity_alpha(radius)
    except ValueError:
        alpha = 0.0
    if not alpha > 0:
        raise UsageError(f"cannot pick a default step for mirror {psi.spec()}; pass --eta")
    return step_size_bound(alpha, prob.smoothness_l)


# ---------------------------------------------------------------- simulate

def cmd_simulate(args) -> int:
    conf = _resolve(args, "simulate")
    try:
        spec = SimulationSpec(
            n=int(conf["n"]), p=int(conf["p"]), s=int(conf["s"]), rho=float(conf["rho"]),
            noise_sd=float(conf["noise_sd"]), seed=int(conf["seed"]), cov=conf["cov"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    prob, truth = simulate_sparse_data(spec)
    d = _run_dir(conf["out_dir"], "simulate", conf, {})
    save_problem_csv(prob, d / "problem.csv")
    _save_vector(d / "beta0.csv", truth.beta_o)
    _write_manifest(d, "simulate", conf, {}, ["problem.csv", "beta0.csv"])
    print(d)
    return EXIT_OK


# ---------------------------------------------------------------- solve

def cmd_solve(args) -> int:
    conf = _resolve(args, "solve")
    if conf["solver"] not in SOLVERS:
        raise UsageError(f"unknown solver {conf['solver']!r}; choose from {', '.join(SOLVERS)}")
    try:
        psi = parse_mirror(conf["mirror"])
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc)) from None
    prob = _load(conf["data"], conf["header"])
    inputs = {"data": _sha256(conf["data"])}
    radius = conf["radius"] if conf["radius"] is not None else _default_radius(prob)
    if conf["solver"] == "svrg":
        psi = SquaredL2()
    eta = conf["eta"]
    if eta is None:
        eta = _auto_eta(prob, psi if conf["solver"] != "hadamard" else SquaredL2(), radius)
    m = int(conf["inner_m"]) if conf["inner_m"] is not None else prob.n
    rec = int(conf["record_every"]) if conf["record_every"] is not None else m
    resolved = dict(conf, eta=float(eta), inner_m=m, record_every=rec, radius=float(radius))
    try:
        cfg = SolverConfig(
            eta=float(eta), m=m, S=int(conf["outer_s"]), option=int(conf["option"]),
            seed=int(conf["seed"]), record_every=rec, radius_k=float(radius),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    d = _run_dir(conf["out_dir"], "solve", resolved, inputs)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        run = run_solver(conf["solver"], prob, psi, cfg, init_scale=float(conf["init_scale"]))
    wall = time.perf_counter() - t0
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)

    write_trace_csv(run, d / "trace.csv")
    _save_vector(d / "beta.csv", run.final_beta)
    np.savetxt(d / "snapshots.csv", run.snapshots, delimiter=",", fmt="%.17g")
    meta = {
        "solver": run.solver,
        "mirror": run.mirror,
        "config": cfg.to_dict(),
        "init_scale": float(conf["init_scale"]),
        "B_observed": run.B_observed if conf["solver"] != "hadamard" else None,
        "K_observed": run.K_observed,
        "final_F": objective_value(prob, run.final_beta),
        "output_index": run.output_index,
        "rng_transcript_hash": run.rng_transcript_hash,
        "warnings": [str(w.message) for w in caught],
    }
    _dump(d / "run.json", meta)
    _dump(d / "timing.json", {"wall_time_s": wall})
    # keep the data next to the run so verify is self-contained
    save_problem_csv(prob, d / "problem.csv")
    _write_manifest(d, "solve", resolved, inputs, ["trace.csv", "beta.csv", "snapshots.csv", "run.json", "timing.json", "problem.csv"])
    print(d)
    return EXIT_OK


# ---------------------------------------------------------------- verify

def _bounds_section(prob, psi, meta, cfgd, beta0, target, final):
    """Evaluate the applicable bounds for one run and compare with observed gaps."""
    L = prob.smoothness_l
    eta, m, S, option = cfgd["eta"], cfgd["m"], cfgd["S"], cfgd["option"]
    K = max(meta["K_observed"], 1e-12)
    out = {}
    try:
        alpha = psi.strong_convexity_alpha(K)
    except ValueError:
        alpha = 0.0
    common = dict(
        alpha=alpha, L=L, eta=eta, m=m, S=S, n=prob.n, s_m=prob.s_m, B=meta["B_observed"],
        gap0=objective_value(prob, beta0) - objective_value(prob, target),
    )
    try:
        common["bregman"] = bregman_divergence(psi, target, beta0)
    except MirrorDomainError:
        common["bregman"] = None
    psi_gap = psi.psi(final) - psi.psi(target)
    f_gap = objective_value(prob, final) - objective_value(prob, target)

    def entry(kind, observed, **extra):
        try:
            rhs = theoretical_bound_rhs(kind, **{**common, **extra})
        except (RateRegimeError, ValueError) as exc:
            return {"status": "inapplicable", "reason": str(exc), "observed": observed}
        return {"status": "pass" if observed <= rhs else "fail", "rhs": rhs, "observed": observed}

    if alpha > 0 and eta < alpha / (24 * L) and option == 1:
        out["sublinear_psi_gap_interpolant"] = entry("sublinear_psi_gap_interpolant", psi_gap)
        out["sublinear_f_gap_interpolant"] = entry("sublinear_f_gap_interpolant", f_gap)
    else:
        out["sublinear_psi_gap_interpolant"] = out["sublinear_f_gap_interpolant"] = {"status": "inapplicable", "reason": "needs option 1 and eta < alpha/(24L)"}
    ell = psi.smoothness_ell(K, None) if not isinstance(psi, PowerNorm) or psi.delta >= 1 else math.inf
    if option == 2 and alpha > 0 and math.isfinite(ell):
        try:
            tp = tau_interpolant(alpha, L, eta, m, ell, prob.n, prob.s_m)
        except RateRegimeError as exc:
            tp = None
            reason = str(exc)
        if tp is not None and tp < 1:
            out["linear_psi_gap_interpolant"] = entry("linear_psi_gap_interpolant", psi_gap, tau=tp)
            out["linear_f_gap_interpolant"] = entry("linear_f_gap_interpolant", f_gap, tau=tp)
        else:
            reason = reason if tp is None else f"tau'={tp:.4g} >= 1"
            out["linear_psi_gap_interpolant"] = out["linear_f_gap_interpolant"] = {"status": "inapplicable", "reason": reason}
    else:
        out["linear_psi_gap_interpolant"] = out["linear_f_gap_interpolant"] = {"status": "inapplicable", "reason": "needs option 2 and finite alpha, ell"}
    if isinstance(psi, SquaredL2) and option == 2 and not np.any(beta0):
        try:
            tpp = tau_l2(L, eta, m, prob.n, prob.s_m)
            if tpp < 1:
                yc = float(np.sum(prob.projected_response() ** 2))
                out["linear_pinv_distance"] = entry("linear_pinv_distance", float(np.sum((final - target) ** 2)), tau=tpp, proj_y_norm_sq=yc)
            else:
                out["linear_pinv_distance"] = {"status": "inapplicable", "reason": f"tau''={tpp:.4g} >= 1"}
        except RateRegimeError as exc:
            out["linear_pinv_distance"] = {"status": "inapplicable", "reason": str(exc)}
    else:
        out["linear_pinv_distance"] = {"status": "inapplicable", "reason": "needs l2 mirror, option 2 and a zero start"}
    return out


def _recovery_section(prob, psi, truth, s, xi, threads, run_beta):
    if truth is None or s is None:
        return {"status": "skipped", "reason": "needs --truth and --s"}
    if not isinstance(psi, PowerNorm):
        return {"status": "inapplicable", "reason": "needs a power mirror map"}
    try:
        kappa = check_s_good(prob, s, threads=threads)
        gamma = re_constant(prob, s, threads=threads)
    except NotCertifiableError as exc:
        return {"status": "not_certifiable", "reason": str(exc)}
    sec = {"kappa": kappa, "gamma": gamma, "s": int(s), "delta": psi.delta}
    if not (kappa < 0.5 and gamma > 0):
        sec.update(status="inapplicable", reason="kappa >= 1/2 or gamma = 0")
        return sec
    y_norm = float(np.linalg.norm(prob.y))
    xi_pred = recovery_error_bound(psi.delta, kappa, gamma, s, prob.n, y_norm, prob.p)
    sec["predicted_xi"] = xi_pred
    if xi is not None:
        try:
            sec["delta_max"] = delta_bound(xi, kappa, gamma, s, prob.n, y_norm, prob.p)
        except ValueError as exc:
            sec["delta_max"] = None
            sec["delta_max_reason"] = str(exc)
    oracle = min_mirror_interpolant(prob, psi)
    err_o = float(np.abs(oracle.beta_star - truth).sum())
    l1 = min_l1_interpolant(prob)
    sec.update(
        oracle_l1_error=err_o,
        run_l1_error=float(np.abs(run_beta - truth).sum()),
        l1_interpolant_error=float(np.abs(l1 - truth).sum()),
        status="pass" if err_o <= xi_pred else "fail",
    )
    return sec


def cmd_verify(args) -> int:
    conf = _resolve(args, "verify")
    if conf["run_dir"] is None:
        raise UsageError("--run-dir is required")
    d = Path(conf["run_dir"])
    for name in ("trace.csv", "run.json", "problem.csv"):
        if not (d / name).is_file():
            raise FileNotFoundError(f"{d / name} missing; not a finished solve run")
    meta = json.loads((d / "run.json").read_text())
    if meta["solver"] == "hadamard":
        raise UsageError("verify needs a mirror-descent run, not hadamard")
    prob = load_problem_csv(d / "problem.csv")
    psi = parse_mirror(meta["mirror"])
    final = _load_vector(conf["beta"]) if conf["beta"] else _load_vector(d / "beta.csv")
    if final.shape != (prob.p,):
        raise UsageError(f"beta has length {final.size}, expected {prob.p}")
    snaps = np.loadtxt(d / "snapshots.csv", delimiter=",", ndmin=2)
    beta0 = snaps[0]
    truth = _load_vector(conf["truth"]) if conf["truth"] else None

    cert = min_mirror_interpolant(prob, psi)
    eps = epsilon_solution_check(prob, psi, final, cert, float(conf["epsilon"]))
    bundle = {
        "run": meta["rng_transcript_hash"],
        "mirror": psi.spec(),
        "interpolant": {
            "beta_star": cert.beta_star.tolist(),
            "feasibility_residual": cert.feasibility_residual,
            "dual_range_residual": cert.dual_range_residual,
            "psi_value": cert.psi_value,
            "method": cert.method,
            "certified": cert.within(prob),
        },
        "epsilon_solution": eps.as_dict(),
        "bounds": _bounds_section(prob, psi, meta, meta["config"], beta0, cert.beta_star, final),
        "sparse_recovery": _recovery_section(
            prob, psi, truth, None if conf["s"] is None else int(conf["s"]),
            None if conf["xi"] is None else float(conf["xi"]), int(conf["threads"]), final,
        ),
    }
    _dump(d / "certificate.json", bundle)
    print(d / "certificate.json")
    return EXIT_OK


# ---------------------------------------------------------------- compare

def cmd_compare(args) -> int:
    conf = _resolve(args, "compare")
    prob = _load(conf["data"], conf["header"])
    inputs = {"data": _sha256(conf["data"])}
    truth = None
    if conf["truth"]:
        inputs["truth"] = _sha256(conf["truth"])
        from .core import SparseGroundTruth
        truth = SparseGroundTruth(_load_vector(conf["truth"]))
    try:
        st = CompareSettings(
            repeats=int(conf["repeats"]), train_frac=float(conf["train_frac"]), folds=int(conf["folds"]),
            delta=float(conf["delta"]), vrsmd_eta=conf["eta"], vrsmd_m=conf["inner_m"],
            vrsmd_S=int(conf["outer_s"]), hadamard_eta=conf["hadamard_eta"],
            hadamard_steps=int(conf["hadamard_steps"]), hadamard_S=int(conf["hadamard_outer"]),
            init_scale=float(conf["init_scale"]), step_fraction=float(conf["step_fraction"]),
            radius=conf["radius"], baseline=conf["baseline"], seed=int(conf["seed"]),
            threads=int(conf["threads"]),
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    report = compare_solvers(prob, st, truth)
    d = _run_dir(conf["out_dir"], "compare", conf, inputs)
    out = report.to_dict(include_timing=False)
    out["config"].pop("threads", None)
    _dump(d / "report.json", out)
    _dump(d / "timing.json", report.timing)
    _write_manifest(d, "compare", conf, inputs, ["report.json", "timing.json"])
    print(d)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _solver_flags(p):
    p.add_argument("--mirror", help="l2 | power:<delta> | quad:<H.csv> | entropy")
    p.add_argument("--eta", type=float, help="step size (default: alpha/(24L))")
    p.add_argument("--inner-m", dest="inner_m", type=int, help="inner iterations per outer loop (default n)")
    p.add_argument("--outer-s", dest="outer_s", type=int, help="outer iterations")
    p.add_argument("--option", type=int, choices=(1, 2))


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int)
    shared.add_argument("--threads", type=int)
    shared.add_argument("--out-dir", dest="out_dir")
    shared.add_argument("--config", help="JSON file with default settings")

    ap = argparse.ArgumentParser(prog="vrsmd", description="Variance-reduced stochastic mirror descent toolkit")
    ap.add_argument("--version", action="version", version=f"vrsmd {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[shared], help="generate a sparse regression problem")
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--s", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--noise-sd", dest="noise_sd", type=float)
    p.add_argument("--cov", choices=("rows", "cols"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve", parents=[shared], help="run a solver on a CSV problem")
    p.add_argument("--data")
    p.add_argument("--header", action="store_true", default=None)
    p.add_argument("--solver", help=" | ".join(SOLVERS))
    _solver_flags(p)
    p.add_argument("--record-every", dest="record_every", type=int)
    p.add_argument("--init-scale", dest="init_scale", type=float)
    p.add_argument("--radius", type=float, help="box radius K for the strong-convexity constant")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", parents=[shared], help="check a finished run against the oracles")
    p.add_argument("--run-dir", dest="run_dir")
    p.add_argument("--beta", help="verify this coefficient CSV instead of the run's output")
    p.add_argument("--truth", help="CSV of the true sparse coefficients")
    p.add_argument("--s", type=int, help="sparsity level for the recovery certificate")
    p.add_argument("--xi", type=float, help="target l1 error for delta_max")
    p.add_argument("--epsilon", type=float)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compare", parents=[shared], help="VRSMD versus a baseline on repeated splits")
    p.add_argument("--data")
    p.add_argument("--header", action="store_true", default=None)
    p.add_argument("--truth")
    p.add_argument("--repeats", type=int)
    p.add_argument("--train-frac", dest="train_frac", type=float)
    p.add_argument("--folds", type=int, help="CV folds for early stopping (0 disables)")
    p.add_argument("--delta", type=float, help="power map exponent for VRSMD")
    p.add_argument("--eta", type=float)
    p.add_argument("--inner-m", dest="inner_m", type=int)
    p.add_argument("--outer-s", dest="outer_s", type=int)
    p.add_argument("--hadamard-eta", dest="hadamard_eta", type=float)
    p.add_argument("--hadamard-steps", dest="hadamard_steps", type=int)
    p.add_argument("--hadamard-outer", dest="hadamard_outer", type=int)
    p.add_argument("--init-scale", dest="init_scale", type=float)
    p.add_argument("--step-fraction", dest="step_fraction", type=float)
    p.add_argument("--radius", type=float)
    p.add_argument("--baseline", choices=("hadamard", "vrsmd"))
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonFiniteIterateError, InterpolantConvergenceError, MirrorDomainError, RateRegimeError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
