"""Synthetic sparse data, cross-validated early stopping, and comparison harnesses."""

from __future__ import annotations

import hashlib
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import DesignProblem, SparseGroundTruth, objective_value
from .mirror import MirrorMap, PowerNorm
from .solvers import SolverConfig, run_hadamard_gd, run_vrsmd, step_size_bound

EXACT_WILCOXON_MAX = 20


def derive_seed(root: int, *labels) -> int:
    """64-bit sub-seed from a root seed and a tuple of labels.

    Hash-based, so adding or removing a label elsewhere never shifts the
    stream another label receives.
    """
    text = repr((int(root),) + tuple(str(x) for x in labels)).encode()
    return int.from_bytes(hashlib.sha256(text).digest()[:8], "little")


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class SimulationSpec:
    n: int
    p: int
    s: int
    rho: float = 0.5
    noise_sd: float = 0.0
    seed: int = 0
    cov: str = "rows"

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if not 0 <= self.s <= self.p:
            raise ValueError(f"need 0 <= s <= p, got s={self.s}, p={self.p}")
        if not (0.0 <= self.rho < 1.0):
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if not self.noise_sd >= 0:
            raise ValueError("noise_sd must be nonnegative")
        if self.cov not in ("rows", "cols"):
            raise ValueError("cov must be 'rows' or 'cols'")


def equicorrelation_sqrt(dim: int, rho: float):
    """Coefficients ``(a, b)`` with ``(a I + b 11^T)^2 = (1-rho) I + rho 11^T``."""
    a = math.sqrt(1.0 - rho)
    b = (math.sqrt(1.0 - rho + dim * rho) - a) / dim
    return a, b


def simulate_sparse_data(spec: SimulationSpec):
    """Draw ``X = Sigma^{1/2} W``, a sparse ``beta0`` and ``y = X beta0 + noise``.

    With ``cov="rows"`` the equicorrelation matrix is n x n and mixes the
    samples; ``cov="cols"`` applies the p x p version on the right instead.
    The first ``s`` coefficients are standard normal, the rest zero. The
    noise vector is always drawn, so ``noise_sd`` never shifts the stream.
    """
    rng = _rng(spec.seed)
    w = rng.standard_normal((spec.n, spec.p))
    beta = np.zeros(spec.p)
    beta[: spec.s] = rng.standard_normal(spec.s)
    eps = rng.standard_normal(spec.n)
    if spec.cov == "rows":
        a, b = equicorrelation_sqrt(spec.n, spec.rho)
        x = a * w + b * w.sum(axis=0, keepdims=True)
    else:
        a, b = equicorrelation_sqrt(spec.p, spec.rho)
        x = a * w + b * w.sum(axis=1, keepdims=True)
    y = x @ beta
    if spec.noise_sd > 0:
        y = y + spec.noise_sd * eps
    return DesignProblem(x, y), SparseGroundTruth(beta)


def train_test_split(n: int, train_frac: float, seed: int):
    if not 0 < train_frac < 1:
        raise ValueError("train_frac must lie in (0, 1)")
    perm = _rng(seed).permutation(n)
    cut = int(round(train_frac * n))
    if cut < 1 or cut >= n:
        raise ValueError(f"split of n={n} at {train_frac} leaves an empty side")
    return np.sort(perm[:cut]), np.sort(perm[cut:])


def kfold_indices(n: int, k: int, seed: int = 0):
    """Shuffle ``range(n)`` and cut it into ``k`` nearly equal test folds."""
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = _rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def _mse(x, y, beta):
    r = x @ beta - y
    return float(r @ r) / len(y)


def _fit(solver, prob, psi, cfg, init_scale):
    if solver == "vrsmd":
        return run_vrsmd(prob, psi, cfg)
    if solver == "hadamard":
        return run_hadamard_gd(prob, cfg, init_scale)
    raise ValueError(f"unknown solver {solver!r}")


def _pmap(fn, items, threads):
    if threads <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def kfold_early_stopping(
    prob: DesignProblem,
    psi: Optional[MirrorMap],
    cfg: SolverConfig,
    k: int = 5,
    *,
    solver: str = "vrsmd",
    init_scale: float = 1e-3,
    seed: int = 0,
    threads: int = 1,
):
    """Pick the outer-loop count by k-fold cross-validation.

    Each fold trains on the other ``k-1`` folds and records held-out mean
    squared error at every snapshot ``s = 0..S``. Returns ``(best_S,
    curve)`` where ``curve[s]`` is the fold average and ``best_S`` its
    first minimiser.
    """
    folds = kfold_indices(prob.n, k, seed)
    everything = np.arange(prob.n)

    def one(fold):
        train = np.setdiff1d(everything, fold)
        if train.size == 0:
            raise ValueError("fold with empty training set")
        sub = prob.subset(train)
        run = _fit(solver, sub, psi, cfg, init_scale)
        xt, yt = prob.x_matrix[fold], prob.y[fold]
        return [_mse(xt, yt, b) for b in run.snapshots]

    curves = np.array(_pmap(one, folds, threads))
    curve = curves.mean(axis=0)
    best = int(np.argmin(curve))
    return best, curve


def _signed_rank_pmf(ranks2):
    """Null distribution of twice the positive-rank sum, by dynamic programming."""
    total = int(sum(ranks2))
    pmf = np.zeros(total + 1)
    pmf[0] = 1.0
    for r in ranks2:
        shifted = np.zeros_like(pmf)
        shifted[r:] = pmf[: total + 1 - r]
        pmf = 0.5 * (pmf + shifted)
    return pmf


def _rank_abs(values):
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    ties = []
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        ties.append(j - i + 1)
        i = j + 1
    return ranks, ties


def wilcoxon_signed_rank(a, b, alternative: str = "two_sided") -> float:
    """Paired signed-rank test of ``a - b``; zero differences are discarded.

    ``alternative="greater"`` tests whether ``a`` tends to exceed ``b``.
    Up to 20 nonzero pairs the p-value comes from the exact null
    distribution (ties handled through midranks); beyond that a normal
    approximation with tie and continuity corrections is used.
    """
    alt = alternative.replace("-", "_")
    if alt not in ("two_sided", "less", "greater"):
        raise ValueError("alternative must be two_sided, less or greater")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("a and b must be 1-D arrays of equal length")
    d = a - b
    d = d[d != 0]
    if d.size == 0:
        warnings.warn("all paired differences are zero; returning p = 1", RuntimeWarning, stacklevel=2)
        return 1.0
    if d.size < 5:
        raise ValueError(f"need at least 5 nonzero differences, got {d.size}")
    ranks, ties = _rank_abs(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    nz = d.size
    if nz <= EXACT_WILCOXON_MAX:
        ranks2 = np.rint(2 * ranks).astype(int)
        pmf = _signed_rank_pmf(ranks2)
        w2 = int(round(2 * w_plus))
        upper = float(pmf[w2:].sum())
        lower = float(pmf[: w2 + 1].sum())
    else:
        mean = nz * (nz + 1) / 4.0
        var = nz * (nz + 1) * (2 * nz + 1) / 24.0 - sum(t ** 3 - t for t in ties) / 48.0
        sd = math.sqrt(var)
        upper = 0.5 * math.erfc((w_plus - mean - 0.5) / sd / math.sqrt(2))
        lower = 0.5 * math.erfc((mean - w_plus - 0.5) / sd / math.sqrt(2))
    if alt == "greater":
        p = upper
    elif alt == "less":
        p = lower
    else:
        p = 2.0 * min(upper, lower)
    return float(min(1.0, p))


@dataclass
class ExperimentReport:
    """Collected metrics; every number is recomputable from the stored runs."""

    kind: str
    config: dict
    runs: list = field(default_factory=list)
    sweep: list = field(default_factory=list)
    early_stop: dict = field(default_factory=dict)
    p_values: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    def to_dict(self, include_timing: bool = True) -> dict:
        out = asdict(self)
        if not include_timing:
            out.pop("timing")
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentReport":
        return cls(**data)


def run_metrics(prob: DesignProblem, truth: Optional[SparseGroundTruth], beta) -> dict:
    out = {"final_F": objective_value(prob, beta)}
    if truth is not None:
        diff = np.asarray(beta) - truth.beta_o
        out["l1_error"] = float(np.abs(diff).sum())
        out["l2_error"] = float(np.linalg.norm(diff))
    return out


def power_step(delta: float, L: float, radius: float, fraction: float) -> float:
    """``fraction`` of the sufficient step ``alpha / (24 L)`` for the power map at radius ``radius``."""
    return fraction * step_size_bound(PowerNorm(delta).strong_convexity_alpha(radius), L)


def delta_sweep(
    prob: DesignProblem,
    truth: SparseGroundTruth,
    deltas: Sequence[float],
    cfg: SolverConfig,
    *,
    step_fraction: Optional[float] = None,
    radius: Optional[float] = None,
    threads: int = 1,
    keep_runs: bool = False,
) -> ExperimentReport:
    """Run VRSMD with the power map for each ``delta`` and tabulate the final l1 error.

    By default every entry uses ``cfg.eta``. With ``step_fraction`` each
    entry instead uses that fraction of ``alpha_delta(K) / (24 L)``; the
    radius ``K`` defaults to ``max(1, ||beta0||_inf)``. A failing entry is
    recorded with its error message and the sweep carries on.
    """
    deltas = [float(d) for d in deltas]
    if not deltas or any(d <= 0 for d in deltas):
        raise ValueError("deltas must be positive")
    if any(b <= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be sorted strictly ascending")
    k = radius if radius is not None else max(1.0, float(np.abs(truth.beta_o).max()))

    def one(delta):
        eta = cfg.eta if step_fraction is None else power_step(delta, prob.smoothness_l, k, step_fraction)
        c = cfg.replace(eta=eta)
        entry = {"delta": delta, "eta": eta}
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                run = run_vrsmd(prob, PowerNorm(delta), c)
        except (ArithmeticError, ValueError) as exc:
            entry.update(error=f"{type(exc).__name__}: {exc}")
            return entry, None
        entry.update(run_metrics(prob, truth, run.final_beta))
        entry["curve_l1"] = [float(np.abs(b - truth.beta_o).sum()) for b in run.snapshots]
        entry["K_observed"] = run.K_observed
        entry["B_observed"] = run.B_observed
        entry["rng_transcript_hash"] = run.rng_transcript_hash
        return entry, run

    results = _pmap(one, deltas, threads)
    report = ExperimentReport(kind="delta_sweep", config={**cfg.to_dict(), "deltas": deltas, "step_fraction": step_fraction, "radius": k})
    report.sweep = [e for e, _ in results]
    if keep_runs:
        report.runs = [r for _, r in results]
    errs = [e.get("l1_error", math.nan) for e in report.sweep]
    report.summary["monotone_increasing"] = bool(all(b > a for a, b in zip(errs, errs[1:])))
    return report


@dataclass(frozen=True)
class CompareSettings:
    repeats: int = 10
    train_frac: float = 0.75
    folds: int = 5
    delta: float = 0.1
    vrsmd_eta: Optional[float] = None
    vrsmd_m: Optional[int] = None
    vrsmd_S: int = 200
    hadamard_eta: Optional[float] = None
    hadamard_steps: int = 40
    hadamard_S: int = 150
    init_scale: float = 1e-3
    step_fraction: float = 48.0
    radius: Optional[float] = None
    baseline: str = "hadamard"
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.baseline not in ("hadamard", "vrsmd"):
            raise ValueError("baseline must be 'hadamard' or 'vrsmd'")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.folds == 1 or self.folds < 0:
            raise ValueError("folds must be 0 (no CV) or >= 2")


def _default_radius(prob):
    sp = prob.spectral
    b = sp.row_basis @ ((sp.col_basis.T @ prob.y) / sp.singular_values)
    return max(1.0, float(np.abs(b).max()))


def _choose_S(tr, psi, cfg, st, solver, label, r):
    if st.folds < 2:
        return cfg.S
    best, _ = kfold_early_stopping(
        tr, psi, cfg, st.folds, solver=solver, init_scale=st.init_scale,
        seed=derive_seed(st.seed, label, r), threads=st.threads,
    )
    return max(best, 1)


def compare_solvers(prob: DesignProblem, settings: CompareSettings, truth: Optional[SparseGroundTruth] = None) -> ExperimentReport:
    """VRSMD with a power map against a baseline on repeated random splits.

    For every repeat the data are split into train and test parts; each
    solver's outer-loop count is chosen by k-fold CV on the training part,
    then the solver is refit on all training rows and timed. The baseline
    is Hadamard GD, or VRSMD itself with identical seeds (a null check).
    Reported p-values: two-sided signed-rank on test MSE in ``p_values``
    and one-sided on wall time (VRSMD faster) in ``timing``.
    """
    st = settings
    psi = PowerNorm(st.delta)
    rows = []
    timing = {"vrsmd": [], "baseline": []}
    for r in range(st.repeats):
        train, test = train_test_split(prob.n, st.train_frac, derive_seed(st.seed, "split", r))
        tr = prob.subset(train)
        xt, yt = prob.x_matrix[test], prob.y[test]
        k = st.radius if st.radius is not None else _default_radius(tr)
        eta_v = st.vrsmd_eta if st.vrsmd_eta is not None else power_step(st.delta, tr.smoothness_l, k, st.step_fraction)
        m = st.vrsmd_m if st.vrsmd_m is not None else tr.n
        cfg_v = SolverConfig(eta=eta_v, m=m, S=st.vrsmd_S, option=2, seed=derive_seed(st.seed, "vrsmd", r), record_every=m)
        if st.baseline == "hadamard":
            lam = tr.spectral.s_max
            # the reparametrised curvature scales with |beta|, hence the radius
            eta_b = st.hadamard_eta if st.hadamard_eta is not None else 0.25 * tr.n / (lam * lam * k)
            cfg_b = SolverConfig(eta=eta_b, m=st.hadamard_steps, S=st.hadamard_S, record_every=st.hadamard_steps)
            psi_b, label_b = None, "cv-h"
        else:
            cfg_b, psi_b, label_b = cfg_v, psi, "cv-v"

        row = {"repeat": r, "n_train": int(train.size), "n_test": int(test.size), "eta_vrsmd": eta_v, "eta_baseline": cfg_b.eta}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sv = _choose_S(tr, psi, cfg_v, st, "vrsmd", "cv-v", r)
            sb = _choose_S(tr, psi_b, cfg_b, st, st.baseline, label_b, r)
            t0 = time.perf_counter()
            run_v = run_vrsmd(tr, psi, cfg_v.replace(S=sv))
            t1 = time.perf_counter()
            run_b = _fit(st.baseline, tr, psi_b, cfg_b.replace(S=sb), st.init_scale)
            t2 = time.perf_counter()
        timing["vrsmd"].append(t1 - t0)
        timing["baseline"].append(t2 - t1)
        row.update(
            best_S_vrsmd=sv, best_S_baseline=sb,
            test_mse_vrsmd=_mse(xt, yt, run_v.final_beta),
            test_mse_baseline=_mse(xt, yt, run_b.final_beta),
            train_F_vrsmd=objective_value(tr, run_v.final_beta),
            train_F_baseline=objective_value(tr, run_b.final_beta),
        )
        if truth is not None:
            row["l1_error_vrsmd"] = float(np.abs(run_v.final_beta - truth.beta_o).sum())
            row["l1_error_baseline"] = float(np.abs(run_b.final_beta - truth.beta_o).sum())
        rows.append(row)

    report = ExperimentReport(kind="compare", config=asdict(st), runs=rows)
    mv = np.array([x["test_mse_vrsmd"] for x in rows])
    mb = np.array([x["test_mse_baseline"] for x in rows])
    report.summary = {
        "mean_test_mse_vrsmd": float(mv.mean()),
        "mean_test_mse_baseline": float(mb.mean()),
        "mse_ratio": float(max(mv.mean(), mb.mean()) / min(mv.mean(), mb.mean())),
    }
    report.early_stop = {
        "vrsmd": [x["best_S_vrsmd"] for x in rows],
        "baseline": [x["best_S_baseline"] for x in rows],
    }
    report.p_values = {"test_mse_two_sided": _safe_wilcoxon(mv, mb, "two_sided")}
    report.timing = {
        "wall_vrsmd": timing["vrsmd"],
        "wall_baseline": timing["baseline"],
        "p_time_vrsmd_faster": _safe_wilcoxon(np.array(timing["vrsmd"]), np.array(timing["baseline"]), "less"),
    }
    return report


def _safe_wilcoxon(a, b, alt):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return wilcoxon_signed_rank(a, b, alt)
    except ValueError:
        return math.nan
