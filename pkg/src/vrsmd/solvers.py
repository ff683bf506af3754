"""Variance-reduced stochastic mirror descent and baseline solvers.

All stochastic solvers draw from a counter-based Philox stream seeded by
``SolverConfig.seed``. The draw order is fixed so two solvers fed the same
seed see the same sample indices:

* per outer loop: ``m`` sample indices, then one draw selecting the snapshot;
* option 1 only: the output position, drawn up front from a jumped copy of
  the same seeded stream so the sample indices do not depend on the option.

Every solver performs ``S * m`` update steps grouped into ``S`` outer loops,
so traces from different solvers line up on the same ``(s, t)`` grid.
"""

from __future__ import annotations

import csv
import hashlib
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .core import DesignProblem, full_gradient
from .mirror import MirrorMap, SquaredL2


class StepSizeWarning(UserWarning):
    """The step size exceeds the sufficient stability bound."""


class NonFiniteIterateError(FloatingPointError):
    """An update produced NaN or inf; carries the last finite iterate."""

    def __init__(self, message, last_beta=None, s=None, t=None):
        super().__init__(message)
        self.last_beta = last_beta
        self.s = s
        self.t = t


@dataclass(frozen=True, eq=False)
class SolverConfig:
    eta: float
    m: int
    S: int
    option: int = 2
    seed: int = 0
    init_dual_coeff: Optional[np.ndarray] = None
    record_every: int = 1
    keep_iterates: bool = False
    radius_k: Optional[float] = None

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if int(self.m) < 1 or int(self.S) < 1:
            raise ValueError(f"need m >= 1 and S >= 1, got m={self.m}, S={self.S}")
        if self.option not in (1, 2):
            raise ValueError(f"option must be 1 or 2, got {self.option!r}")
        if int(self.record_every) < 1:
            raise ValueError("record_every must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "S", int(self.S))
        object.__setattr__(self, "seed", int(self.seed))
        if self.init_dual_coeff is not None:
            a = np.array(self.init_dual_coeff, dtype=float).reshape(-1)
            a.setflags(write=False)
            object.__setattr__(self, "init_dual_coeff", a)

    def replace(self, **changes) -> "SolverConfig":
        fields = dict(
            eta=self.eta, m=self.m, S=self.S, option=self.option, seed=self.seed,
            init_dual_coeff=self.init_dual_coeff, record_every=self.record_every,
            keep_iterates=self.keep_iterates, radius_k=self.radius_k,
        )
        fields.update(changes)
        return SolverConfig(**fields)

    def to_dict(self) -> dict:
        return {
            "eta": self.eta, "m": self.m, "S": self.S, "option": self.option,
            "seed": self.seed,
            "init_dual_coeff": None if self.init_dual_coeff is None else self.init_dual_coeff.tolist(),
            "record_every": self.record_every, "radius_k": self.radius_k,
        }


class TraceRecord(NamedTuple):
    s: int
    t: int
    F: float
    psi: float
    dual_residual: float
    inf_norm: float


TRACE_COLUMNS = TraceRecord._fields


@dataclass(eq=False)
class SolverRun:
    """Result of one solver run.

    ``snapshots[s]`` is the reference point after outer loop ``s``
    (``snapshots[0]`` is the initial point). For solvers without a snapshot
    it is the iterate at the end of loop ``s``.
    """

    solver: str
    final_beta: np.ndarray
    trace: list
    snapshots: np.ndarray
    rng_transcript_hash: str
    config: SolverConfig
    iterates: Optional[np.ndarray] = None
    output_index: Optional[int] = None
    mirror: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def B_observed(self) -> float:
        # dual norm ||grad psi(beta)||_2 is stored alongside each record
        return float(max(self.extra.get("dual_norms", [math.nan])))

    @property
    def K_observed(self) -> float:
        return float(max(r.inf_norm for r in self.trace))

    def trace_array(self) -> np.ndarray:
        return np.array([tuple(r) for r in self.trace], dtype=float)


def step_size_bound(alpha: float, L: float) -> float:
    """Sufficient step size ``alpha / (24 L)`` for the sublinear rate."""
    if not (alpha > 0 and L > 0):
        raise ValueError(f"alpha and L must be positive, got alpha={alpha}, L={L}")
    return alpha / (24.0 * L)


def _vr_direction(xi, resid, snap_resid, snapshot_grad):
    # grad f_i(b) - grad f_i(snap) + grad F(snap), with both sample
    # gradients sharing the factor x_i
    return xi * (resid - snap_resid) + snapshot_grad


def variance_reduced_direction(prob: DesignProblem, i: int, beta, snapshot, snapshot_grad) -> np.ndarray:
    """SVRG direction ``grad f_i(beta) - grad f_i(snapshot) + grad F(snapshot)``.

    ``i`` is 0-based and ``snapshot_grad`` must be ``full_gradient(prob, snapshot)``.
    """
    if not 0 <= i < prob.n:
        raise IndexError(f"sample index {i} out of range for n={prob.n}")
    xi, yi = prob.x_matrix[i], float(prob.y[i])
    return _vr_direction(
        xi, float(xi @ np.asarray(beta, dtype=float)) - yi,
        float(xi @ np.asarray(snapshot, dtype=float)) - yi,
        np.asarray(snapshot_grad, dtype=float),
    )


def initial_point(prob: DesignProblem, psi: MirrorMap, cfg: SolverConfig):
    """Return ``(beta0, dual0)`` with ``dual0 = X^T a`` in col(X^T)."""
    if cfg.init_dual_coeff is None:
        dual = np.zeros(prob.p)
    else:
        a = cfg.init_dual_coeff
        if a.shape != (prob.n,):
            raise ValueError(f"init_dual_coeff must have length n={prob.n}")
        dual = prob.x_matrix.T @ a
    return psi.grad_inverse(dual), dual


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


class _Recorder:
    def __init__(self, prob, psi, cfg, track_dual=True):
        self.prob = prob
        self.psi = psi
        self.every = cfg.record_every
        self.keep = cfg.keep_iterates
        self.track_dual = track_dual
        self.records = []
        self.dual_norms = []
        self.iterates = []

    def __call__(self, s, t, beta, dual):
        x = self.prob.x_matrix
        r = x @ beta - self.prob.y
        F = float(r @ r) / (2 * self.prob.n)
        if self.track_dual:
            psi_val = self.psi.psi(beta)
            res = float(np.linalg.norm(self.prob.spectral.null_component(dual)))
            self.dual_norms.append(float(np.linalg.norm(dual)))
        else:
            psi_val = math.nan
            res = math.nan
        self.records.append(TraceRecord(s, t, F, psi_val, res, float(np.max(np.abs(beta)))))
        if self.keep:
            self.iterates.append(beta.copy())


def _warn_step(prob, psi, cfg):
    k = cfg.radius_k
    if k is None:
        sp = prob.spectral
        b_ls = sp.row_basis @ ((sp.col_basis.T @ prob.y) / sp.singular_values)
        k = max(1.0, float(np.max(np.abs(b_ls))))
    try:
        alpha = psi.strong_convexity_alpha(k)
    except (ValueError, NotImplementedError):
        return
    if alpha > 0 and cfg.eta >= step_size_bound(alpha, prob.smoothness_l):
        warnings.warn(
            f"eta={cfg.eta:g} >= alpha/(24L)={step_size_bound(alpha, prob.smoothness_l):.3g} "
            f"(alpha at K={k:g}); convergence is not guaranteed by the sublinear-rate bound",
            StepSizeWarning, stacklevel=3,
        )


def _guard(beta, last, s, t):
    """Raise if ``beta`` is not finite; otherwise return it as the new last finite point."""
    if not np.all(np.isfinite(beta)):
        raise NonFiniteIterateError(
            f"non-finite iterate detected at outer loop {s}, inner step {t}",
            last_beta=None if last is None else last.copy(), s=s, t=t,
        )
    return beta


def _finish(name, rec, snapshots, final, hasher, cfg, psi, output_index=None):
    run = SolverRun(
        solver=name,
        final_beta=final,
        trace=rec.records,
        snapshots=np.array(snapshots),
        rng_transcript_hash=hasher.hexdigest(),
        config=cfg,
        iterates=np.array(rec.iterates) if rec.keep else None,
        output_index=output_index,
        mirror=psi.spec() if psi is not None else "",
    )
    run.extra["dual_norms"] = rec.dual_norms
    return run


def _output_index(cfg, hasher):
    """Option 1 output position, drawn up front from a jumped copy of the stream.

    Using a separate substream keeps the sample indices identical across
    options, so option 1 and option 2 traces agree until the first restart.
    """
    if cfg.option != 1:
        return None
    sub = np.random.Generator(np.random.Philox(cfg.seed).jumped())
    k = int(sub.integers(0, cfg.S * cfg.m))
    hasher.update(np.int64(k).tobytes())
    return k


def _draw_outer(rng, hasher, n, m, with_pick=True):
    idx = rng.integers(0, n, size=m)
    hasher.update(idx.astype(np.int64).tobytes())
    if not with_pick:
        return idx.tolist(), None
    pick = int(rng.integers(0, m))
    hasher.update(np.int64(pick).tobytes())
    return idx.tolist(), pick


def run_vrsmd(prob: DesignProblem, psi: MirrorMap, cfg: SolverConfig) -> SolverRun:
    """Variance-reduced stochastic mirror descent.

    Each outer loop caches the full gradient at the snapshot, takes ``m``
    dual steps ``grad psi(b_{t+1}) = grad psi(b_t) - eta v_t`` with the SVRG
    direction ``v_t``, and picks the next snapshot uniformly among the inner
    iterates ``b_1..b_m``. Option 1 continues from ``b_{m+1}`` and outputs a
    uniformly chosen inner iterate; option 2 restarts from the snapshot and
    outputs the last snapshot.

    Parameters
    ----------
    prob : DesignProblem
    psi : MirrorMap
    cfg : SolverConfig
        ``init_dual_coeff`` ``a`` sets ``grad psi(b_0) = X^T a``.

    Returns
    -------
    SolverRun

    Raises
    ------
    NonFiniteIterateError
        If an iterate overflows; the error carries the last finite iterate.
    vrsmd.mirror.MirrorDomainError
        If an iterate leaves the mirror map's domain.
    """
    _warn_step(prob, psi, cfg)
    n, m, S, eta = prob.n, cfg.m, cfg.S, cfg.eta
    x, y = prob.x_matrix, prob.y
    rows = list(x)
    yl = y.tolist()
    inv = psi.grad_inverse
    rng = _rng(cfg.seed)
    hasher = hashlib.sha256()

    beta, dual = initial_point(prob, psi, cfg)
    psi.check_domain(beta)
    last = _guard(beta, None, 0, 0)
    rec = _Recorder(prob, psi, cfg)
    rec(0, 0, beta, dual)
    snapshots = [beta.copy()]
    snap, snap_dual = beta, dual

    out_beta = None
    out_index = _output_index(cfg, hasher)

    step = 0
    for s in range(1, S + 1):
        snap_resid = x @ snap - y
        g = x.T @ snap_resid / n
        snap_resid = snap_resid.tolist()
        idx, pick = _draw_outer(rng, hasher, n, m)
        new_snap = new_snap_dual = None
        for t in range(m):
            if t == pick:
                new_snap, new_snap_dual = beta, dual
            if step == out_index:
                out_beta = beta
            i = idx[t]
            xi = rows[i]
            v = _vr_direction(xi, float(xi @ beta) - yl[i], snap_resid[i], g)
            dual = dual - eta * v
            beta = inv(dual)
            step += 1
            if (t + 1) % cfg.record_every == 0:
                last = _guard(beta, last, s, t + 1)
                rec(s, t + 1, beta, dual)
        last = _guard(beta, last, s, m)
        psi.check_domain(beta)
        snap, snap_dual = new_snap, new_snap_dual
        snapshots.append(snap.copy())
        if cfg.option == 2:
            beta, dual = snap, snap_dual

    final = snap if cfg.option == 2 else out_beta
    return _finish("vrsmd", rec, snapshots, final.copy(), hasher, cfg, psi, out_index)


def run_svrg(prob: DesignProblem, cfg: SolverConfig) -> SolverRun:
    """SVRG in the primal, ``w <- w - eta v``, on the shared sampling schedule."""
    psi = SquaredL2()
    _warn_step(prob, psi, cfg)
    n, m, S, eta = prob.n, cfg.m, cfg.S, cfg.eta
    x, y = prob.x_matrix, prob.y
    rows = list(x)
    yl = y.tolist()
    rng = _rng(cfg.seed)
    hasher = hashlib.sha256()

    w = np.zeros(prob.p) if cfg.init_dual_coeff is None else x.T @ cfg.init_dual_coeff
    last = _guard(w, None, 0, 0)
    rec = _Recorder(prob, psi, cfg)
    rec(0, 0, w, w)
    snapshots = [w.copy()]
    w_snap = w

    out_w = None
    out_index = _output_index(cfg, hasher)

    step = 0
    for s in range(1, S + 1):
        snap_resid = x @ w_snap - y
        mu = x.T @ snap_resid / n
        snap_resid = snap_resid.tolist()
        idx, pick = _draw_outer(rng, hasher, n, m)
        chosen = None
        for t in range(m):
            if t == pick:
                chosen = w
            if step == out_index:
                out_w = w
            i = idx[t]
            xi = rows[i]
            w = w - eta * (xi * ((float(xi @ w) - yl[i]) - snap_resid[i]) + mu)
            step += 1
            if (t + 1) % cfg.record_every == 0:
                last = _guard(w, last, s, t + 1)
                rec(s, t + 1, w, w)
        last = _guard(w, last, s, m)
        w_snap = chosen
        snapshots.append(w_snap.copy())
        if cfg.option == 2:
            w = w_snap

    final = w_snap if cfg.option == 2 else out_w
    return _finish("svrg", rec, snapshots, final.copy(), hasher, cfg, psi, out_index)


def run_smd(prob: DesignProblem, psi: MirrorMap, cfg: SolverConfig) -> SolverRun:
    """Plain stochastic mirror descent with constant step (no variance reduction)."""
    _warn_step(prob, psi, cfg)
    n, m, S, eta = prob.n, cfg.m, cfg.S, cfg.eta
    x, y = prob.x_matrix, prob.y
    rows = list(x)
    yl = y.tolist()
    inv = psi.grad_inverse
    rng = _rng(cfg.seed)
    hasher = hashlib.sha256()

    beta, dual = initial_point(prob, psi, cfg)
    psi.check_domain(beta)
    last = _guard(beta, None, 0, 0)
    rec = _Recorder(prob, psi, cfg)
    rec(0, 0, beta, dual)
    snapshots = [beta.copy()]
    for s in range(1, S + 1):
        idx, _ = _draw_outer(rng, hasher, n, m, with_pick=False)
        for t in range(m):
            i = idx[t]
            xi = rows[i]
            dual = dual - eta * (xi * (float(xi @ beta) - yl[i]))
            beta = inv(dual)
            if (t + 1) % cfg.record_every == 0:
                last = _guard(beta, last, s, t + 1)
                rec(s, t + 1, beta, dual)
        last = _guard(beta, last, s, m)
        psi.check_domain(beta)
        snapshots.append(beta.copy())
    return _finish("smd", rec, snapshots, beta.copy(), hasher, cfg, psi)


def run_mirror_descent(prob: DesignProblem, psi: MirrorMap, cfg: SolverConfig) -> SolverRun:
    """Full-batch mirror descent; consumes no randomness."""
    _warn_step(prob, psi, cfg)
    m, S, eta = cfg.m, cfg.S, cfg.eta
    beta, dual = initial_point(prob, psi, cfg)
    psi.check_domain(beta)
    last = _guard(beta, None, 0, 0)
    rec = _Recorder(prob, psi, cfg)
    rec(0, 0, beta, dual)
    snapshots = [beta.copy()]
    for s in range(1, S + 1):
        for t in range(m):
            dual = dual - eta * full_gradient(prob, beta)
            beta = psi.grad_inverse(dual)
            last = _guard(beta, last, s, t + 1)
            if (t + 1) % cfg.record_every == 0:
                rec(s, t + 1, beta, dual)
        psi.check_domain(beta)
        snapshots.append(beta.copy())
    return _finish("md", rec, snapshots, beta.copy(), hashlib.sha256(), cfg, psi)


def run_hadamard_gd(prob: DesignProblem, cfg: SolverConfig, init_scale: float) -> SolverRun:
    """Gradient descent on ``beta = u*u - v*v`` started from ``u = v = init_scale``.

    The objective is ``||X (u*u - v*v) - y||^2 / (2n)``. The trace's ``psi``
    and ``dual_residual`` columns are NaN since no mirror map is involved.
    """
    if not init_scale >= 0:
        raise ValueError(f"init_scale must be nonnegative, got {init_scale}")
    m, S, eta, n = cfg.m, cfg.S, cfg.eta, prob.n
    x, y = prob.x_matrix, prob.y
    u = np.full(prob.p, float(init_scale))
    v = u.copy()
    beta = u * u - v * v
    last = beta
    rec = _Recorder(prob, None, cfg, track_dual=False)
    rec(0, 0, beta, None)
    snapshots = [beta.copy()]
    for s in range(1, S + 1):
        for t in range(m):
            g = x.T @ (x @ beta - y) / n
            u = u - eta * 2.0 * u * g
            v = v + eta * 2.0 * v * g
            beta = u * u - v * v
            last = _guard(beta, last, s, t + 1)
            if (t + 1) % cfg.record_every == 0:
                rec(s, t + 1, beta, None)
        snapshots.append(beta.copy())
    run = _finish("hadamard", rec, snapshots, beta.copy(), hashlib.sha256(), cfg, None)
    run.extra["init_scale"] = float(init_scale)
    return run



SOLVERS = ("vrsmd", "svrg", "smd", "md", "hadamard")


def run_solver(name: str, prob: DesignProblem, psi: MirrorMap, cfg: SolverConfig, init_scale: float = 1e-3) -> SolverRun:
    if name == "vrsmd":
        return run_vrsmd(prob, psi, cfg)
    if name == "svrg":
        return run_svrg(prob, cfg)
    if name == "smd":
        return run_smd(prob, psi, cfg)
    if name == "md":
        return run_mirror_descent(prob, psi, cfg)
    if name == "hadamard":
        return run_hadamard_gd(prob, cfg, init_scale)
    raise ValueError(f"unknown solver {name!r}; choose from {', '.join(SOLVERS)}")


def write_trace_csv(run: SolverRun, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for r in run.trace:
            w.writerow([r.s, r.t] + [repr(float(v)) for v in r[2:]])


def read_trace_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != TRACE_COLUMNS:
        raise ValueError(f"{path}: not a trace file")
    return [TraceRecord(int(r[0]), int(r[1]), *map(float, r[2:])) for r in rows[1:]]
