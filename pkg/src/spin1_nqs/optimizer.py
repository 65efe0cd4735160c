"""Natural gradient descent with L-curve regularisation, ADAM/YOGI, and run drivers.

Both losses give conjugate gradients of the form ``F = J^H v`` with ``v``
orthogonal to ``psi``, hence ``F = M^H w`` with the centred Jacobian ``M``
and ``w = sqrt(N) v``.  When the ansatz has more parameters than sector rows
the regularised solve uses the push-through identity

    (M^H M + eps)^-1 M^H w = M^H (M M^H + eps)^-1 w,

which replaces an N_p x N_p factorisation by a rows x rows one.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh
from scipy.linalg.blas import zherk

from .eigensolver import ground_states, select_target
from .hamiltonian import build_hamiltonian
from .hilbert import enumerate_sz0_basis, parity_reduction
from .loss_geometry import (DEFAULT_CUTOFF, QgtReport, energy_terms, exact_state,
                            infidelity_terms, qgt_report_from_jacobian, rank_at_cutoff)
from .nqs import NonFiniteError, RbmShape, init_params, save_checkpoint
from .runio import write_csv, write_json

log = logging.getLogger(__name__)

EPS_MIN, EPS_MAX = 1e-12, 1e-2
HALDANE_GRID = tuple(float(x) for x in np.logspace(-8, -4, 12))
CRITICAL_GRID = tuple(float(x) for x in np.logspace(-6, -2, 12))

TRACE_COLUMNS = ("iteration", "loss", "grad_norm", "epsilon", "learning_rate", "step_norm",
                 "rank", "lcurve_flag", "infidelity", "rel_energy_error")


class SolveError(LinAlgError):
    """Regularised metric not positive definite; raise epsilon."""


class TrainingAborted(RuntimeError):
    def __init__(self, message: str, trace: "RunTrace"):
        super().__init__(message)
        self.trace = trace


# --- configuration ----------------------------------------------------------

@dataclass(frozen=True)
class ModelConfig:
    length: int
    theta: float
    coupling: float = 1.0
    parity: str = "even"
    alpha: int = 1


@dataclass
class NgdConfig:
    iterations: int = 15000
    learning_rate: float = 1e-2
    lr_decay: float = 0.9999
    lr_floor: float = 0.1  # fraction of the initial rate
    epsilon: float | None = None  # fixed value; None selects by L-curve
    epsilon_grid: tuple[float, ...] = HALDANE_GRID
    lcurve_every: int = 100
    rank_cutoff: float = DEFAULT_CUTOFF
    diagnostics_every: int = 100
    seed: int = 0
    init_scale: float = 1e-2

    def __post_init__(self):
        if not 1e-5 <= self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in [1e-5, 1]")
        if not 0.0 < self.lr_decay <= 1.0 or not 0.0 <= self.lr_floor <= 1.0:
            raise ValueError("lr_decay in (0, 1], lr_floor in [0, 1]")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        self.epsilon_grid = tuple(float(x) for x in self.epsilon_grid)
        if self.epsilon is None and (len(self.epsilon_grid) < 8 or min(self.epsilon_grid) <= 0):
            raise ValueError("L-curve grid needs at least 8 positive candidates")
        if self.iterations < 0 or self.lcurve_every < 1 or self.diagnostics_every < 1:
            raise ValueError("iteration counts must be non-negative, cadences positive")

    def learning_rate_at(self, iteration: int) -> float:
        return self.learning_rate * max(self.lr_decay ** iteration, self.lr_floor)


@dataclass
class AdamYogiConfig:
    iterations: int = 120000
    adam_steps: int = 3000
    adam_lr: float = 5e-4
    yogi_lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    rank_cutoff: float = DEFAULT_CUTOFF
    diagnostics_every: int = 1000
    seed: int = 0
    init_scale: float = 1e-2

    def __post_init__(self):
        for lr in (self.adam_lr, self.yogi_lr):
            if not 1e-5 <= lr <= 1.0:
                raise ValueError("learning rates must lie in [1e-5, 1]")
        if self.iterations < 0 or self.adam_steps < 0 or self.diagnostics_every < 1:
            raise ValueError("iteration counts must be non-negative")


# --- natural gradient -------------------------------------------------------

def _cholesky(a: np.ndarray, eps: float, lower: bool = True):
    shifted = a + eps * np.eye(a.shape[0])
    try:
        return cho_factor(shifted, lower=lower, check_finite=True)
    except LinAlgError as exc:
        raise SolveError(f"G + {eps:.1e} I is not positive definite; increase epsilon") from exc


def ngd_step(params: np.ndarray, F: np.ndarray, G: np.ndarray, lr: float, eps: float) -> np.ndarray:
    """params - lr (G + eps I)^-1 F via a Cholesky factorisation."""
    F = np.asarray(F)
    if G.shape != (F.size, F.size) or params.shape != F.shape:
        raise ValueError("params, F and G dimensions disagree")
    if not np.any(F):
        return params.copy()
    delta = cho_solve(_cholesky(G, eps), F)
    return params - lr * delta


def _gram_upper(m: np.ndarray, primal: bool) -> np.ndarray:
    """Upper triangle of M^H M (primal) or M M^H via a Hermitian rank-k update."""
    a = np.asarray(m, dtype=complex, order="F")
    return zherk(1.0, a, trans=2 if primal else 0, lower=0)


def natural_direction(m: np.ndarray, w: np.ndarray, eps: float) -> np.ndarray:
    """(M^H M + eps)^-1 M^H w, factorising whichever Gram matrix is smaller."""
    rows, n_params = m.shape
    if n_params <= rows:
        return cho_solve(_cholesky(_gram_upper(m, True), eps, lower=False), m.conj().T @ w)
    return m.conj().T @ cho_solve(_cholesky(_gram_upper(m, False), eps, lower=False), w)


def gram_spectrum(m: np.ndarray, w: np.ndarray):
    """Spectrum of the smaller Gram matrix and the power of F = M^H w per eigenvector.

    The nonzero eigenvalues are those of G = M^H M; the rest of G's spectrum
    is zero and carries no gradient weight.
    """
    rows, n_params = m.shape
    primal = n_params <= rows
    lam, vecs = eigh(_gram_upper(m, primal), lower=False, driver="evd")
    if primal:
        power = np.abs(vecs.conj().T @ (m.conj().T @ w)) ** 2
    else:
        power = np.clip(lam, 0.0, None) * np.abs(vecs.conj().T @ w) ** 2
    return np.clip(lam, 0.0, None), power


# --- L-curve -----------------------------------------------------------------

@dataclass
class LCurveChoice:
    epsilon: float
    flagged: bool
    reason: str
    grid: np.ndarray
    residual_norms: np.ndarray
    solution_norms: np.ndarray
    curvature: np.ndarray  # signed, NaN at the two ends


def _menger(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Signed Menger curvature and |sin| of the turning angle at interior points."""
    kappa = np.full(x.size, np.nan)
    sine = np.zeros(x.size)
    for i in range(1, x.size - 1):
        ax, ay = x[i] - x[i - 1], y[i] - y[i - 1]
        bx, by = x[i + 1] - x[i], y[i + 1] - y[i]
        cross = ax * by - ay * bx
        la, lb = math.hypot(ax, ay), math.hypot(bx, by)
        lc = math.hypot(x[i + 1] - x[i - 1], y[i + 1] - y[i - 1])
        if la * lb * lc == 0.0:
            kappa[i] = 0.0
            continue
        kappa[i] = 2.0 * cross / (la * lb * lc)
        sine[i] = abs(cross) / (la * lb)
    return kappa, sine


def lcurve_from_spectrum(eigenvalues, power, grid) -> LCurveChoice:
    """Corner of the log-log (residual, solution) curve for a metric given spectrally.

    residual^2 = sum eps^2 p/(lam+eps)^2, solution^2 = sum p/(lam+eps)^2.
    The corner is the largest positive (convex) signed curvature along
    increasing eps; without a convex point the largest |curvature| knee is
    used, and a degenerate curve falls back to the log-median of the grid.
    """
    grid = np.sort(np.asarray(grid, dtype=float))
    if grid.size < 8 or grid[0] <= 0:
        raise ValueError("grid needs at least 8 positive candidates")
    lam = np.asarray(eigenvalues, dtype=float)[None, :]
    p = np.asarray(power, dtype=float)[None, :]
    e = grid[:, None]
    sol = np.sqrt(np.sum(p / (lam + e) ** 2, axis=1))
    res = np.sqrt(np.sum(e**2 * p / (lam + e) ** 2, axis=1))
    median = float(np.exp(np.median(np.log(grid))))
    nan = np.full(grid.size, np.nan)
    if not (np.all(res > 0) and np.all(sol > 0) and np.all(np.isfinite(res)) and np.all(np.isfinite(sol))):
        return LCurveChoice(median, True, "zero or non-finite norms", grid, res, sol, nan)
    kappa, sine = _menger(np.log(res), np.log(sol))
    if np.nanmax(sine) < 1e-9:
        return LCurveChoice(median, True, "collinear curve", grid, res, sol, kappa)
    inner = kappa[1:-1]
    if np.any(inner > 0):
        i = 1 + int(np.argmax(np.where(inner > 0, inner, -np.inf)))
        return LCurveChoice(float(grid[i]), False, "corner", grid, res, sol, kappa)
    i = 1 + int(np.argmax(np.abs(inner)))
    return LCurveChoice(float(grid[i]), False, "knee", grid, res, sol, kappa)


def lcurve_select_epsilon(G: np.ndarray, F: np.ndarray, grid) -> LCurveChoice:
    """L-curve choice of the Tikhonov constant for (G + eps I) delta = F."""
    lam, vecs = eigh(0.5 * (G + G.conj().T), driver="evd")
    power = np.abs(vecs.conj().T @ np.asarray(F)) ** 2
    return lcurve_from_spectrum(np.clip(lam, 0.0, None), power, grid)


def clamp_epsilon(eps: float) -> float:
    if eps < EPS_MIN or eps > EPS_MAX:
        clamped = min(max(eps, EPS_MIN), EPS_MAX)
        log.info("epsilon %.3e clamped to %.3e", eps, clamped)
        return clamped
    return eps


# --- ADAM / YOGI ---------------------------------------------------------------

@dataclass
class MomentState:
    m: np.ndarray  # first moment over 2 N_p reals
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n_params: int) -> "MomentState":
        return cls(np.zeros(2 * n_params), np.zeros(2 * n_params), 0)


@dataclass(frozen=True)
class MomentHyper:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def _real_gradient(F: np.ndarray) -> np.ndarray:
    # dL/dRe = 2 Re F, dL/dIm = 2 Im F for F = dL/dtheta*
    return 2.0 * np.concatenate([F.real, F.imag])


def _moment_update(state, params, F, hyper, yogi):
    g = _real_gradient(np.asarray(F))
    if state.m.shape != g.shape:
        raise ValueError("moment state does not match the parameter count")
    t = state.t + 1
    m = hyper.beta1 * state.m + (1 - hyper.beta1) * g
    g2 = g * g
    if yogi:
        v = state.v - (1 - hyper.beta2) * np.sign(state.v - g2) * g2
    else:
        v = hyper.beta2 * state.v + (1 - hyper.beta2) * g2
    m_hat = m / (1 - hyper.beta1**t)
    v_hat = v / (1 - hyper.beta2**t)
    step = hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps)
    n = params.size
    return MomentState(m, v, t), params - (step[:n] + 1j * step[n:])


def adam_step(state: MomentState, params: np.ndarray, F: np.ndarray, hyper: MomentHyper):
    return _moment_update(state, params, F, hyper, yogi=False)


def yogi_step(state: MomentState, params: np.ndarray, F: np.ndarray, hyper: MomentHyper):
    return _moment_update(state, params, F, hyper, yogi=True)


# --- run drivers ---------------------------------------------------------------

@dataclass
class Problem:
    model: ModelConfig
    shape: RbmShape
    basis: object
    ham: object
    reduction: object
    target: np.ndarray
    target_red: np.ndarray
    target_norm2: float
    energy: float
    degeneracy: int
    d_q: int
    d_q_uniform: int


def prepare_problem(model: ModelConfig) -> Problem:
    basis = enumerate_sz0_basis(model.length)
    ham = build_hamiltonian(basis, model.theta, model.coupling)
    pairs = ground_states(ham, k=min(4, basis.dimension))
    target = select_target(pairs, basis, model.parity)
    red = parity_reduction(basis, model.parity)
    dim, even, odd = basis.parity_dimensions()
    d_q = {"even": even, "odd": odd, "none": dim}[model.parity]
    return Problem(model, RbmShape(model.length, model.alpha), basis, ham, red, target.vector,
                   red.project(target.vector), float(np.vdot(target.vector, target.vector).real),
                   target.energy, target.degeneracy, d_q, (dim + 1) // 2)


@dataclass
class RunTrace:
    records: list[tuple]
    shape: RbmShape
    parity: str
    params: np.ndarray
    manifest: dict
    report: QgtReport | None = None
    checkpoint: Path | None = None
    aborted: bool = False
    columns: tuple[str, ...] = TRACE_COLUMNS

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([np.nan if r[i] is None else r[i] for r in self.records], dtype=float)

    @property
    def final_loss(self) -> float:
        return float(self.records[-1][1])

    @property
    def final_infidelity(self) -> float:
        val = self.records[-1][self.columns.index("infidelity")]
        return float(val) if val is not None else float("nan")

    def report_dict(self) -> dict:
        out = {"manifest": self.manifest, "final_loss": self.final_loss,
               "final_infidelity": self.final_infidelity, "aborted": self.aborted,
               "n_records": len(self.records)}
        if self.report is not None:
            out["qgt"] = self.report.summary()
        return out

    def save(self, out_dir, seed: int, extra: dict | None = None) -> dict[str, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {"trace": write_csv(out_dir / "trace.csv", list(self.columns), self.records)}
        last = self.records[-1] if self.records else None
        side = {"iteration": int(last[0]) if last else 0}
        side.update(extra or {})
        paths["checkpoint"] = save_checkpoint(out_dir / "params.ckpt", self.shape, self.params,
                                              self.parity, seed, extra=side)
        self.checkpoint = paths["checkpoint"]
        paths["report"] = write_json(out_dir / "report.json", self.report_dict())
        return paths


def _record(it, loss, grad_norm, eps=None, lr=None, step=None, rank=None, flag=None,
            infid=None, rel=None):
    return (int(it), float(loss), float(grad_norm), eps, lr, step, rank, flag, infid, rel)


class _Evaluator:
    """Loss, residual and centred Jacobian at given parameters."""

    def __init__(self, problem: Problem, kind: str):
        self.p = problem
        self.kind = kind

    def __call__(self, params):
        p = self.p
        state = exact_state(p.shape, params, p.model.parity, p.basis, reduction=p.reduction)
        t = infidelity_terms(state, p.target_red, p.target_norm2)
        out = {"state": state, "infidelity": t.loss}
        if self.kind == "infidelity":
            out["loss"], v = t.loss, t.residual
        else:
            e = energy_terms(state, p.ham)
            out["loss"], v = e.energy, e.residual
            out["rel"] = abs(e.energy - p.energy) / abs(p.energy) if p.energy else abs(e.energy)
        out["F"] = state.jac.conj().T @ v
        out["w"] = math.sqrt(state.norm2) * v
        if not (np.isfinite(out["loss"]) and np.all(np.isfinite(out["F"]))):
            raise NonFiniteError("loss or gradient became non-finite")
        return out


def _final_report(problem: Problem, ev: dict, cutoff: float) -> QgtReport:
    return qgt_report_from_jacobian(ev["state"].centered_jacobian(), problem.d_q, cutoff,
                                    problem.d_q_uniform)


def _manifest(problem: Problem, opt, kind: str, seed: int) -> dict:
    m = problem.model
    return {"kind": kind, "model": asdict(m), "optimizer": type(opt).__name__,
            "optimizer_config": asdict(opt), "seed": seed, "target_energy": problem.energy,
            "target_degeneracy": problem.degeneracy, "parity": m.parity,
            "n_params": problem.shape.n_params, "sector_dimension": problem.basis.dimension,
            "d_q": problem.d_q, "d_q_uniform": problem.d_q_uniform}


def _abort(trace: RunTrace, out_dir, seed, exc, extra) -> None:
    trace.aborted = True
    trace.manifest["abort_reason"] = str(exc)
    if out_dir is not None:
        trace.save(out_dir, seed, extra)
    raise TrainingAborted(f"training aborted: {exc}", trace) from exc


def _run_ngd(problem: Problem, opt: NgdConfig, kind: str, params, start, epsilon, out_dir,
             log_every):
    shape = problem.shape
    if params is None:
        params = init_params(shape, opt.seed, opt.init_scale)
    params = np.array(params, dtype=complex)
    evaluate = _Evaluator(problem, kind)
    manifest = _manifest(problem, opt, kind, opt.seed)
    trace = RunTrace([], shape, problem.model.parity, params, manifest)
    eps = epsilon if epsilon is not None else opt.epsilon
    clamps = n_flagged = 0
    t0 = time.perf_counter()
    end = start + opt.iterations
    it = start
    ev = None
    try:
        for it in range(start, end):
            ev = evaluate(params)
            trace.params = params
            m = ev["state"].centered_jacobian()
            rank = flag = None
            lcurve_due = opt.epsilon is None and ((it - start) % opt.lcurve_every == 0 or eps is None)
            diag_due = (it - start) % opt.diagnostics_every == 0
            if lcurve_due or diag_due:
                lam, power = gram_spectrum(m, ev["w"])
                rank = rank_at_cutoff(lam, opt.rank_cutoff)
                if lcurve_due:
                    choice = lcurve_from_spectrum(lam, power, opt.epsilon_grid)
                    new = clamp_epsilon(choice.epsilon)
                    clamps += new != choice.epsilon
                    n_flagged += choice.flagged
                    eps, flag = new, choice.flagged
            lr = opt.learning_rate_at(it)
            while True:
                try:
                    delta = natural_direction(m, ev["w"], eps)
                    break
                except SolveError:
                    if eps >= EPS_MAX:
                        raise
                    eps = min(10 * eps, EPS_MAX)
                    log.warning("iteration %d: escalating epsilon to %.1e", it, eps)
            step = lr * delta
            trace.records.append(_record(it, ev["loss"], np.linalg.norm(ev["F"]), eps, lr,
                                         float(np.linalg.norm(step)), rank, flag,
                                         ev["infidelity"], ev.get("rel")))
            params = params - step
            if log_every and (it - start) % log_every == 0:
                log.info("iter %d loss %.6e eps %.1e lr %.2e", it, ev["loss"], eps, lr)
        ev = evaluate(params)
        trace.params = params
    except (NonFiniteError, FloatingPointError, SolveError) as exc:
        _abort(trace, out_dir, opt.seed, exc, {"epsilon": eps, "iteration": it})
    report = _final_report(problem, ev, opt.rank_cutoff)
    trace.records.append(_record(end, ev["loss"], np.linalg.norm(ev["F"]), rank=report.d_r,
                                 infid=ev["infidelity"], rel=ev.get("rel")))
    trace.report = report
    manifest.update(wall_time=time.perf_counter() - t0, epsilon_final=eps, epsilon_clamps=clamps,
                    lcurve_flagged=n_flagged, start_iteration=start)
    if kind == "energy":
        manifest["energy_window_violations"] = energy_window_violations(trace.column("loss"), start)
    if out_dir is not None:
        trace.save(out_dir, opt.seed, {"epsilon": eps, "learning_rate": opt.learning_rate_at(end)})
    return trace


def energy_window_violations(energies: np.ndarray, start: int = 0, burn_in: int = 1000,
                             window: int = 500, slack: float = 1e-10) -> int:
    """Windows after ``burn_in`` whose closing energy exceeds the opening one."""
    count = 0
    for i in range(max(burn_in - start, 0), energies.size - window, window):
        if energies[i + window] > energies[i] + slack:
            count += 1
            log.warning("energy rose over window starting at iteration %d", start + i)
    return count


def _run_adam_yogi(problem: Problem, opt: AdamYogiConfig, params, start, out_dir, log_every,
                   moments: MomentState | None = None):
    shape = problem.shape
    if params is None:
        params = init_params(shape, opt.seed, opt.init_scale)
    params = np.array(params, dtype=complex)
    evaluate = _Evaluator(problem, "infidelity")
    trace = RunTrace([], shape, problem.model.parity, params,
                     _manifest(problem, opt, "infidelity", opt.seed))
    state = moments or MomentState.zeros(shape.n_params)
    t0 = time.perf_counter()
    end = start + opt.iterations
    it = start
    ev = None
    try:
        for it in range(start, end):
            ev = evaluate(params)
            trace.params = params
            rank = None
            if (it - start) % opt.diagnostics_every == 0:
                lam, _ = gram_spectrum(ev["state"].centered_jacobian(), ev["w"])
                rank = rank_at_cutoff(lam, opt.rank_cutoff)
            yogi = it >= opt.adam_steps
            hyper = MomentHyper(opt.yogi_lr if yogi else opt.adam_lr, opt.beta1, opt.beta2, opt.eps)
            state, new = (yogi_step if yogi else adam_step)(state, params, ev["F"], hyper)
            trace.records.append(_record(it, ev["loss"], np.linalg.norm(ev["F"]), lr=hyper.lr,
                                         step=float(np.linalg.norm(new - params)), rank=rank,
                                         infid=ev["infidelity"]))
            params = new
            if log_every and (it - start) % log_every == 0:
                log.info("iter %d loss %.6e (%s)", it, ev["loss"], "yogi" if yogi else "adam")
        ev = evaluate(params)
        trace.params = params
    except (NonFiniteError, FloatingPointError) as exc:
        _abort(trace, out_dir, opt.seed, exc, {"iteration": it})
    report = _final_report(problem, ev, opt.rank_cutoff)
    trace.records.append(_record(end, ev["loss"], np.linalg.norm(ev["F"]), rank=report.d_r,
                                 infid=ev["infidelity"]))
    trace.report = report
    trace.manifest.update(wall_time=time.perf_counter() - t0, start_iteration=start)
    if out_dir is not None:
        trace.save(out_dir, opt.seed)
    return trace


def run_infidelity_minimization(model: ModelConfig, opt: NgdConfig | AdamYogiConfig, *,
                                params: np.ndarray | None = None, start_iteration: int = 0,
                                epsilon: float | None = None, out_dir=None,
                                problem: Problem | None = None, log_every: int = 0) -> RunTrace:
    """Supervised fit of the RBM to the exact ground state of the requested parity.

    ``params``, ``start_iteration`` and ``epsilon`` resume a run from a
    checkpoint; the learning-rate schedule continues from ``start_iteration``.
    """
    problem = problem or prepare_problem(model)
    if isinstance(opt, AdamYogiConfig):
        return _run_adam_yogi(problem, opt, params, start_iteration, out_dir, log_every)
    return _run_ngd(problem, opt, "infidelity", params, start_iteration, epsilon, out_dir, log_every)


def run_energy_minimization(model: ModelConfig, opt: NgdConfig, *, params: np.ndarray | None = None,
                            start_iteration: int = 0, epsilon: float | None = None, out_dir=None,
                            problem: Problem | None = None, log_every: int = 0) -> RunTrace:
    """Exact-summation energy descent (stochastic reconfiguration without sampling)."""
    problem = problem or prepare_problem(model)
    return _run_ngd(problem, opt, "energy", params, start_iteration, epsilon, out_dir, log_every)
