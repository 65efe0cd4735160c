"""Command-line runner: ``ed``, ``train``, ``sweep-alpha`` and ``report``.

Configuration is a JSON document with the sections below; any command-line
flag overrides the matching file value.

    {
      "model":       {"L": 8, "theta": "afh", "J": 1.0, "parity": "auto"},
      "ansatz":      {"alpha": 10},
      "optimizer":   {"kind": "ngd", "iterations": 15000, "learning_rate": 0.01, ...},
      "diagnostics": {"rank_cutoff": 1e-5, "hessian": false, "observables": false},
      "loss": "infidelity",
      "output_root": null,
      "seed": 0
    }

``theta`` is a phase name (afh, aklt, uls, critical2) or an angle in
radians.  Optimizer keys other than ``kind`` are fields of
:class:`~spin1_nqs.optimizer.NgdConfig` or
:class:`~spin1_nqs.optimizer.AdamYogiConfig`.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .eigensolver import ground_states, parity_label, select_target
from .hamiltonian import build_hamiltonian, dump_coo
from .hessian import MAX_PARAMS, hessian_spectrum, infidelity_hessian, pairing_check
from .hilbert import enumerate_sz0_basis
from .nqs import RbmShape, load_checkpoint
from .observables import correlation_profile
from .optimizer import (CRITICAL_GRID, HALDANE_GRID, AdamYogiConfig, ModelConfig, NgdConfig,
                        TrainingAborted, prepare_problem, run_energy_minimization,
                        run_infidelity_minimization)
from .runio import (count_rows, new_run_dir, output_root, read_csv, read_json, sha256, write_csv,
                    write_json)

log = logging.getLogger("spin1_nqs")

PHASES = {
    "afh": 0.0,
    "aklt": math.atan(1.0 / 3.0),
    "uls": math.pi / 4,
    "critical2": math.atan(2.0),
}
CRITICAL_PHASES = ("uls", "critical2")


class ConfigError(ValueError):
    """Invalid configuration or usage; exit code 2."""


class IntegrityError(RuntimeError):
    """Artifacts disagree with the manifest."""


# --- configuration ----------------------------------------------------------

@dataclass
class ModelSpec:
    L: int = 8
    theta: str | float = "afh"
    J: float = 1.0
    parity: str = "auto"


@dataclass
class AnsatzSpec:
    alpha: int = 2


@dataclass
class DiagnosticsSpec:
    rank_cutoff: float = 1e-5
    hessian: bool = False
    observables: bool = False


@dataclass
class ExperimentConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    ansatz: AnsatzSpec = field(default_factory=AnsatzSpec)
    optimizer: dict = field(default_factory=lambda: {"kind": "ngd"})
    diagnostics: DiagnosticsSpec = field(default_factory=DiagnosticsSpec)
    loss: str = "infidelity"
    output_root: str | None = None
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            cfg = cls(
                model=ModelSpec(**data.get("model", {})),
                ansatz=AnsatzSpec(**data.get("ansatz", {})),
                optimizer=dict(data.get("optimizer", {"kind": "ngd"})),
                diagnostics=DiagnosticsSpec(**data.get("diagnostics", {})),
                loss=data.get("loss", "infidelity"),
                output_root=data.get("output_root"),
                seed=int(data.get("seed", 0)),
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        resolve_theta(self.model.theta)
        if self.model.parity not in ("auto", "even", "odd", "none"):
            raise ConfigError(f"parity must be auto, even, odd or none, got {self.model.parity!r}")
        if not 2 <= int(self.model.L) <= 14:
            raise ConfigError("L must be in [2, 14]")
        if int(self.ansatz.alpha) < 1:
            raise ConfigError("alpha must be >= 1")
        if self.optimizer.get("kind", "ngd") not in ("ngd", "adam_yogi"):
            raise ConfigError("optimizer kind must be ngd or adam_yogi")
        if self.loss not in ("infidelity", "energy"):
            raise ConfigError("loss must be infidelity or energy")
        if self.loss == "energy" and self.optimizer.get("kind", "ngd") != "ngd":
            raise ConfigError("energy minimisation runs with the ngd optimizer only")
        self.optimizer_config()

    def optimizer_config(self) -> NgdConfig | AdamYogiConfig:
        opts = dict(self.optimizer)
        kind = opts.pop("kind", "ngd")
        opts.setdefault("seed", self.seed)
        opts.setdefault("rank_cutoff", self.diagnostics.rank_cutoff)
        try:
            if kind == "adam_yogi":
                return AdamYogiConfig(**opts)
            if "epsilon_grid" not in opts:
                opts["epsilon_grid"] = default_epsilon_grid(self.model.theta)
            return NgdConfig(**opts)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"optimizer: {exc}") from exc


def resolve_theta(spec) -> float:
    if isinstance(spec, str):
        key = spec.strip().lower()
        if key in PHASES:
            return PHASES[key]
        try:
            spec = float(key)
        except ValueError:
            raise ConfigError(f"unknown phase {spec!r}; use one of {sorted(PHASES)} or radians") from None
    theta = float(spec)
    if not -math.pi / 2 < theta < math.pi / 2:
        raise ConfigError(f"theta={theta} outside (-pi/2, pi/2)")
    return theta


def is_critical(spec) -> bool:
    if isinstance(spec, str) and spec.strip().lower() in PHASES:
        return spec.strip().lower() in CRITICAL_PHASES
    return resolve_theta(spec) >= math.pi / 4 - 1e-12


def default_epsilon_grid(spec) -> tuple[float, ...]:
    return CRITICAL_GRID if is_critical(spec) else HALDANE_GRID


def resolve_parity(spec, length: int, parity: str = "auto", coupling: float = 1.0) -> str:
    """Explicit parity passes through; ``auto`` uses the standard sector for each phase and length."""
    if parity != "auto":
        return parity
    name = spec.strip().lower() if isinstance(spec, str) else None
    if name in ("afh", "aklt"):
        return "even"
    if name in CRITICAL_PHASES and length in (8, 10):
        return "odd"
    if name in CRITICAL_PHASES and length == 12:
        return "even"
    basis = enumerate_sz0_basis(length)
    pairs = ground_states(build_hamiltonian(basis, resolve_theta(spec), coupling), k=2)
    for candidate in ("even", "odd"):
        try:
            select_target(pairs, basis, candidate)
            return candidate
        except ValueError:
            continue
    return parity_label(pairs.vectors[:, 0], basis.flip_partner)


def model_config(cfg: ExperimentConfig) -> ModelConfig:
    m = cfg.model
    parity = resolve_parity(m.theta, int(m.L), m.parity, float(m.J))
    return ModelConfig(int(m.L), resolve_theta(m.theta), float(m.J), parity, int(cfg.ansatz.alpha))


# --- manifest ------------------------------------------------------------------

def write_manifest(run_dir: Path, cfg: dict, seed: int, wall_time: float, extra: dict | None = None):
    artifacts = {}
    for path in sorted(run_dir.iterdir()):
        if path.name == "manifest.json" or path.is_dir() or path.name.startswith("."):
            continue
        entry = {"sha256": sha256(path)}
        if path.suffix == ".csv":
            entry["rows"] = count_rows(path)
        artifacts[path.name] = entry
    manifest = {"code_version": f"spin1_nqs {__version__}", "config": cfg, "seed": seed,
                "wall_time": wall_time, "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
                "threads": os.environ.get("OMP_NUM_THREADS"), "artifacts": artifacts}
    manifest.update(extra or {})
    return write_json(run_dir / "manifest.json", manifest)


def verify_manifest(run_dir: Path) -> dict:
    path = run_dir / "manifest.json"
    if not path.exists():
        raise IntegrityError(f"{run_dir}: manifest.json missing")
    try:
        manifest = read_json(path)
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"{path}: corrupt JSON ({exc})") from exc
    for name, entry in manifest.get("artifacts", {}).items():
        art = run_dir / name
        if not art.exists():
            raise IntegrityError(f"{name}: listed in manifest but missing")
        if "rows" in entry and count_rows(art) != entry["rows"]:
            raise IntegrityError(f"{name}: row count {count_rows(art)} != manifest {entry['rows']}")
        if sha256(art) != entry["sha256"]:
            raise IntegrityError(f"{name}: checksum mismatch")
    return manifest


# --- commands --------------------------------------------------------------------

def _resolved(cfg: ExperimentConfig, model: ModelConfig) -> dict:
    out = cfg.to_dict()
    out["resolved"] = {"theta": model.theta, "parity": model.parity}
    return out


def _root(cfg: ExperimentConfig) -> Path:
    # explicit config/flag wins over the environment variable
    return Path(cfg.output_root) if cfg.output_root else output_root("runs")


def cmd_ed(cfg: ExperimentConfig, k: int = 4, dump_hamiltonian: bool = False,
           run_dir: Path | None = None) -> Path:
    t0 = time.perf_counter()
    model = model_config(cfg)
    basis = enumerate_sz0_basis(model.length)
    ham = build_hamiltonian(basis, model.theta, model.coupling)
    pairs = ground_states(ham, k=min(k, basis.dimension))
    target = select_target(pairs, basis, model.parity)
    run_dir = run_dir or new_run_dir(_root(cfg), "ed", cfg.to_dict())
    labels = [parity_label(pairs.vectors[:, i], basis.flip_partner) for i in range(len(pairs.values))]
    write_csv(run_dir / "eigenvalues.csv", ["index", "energy", "parity", "residual"],
              [(i, float(e), labels[i], float(r)) for i, (e, r) in enumerate(zip(pairs.values, pairs.residuals))])
    write_csv(run_dir / "target.csv", ["ordinal", "config", "amplitude"],
              [(n, "".join("+0-"[1 - s] for s in basis.configs[n]), float(a))
               for n, a in enumerate(target.vector)])
    if dump_hamiltonian:
        dump_coo(ham, run_dir / "hamiltonian.coo")
    write_manifest(run_dir, _resolved(cfg, model), cfg.seed, time.perf_counter() - t0,
                   {"target_energy": target.energy, "target_parity": target.parity,
                    "degeneracy": target.degeneracy, "sector_dimension": basis.dimension})
    print(f"ED L={model.length} theta={model.theta:.15g}: E0={pairs.values[0]:.12f} "
          f"(degeneracy {target.degeneracy}, target parity {target.parity}) -> {run_dir}")
    return run_dir


def _run_training(cfg: ExperimentConfig, run_dir: Path, resume: Path | None = None):
    model = model_config(cfg)
    opt = cfg.optimizer_config()
    problem = prepare_problem(model)
    params, start, eps = None, 0, None
    if resume is not None:
        shape, params, parity, _, meta = load_checkpoint(resume)
        if shape != RbmShape(model.length, model.alpha) or parity != model.parity:
            raise ConfigError("checkpoint shape or parity does not match the configuration")
        start, eps = int(meta.get("iteration", 0)), meta.get("epsilon")
    kwargs = dict(params=params, start_iteration=start, out_dir=run_dir, problem=problem, log_every=500)
    if cfg.loss == "energy":
        trace = run_energy_minimization(model, opt, epsilon=eps, **kwargs)
    elif isinstance(opt, NgdConfig):
        trace = run_infidelity_minimization(model, opt, epsilon=eps, **kwargs)
    else:
        trace = run_infidelity_minimization(model, opt, **kwargs)
    return model, problem, trace


def _diagnostics(cfg, model, problem, trace, run_dir: Path) -> dict:
    extra = {}
    rep = trace.report
    write_csv(run_dir / "eigenvalues.csv", ["index", "eigenvalue"], enumerate(rep.eigenvalues))
    if cfg.diagnostics.hessian:
        if problem.shape.n_params > MAX_PARAMS:
            log.warning("Hessian skipped: N_p=%d > %d", problem.shape.n_params, MAX_PARAMS)
        else:
            h = infidelity_hessian(problem.shape, trace.params, model.parity, problem.basis,
                                   problem.target)
            spec = hessian_spectrum(h)
            write_csv(run_dir / "hessian.csv", ["index", "eigenvalue"], enumerate(spec.eigenvalues))
            res = pairing_check(spec.eigenvalues, rep.eigenvalues)
            extra["pairing"] = asdict(res) | {"line": res.line()}
            print(res.line())
    if cfg.diagnostics.observables:
        from .loss_geometry import exact_state
        state = exact_state(problem.shape, trace.params, model.parity, problem.basis, jacobian=False)
        nqs = state.reduction.expand(state.psi) / math.sqrt(state.norm2)
        rows = correlation_profile(problem.target, problem.basis, 0, "ED").rows()
        rows += correlation_profile(nqs, problem.basis, 0, "NQS").rows()
        write_csv(run_dir / "correlations.csv", ["j", "szsz", "source"], rows)
    return extra


def cmd_train(cfg: ExperimentConfig, run_dir: Path | None = None, resume: Path | None = None) -> Path:
    t0 = time.perf_counter()
    run_dir = run_dir or new_run_dir(_root(cfg), "train", cfg.to_dict())
    model = model_config(cfg)
    try:
        model, problem, trace = _run_training(cfg, run_dir, resume)
    except TrainingAborted as exc:
        write_manifest(run_dir, _resolved(cfg, model), cfg.seed, time.perf_counter() - t0,
                       {"status": "aborted", "error": str(exc)})
        raise
    extra = _diagnostics(cfg, model, problem, trace, run_dir)
    report = read_json(run_dir / "report.json")
    report.update(extra)
    write_json(run_dir / "report.json", report)
    write_manifest(run_dir, _resolved(cfg, model), cfg.seed, time.perf_counter() - t0,
                   {"status": "ok", "target_energy": problem.energy, "parity": model.parity})
    rep = trace.report
    print(f"train L={model.length} alpha={model.alpha} parity={model.parity}: loss={trace.final_loss:.3e} "
          f"I={trace.final_infidelity:.3e} d_r={rep.d_r}/{rep.d_q} -> {run_dir}")
    return run_dir


SWEEP_COLUMNS = ["alpha", "n_params", "final_infidelity", "d_r", "d_q", "d_r_over_d_q",
                 "d_r_over_n_params", "status", "run_dir"]


def _sweep_one(args):
    cfg_dict, alpha, sub = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    cfg.ansatz.alpha = alpha
    n_params = RbmShape(int(cfg.model.L), alpha).n_params
    try:
        run_dir = cmd_train(cfg, run_dir=Path(sub))
        rep = read_json(run_dir / "report.json")
        q = rep["qgt"]
        return (alpha, n_params, rep["final_infidelity"], q["d_r"], q["d_q"], q["ratio"],
                q["normalized_rank"], "ok", str(run_dir))
    except Exception as exc:  # recorded, sweep continues
        log.error("alpha=%d failed: %s", alpha, exc)
        return (alpha, n_params, None, None, None, None, None, f"failed: {exc}", str(sub))


def cmd_sweep_alpha(cfg: ExperimentConfig, alphas: list[int], jobs: int = 1) -> Path:
    t0 = time.perf_counter()
    run_dir = new_run_dir(_root(cfg), "sweep", cfg.to_dict() | {"alphas": alphas})
    tasks = []
    for a in alphas:
        sub = run_dir / f"alpha{a:02d}"
        sub.mkdir()
        tasks.append((cfg.to_dict(), a, sub))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_one, tasks))
    else:
        rows = [_sweep_one(t) for t in tasks]
    write_csv(run_dir / "sweep.csv", SWEEP_COLUMNS, rows)
    write_manifest(run_dir, cfg.to_dict() | {"alphas": alphas}, cfg.seed, time.perf_counter() - t0)
    print(f"sweep over alpha={alphas} -> {run_dir / 'sweep.csv'}")
    return run_dir


def cmd_report(run_dir: Path) -> str:
    run_dir = Path(run_dir)
    manifest = verify_manifest(run_dir)
    lines = [f"run {run_dir} ({manifest.get('code_version')}, seed {manifest.get('seed')})"]
    if (run_dir / "sweep.csv").exists():
        header, rows = read_csv(run_dir / "sweep.csv")
        lines.append(",".join(header[:-1]))
        lines += [",".join(r[:-1]) for r in rows]
        return "\n".join(lines)
    if not (run_dir / "report.json").exists():
        _, rows = read_csv(run_dir / "eigenvalues.csv")
        lines.append("ED spectrum: " + ", ".join(f"{float(r[1]):.10f} ({r[2]})" for r in rows))
        lines.append(f"target energy {manifest.get('target_energy')}, parity {manifest.get('target_parity')}")
        lines.append("no training artifacts")
        return "\n".join(lines)
    report = read_json(run_dir / "report.json")
    q = report.get("qgt", {})
    lines.append(f"final loss {report['final_loss']:.6e}, infidelity {report['final_infidelity']:.6e}")
    if q:
        lines.append(f"d_r/d_q = {q['d_r']}/{q['d_q']} = {q['ratio']:.4f}; d_r/N_p = {q['normalized_rank']:.4f}")
    header, rows = read_csv(run_dir / "trace.csv")
    rel = rows[-1][header.index("rel_energy_error")] if rows else ""
    if rel:
        lines.append(f"relative energy error {float(rel):.3e}")
    if report.get("aborted"):
        lines.append(f"run aborted: {report['manifest'].get('abort_reason')}")
    if "pairing" in report:
        lines.append(report["pairing"]["line"])
    return "\n".join(lines)


# --- argument parsing ---------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON configuration file")
    p.add_argument("--L", type=int)
    p.add_argument("--phase", help="afh | aklt | uls | critical2 | angle in radians")
    p.add_argument("--J", type=float)
    p.add_argument("--parity", choices=["auto", "even", "odd", "none"])
    p.add_argument("--seed", type=int)
    p.add_argument("--output-root", help="run directory root (default $SPIN1_NQS_OUTPUT or ./runs)")
    p.add_argument("--threads", type=int, help="BLAS thread count")


def _add_training(p: argparse.ArgumentParser):
    p.add_argument("--alpha", type=int)
    p.add_argument("--optimizer", choices=["ngd", "adam_yogi"])
    p.add_argument("--loss", choices=["infidelity", "energy"])
    p.add_argument("--iterations", type=int)
    p.add_argument("--lr", type=float, help="initial learning rate (ngd)")
    p.add_argument("--epsilon", type=float, help="fixed regularisation instead of the L-curve")
    p.add_argument("--init-scale", type=float, help="std of the initial parameters")
    p.add_argument("--hessian", action="store_true", default=None)
    p.add_argument("--observables", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spin1-nqs", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    ed = sub.add_parser("ed", help="exact ground states")
    _add_common(ed)
    ed.add_argument("--k", type=int, default=4)
    ed.add_argument("--dump-hamiltonian", action="store_true")
    tr = sub.add_parser("train", help="single training run")
    _add_common(tr)
    _add_training(tr)
    tr.add_argument("--resume", type=Path, help="params.ckpt to continue from")
    sw = sub.add_parser("sweep-alpha", help="training runs over hidden densities")
    _add_common(sw)
    _add_training(sw)
    sw.add_argument("--alphas", required=True, help="comma-separated list, e.g. 2,4,6,8,10")
    sw.add_argument("--jobs", type=int, default=1)
    rp = sub.add_parser("report", help="summarise and verify a run directory")
    rp.add_argument("run_dir", type=Path)
    return parser


def config_from_args(args) -> ExperimentConfig:
    data: dict = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    model = data.setdefault("model", {})
    for flag, key in (("L", "L"), ("phase", "theta"), ("J", "J"), ("parity", "parity")):
        if getattr(args, flag, None) is not None:
            model[key] = getattr(args, flag)
    if getattr(args, "alpha", None) is not None:
        data.setdefault("ansatz", {})["alpha"] = args.alpha
    opt = data.setdefault("optimizer", {"kind": "ngd"})
    if getattr(args, "optimizer", None):
        opt["kind"] = args.optimizer
    if getattr(args, "iterations", None) is not None:
        opt["iterations"] = args.iterations
    if getattr(args, "lr", None) is not None:
        opt["learning_rate"] = args.lr
    if getattr(args, "epsilon", None) is not None:
        opt["epsilon"] = args.epsilon
    if getattr(args, "init_scale", None) is not None:
        opt["init_scale"] = args.init_scale
    diag = data.setdefault("diagnostics", {})
    for flag in ("hessian", "observables"):
        if getattr(args, flag, None):
            diag[flag] = True
    for flag, key in (("loss", "loss"), ("seed", "seed"), ("output_root", "output_root")):
        if getattr(args, flag, None) is not None:
            data[key] = getattr(args, flag)
    return ExperimentConfig.from_dict(data)


def _dispatch(args) -> int:
    if args.command == "report":
        print(cmd_report(args.run_dir))
        return 0
    cfg = config_from_args(args)
    if args.command == "ed":
        cmd_ed(cfg, k=args.k, dump_hamiltonian=args.dump_hamiltonian)
    elif args.command == "train":
        cmd_train(cfg, resume=args.resume)
    else:
        try:
            alphas = [int(a) for a in args.alphas.split(",") if a.strip()]
        except ValueError:
            raise ConfigError(f"bad --alphas {args.alphas!r}") from None
        cmd_sweep_alpha(cfg, alphas, jobs=args.jobs)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        with threadpool_limits(limits=getattr(args, "threads", None)):
            return _dispatch(args)
    except ConfigError as exc:
        print(f"spin1-nqs: configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"spin1-nqs: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
