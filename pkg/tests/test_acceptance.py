"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary
(see conftest.py).  The two L=8, alpha=10 training runs take most of the
time; set SPIN1_NQS_ACCEPT_ITERS to shorten them for a dry run (the
thresholds are then not expected to hold).

    pytest tests/test_acceptance.py -v
"""
from __future__ import annotations

import math
import os
import time

import numpy as np
import pytest

from spin1_nqs.aklt import aklt_sector_vector
from spin1_nqs.cli import main as cli_main
from spin1_nqs.eigensolver import ground_states
from spin1_nqs.hamiltonian import build_hamiltonian
from spin1_nqs.hessian import hessian_spectrum, infidelity_hessian, pairing_check
from spin1_nqs.hilbert import enumerate_sz0_basis, sector_parity_dimensions
from spin1_nqs.loss_geometry import (energy_and_gradient, exact_state, infidelity,
                                     infidelity_gradient, qgt, qgt_dense_reference, snapshot)
from spin1_nqs.nqs import RbmShape, init_params, log_derivatives
from spin1_nqs.observables import correlation_profile, string_order
from spin1_nqs.optimizer import ModelConfig, NgdConfig, prepare_problem, run_infidelity_minimization

RESULTS: list[str] = []

AKLT_THETA = math.atan(1.0 / 3.0)
ITERS = int(os.environ.get("SPIN1_NQS_ACCEPT_ITERS", "15000"))
# learning rate 1e-2 with the default decay, L-curve eps on the Haldane grid;
# init scale 0.3 from the pilots (1e-2 sits on the I ~ 1 plateau for ~900 steps)
TRAIN = dict(iterations=ITERS, learning_rate=1e-2, seed=0, init_scale=0.3)


def record(number: int, passed: bool, text: str) -> None:
    RESULTS.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {text}")


# --- shared training runs -----------------------------------------------------------

_RUNS: dict = {}


def trained(name: str):
    if name not in _RUNS:
        theta = {"afh": 0.0, "aklt": AKLT_THETA}[name]
        model = ModelConfig(8, theta, parity="even", alpha=10)
        problem = prepare_problem(model)
        t0 = time.perf_counter()
        trace = run_infidelity_minimization(model, NgdConfig(**TRAIN), problem=problem)
        _RUNS[name] = (problem, trace, time.perf_counter() - t0)
    return _RUNS[name]


# --- criteria -------------------------------------------------------------------------

def test_criterion_1_sector_dimensions():
    expected = {8: (1107, 554), 10: (8953, 4477), 12: (73789, 36895)}
    ok, parts = True, []
    for L, (D, d_even) in expected.items():
        t0 = time.perf_counter()
        basis = enumerate_sz0_basis(L)
        dt = time.perf_counter() - t0
        dim, even, _ = sector_parity_dimensions(basis)
        limit = 1.0 if L <= 10 else 30.0
        good = dim == D and even == d_even and dt < limit
        ok &= good
        parts.append(f"L={L} D={dim} d_even={even} ({dt:.2f}s < {limit:.0f}s)")
    record(1, ok, "; ".join(parts))
    assert ok


def test_criterion_2_aklt_energy_oracle():
    basis = enumerate_sz0_basis(8)
    pairs = ground_states(build_hamiltonian(basis, AKLT_THETA), k=3)
    e_exact = -(2.0 / 3.0) * 7
    de = np.abs(pairs.values[:2] - e_exact).max()
    gap = pairs.values[2] - pairs.values[1]
    fids = []
    for boundary in ((1, 1), (2, 2)):
        v = aklt_sector_vector(basis, boundary)
        fids.append(float(np.linalg.norm(pairs.vectors[:, :2].T @ v) ** 2))
    ok = de <= 1e-9 and gap > 1e-3 and min(fids) >= 1 - 1e-10
    record(2, ok, f"|dE|={de:.1e} (<=1e-9), two-fold (gap {gap:.3f}), "
                  f"MPS fidelities {min(fids):.15f} (>=1-1e-10)")
    assert ok


def _fd_conjugate_gradient(fun, params, h=1e-6):
    out = np.zeros(params.size, dtype=complex)
    for mu in range(params.size):
        e = np.zeros(params.size, dtype=complex)
        e[mu] = h
        d_re = (fun(params + e) - fun(params - e)) / (2 * h)
        d_im = (fun(params + 1j * e) - fun(params - 1j * e)) / (2 * h)
        out[mu] = 0.5 * (d_re + 1j * d_im)
    return out


def test_criterion_3_gradient_and_qgt_properties():
    t0 = time.perf_counter()
    worst_inf = worst_en = worst_qgt = worst_fim = 0.0
    min_eig = np.inf
    points = [(4, 2, s) for s in range(10)] + [(6, 1, s) for s in range(10)]
    cache = {}
    for L, alpha, seed in points:
        if L not in cache:
            basis = enumerate_sz0_basis(L)
            ham = build_hamiltonian(basis, 0.3)
            target = prepare_problem(ModelConfig(L, 0.3, parity="even", alpha=alpha)).target
            cache[L] = (basis, ham, target)
        basis, ham, target = cache[L]
        shape = RbmShape(L, alpha)
        params = init_params(shape, seed, 0.3)
        grad = infidelity_gradient(shape, params, "even", basis, target)
        fd = _fd_conjugate_gradient(lambda p: infidelity(snapshot(shape, p, "even", basis, target)), params)
        worst_inf = max(worst_inf, np.linalg.norm(grad - fd) / np.linalg.norm(fd))
        _, g_e = energy_and_gradient(shape, params, "even", basis, ham)
        fd_e = _fd_conjugate_gradient(lambda p: energy_and_gradient(shape, p, "even", basis, ham)[0], params)
        worst_en = max(worst_en, np.linalg.norm(g_e - fd_e) / np.linalg.norm(fd_e))
        g = qgt(shape, params, "even", basis)
        min_eig = min(min_eig, np.linalg.eigvalsh(g).min())
        if L == 4:
            worst_qgt = max(worst_qgt, np.abs(g - qgt_dense_reference(shape, params, "even", basis)).max())
            # real parameters -> real positive amplitudes: G = FIM/4
            rp = params.real.astype(complex)
            g_r = qgt(shape, rp, "none", basis)
            st = exact_state(shape, rp, "none", basis, jacobian=False)
            prob = np.abs(st.psi) ** 2 / st.norm2
            dlogp = 2 * log_derivatives(shape, rp, basis.configs).real
            dlogp -= prob @ dlogp
            fim = (dlogp * prob[:, None]).T @ dlogp
            worst_fim = max(worst_fim, np.abs(g_r - fim / 4).max())
    dt = time.perf_counter() - t0
    ok = (worst_inf <= 1e-6 and worst_en <= 1e-6 and worst_qgt <= 1e-10 and min_eig >= -1e-10
          and worst_fim <= 1e-10 and dt < 120)
    record(3, ok, f"20 points: infidelity grad rel {worst_inf:.1e}, energy grad rel {worst_en:.1e} "
                  f"(<=1e-6); QGT vs reference {worst_qgt:.1e}, G-FIM/4 {worst_fim:.1e} (<=1e-10); "
                  f"min eig {min_eig:.1e} (>=-1e-10); {dt:.0f}s")
    assert ok


def test_criterion_4_afh_training():
    problem, trace, dt = trained("afh")
    rep = trace.report
    ok = trace.final_infidelity <= 1e-8 and rep.d_r >= 550 and dt <= 3 * 3600
    record(4, ok, f"AFH L=8 alpha=10: I={trace.final_infidelity:.2e} (<=1e-8), "
                  f"d_r={rep.d_r}/{rep.d_q} (>=550), {dt / 60:.1f} min")
    assert ok


def test_criterion_5_aklt_rank_below_afh():
    _, afh, _ = trained("afh")
    _, aklt, dt = trained("aklt")
    d_afh, d_aklt = afh.report.d_r, aklt.report.d_r
    ok = aklt.final_infidelity <= 1e-8 and d_aklt <= d_afh - 10
    record(5, ok, f"AKLT L=8 alpha=10: I={aklt.final_infidelity:.2e} (<=1e-8), "
                  f"d_r={d_aklt} vs AFH {d_afh} (margin {d_afh - d_aklt} >= 10), {dt / 60:.1f} min")
    assert ok


def test_criterion_6_hessian_identity():
    lines, ok_all, checked = [], True, 0
    for name in ("afh", "aklt"):
        problem, trace, _ = trained(name)
        if not trace.final_infidelity <= 1e-9:
            lines.append(f"{name}: I={trace.final_infidelity:.1e} > 1e-9, not eligible")
            continue
        checked += 1
        t0 = time.perf_counter()
        h = infidelity_hessian(problem.shape, trace.params, "even", problem.basis, problem.target)
        spec = hessian_spectrum(h)
        res = pairing_check(spec.eigenvalues, trace.report.eigenvalues, floor=1e-10, rtol=1e-4,
                            negative_ratio_max=1e-6, normalized=True)
        absolute = pairing_check(spec.eigenvalues, trace.report.eigenvalues, floor=1e-10, rtol=1e-4,
                                 negative_ratio_max=1e-6, normalized=False)
        ok_all &= res.passed
        lines.append(f"{name}: {res.line()} [floor 1e-10 x lambda_max]; absolute-floor variant "
                     f"{'PASS' if absolute.passed else 'FAIL'} (max rel err {absolute.max_relative_error:.1e}, "
                     f"lambda_max {spec.lambda_max:.2e}); {time.perf_counter() - t0:.0f}s")
    ok = ok_all and checked > 0
    record(6, ok, " | ".join(lines))
    assert ok


def test_criterion_7_observables():
    problem, trace, _ = trained("afh")
    st = exact_state(problem.shape, trace.params, "even", problem.basis, jacobian=False)
    nqs = st.reduction.expand(st.psi) / math.sqrt(st.norm2)
    ed = correlation_profile(problem.target, problem.basis, 0, "ED").values
    var = correlation_profile(nqs, problem.basis, 0, "NQS").values
    dev = float(np.abs(ed - var).max())
    basis = problem.basis
    o16 = string_order(aklt_sector_vector(basis, (1, 1)), basis, 1, 6)
    ok = trace.final_infidelity <= 1e-8 and dev <= 1e-4 and abs(o16) >= 0.35
    record(7, ok, f"AFH NQS (I={trace.final_infidelity:.1e}) max|<S0Sj>_NQS-<S0Sj>_ED|={dev:.1e} (<=1e-4); "
                  f"AKLT MPS |O_1,6|={abs(o16):.4f} (>=0.35)")
    assert ok


def test_criterion_8_parameter_table():
    table = {8: [288, 560, 832, 1104, 1376],
             10: [440, 860, 1280, 1700, 2120, 2540, 2960, 3380, 3800, 4220, 4640],
             12: [624, 1224, 1824, 2424, 3024, 3624, 4224, 4824, 5424, 6024]}
    bad = [(L, 2 * (i + 1), n) for L, row in table.items() for i, n in enumerate(row)
           if RbmShape(L, 2 * (i + 1)).n_params != n]
    n_rows = sum(len(r) for r in table.values())
    record(8, not bad, f"{n_rows - len(bad)}/{n_rows} (L, alpha) rows match (288 ... 6024)")
    assert not bad


def test_criterion_9_determinism(tmp_path):
    traces = []
    for k in range(2):
        root = tmp_path / f"run{k}"
        code = cli_main(["train", "--L", "8", "--phase", "aklt", "--alpha", "2", "--iterations", "300",
                         "--lr", "0.01", "--seed", "3", "--threads", "1", "--output-root", str(root)])
        assert code == 0
        (run,) = [p for p in root.iterdir() if p.is_dir()]
        traces.append((run / "trace.csv").read_bytes())
    ok = traces[0] == traces[1]
    record(9, ok, f"two seeded runs (1 thread) give bitwise-identical trace.csv ({len(traces[0])} bytes)")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
