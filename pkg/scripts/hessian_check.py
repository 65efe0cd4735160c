"""Hessian spectrum against the doubled QGT spectrum for a saved checkpoint.

    python scripts/hessian_check.py runs/<run>/params.ckpt --theta 0
"""
import argparse

import numpy as np

from spin1_nqs.hessian import hessian_spectrum, infidelity_hessian, pairing_check
from spin1_nqs.loss_geometry import exact_state, qgt_report_from_jacobian
from spin1_nqs.nqs import load_checkpoint
from spin1_nqs.optimizer import ModelConfig, prepare_problem


def run(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("checkpoint")
    ap.add_argument("--theta", type=float, default=0.0)
    ap.add_argument("--coupling", type=float, default=1.0)
    args = ap.parse_args(argv)

    shape, params, parity, _, _ = load_checkpoint(args.checkpoint)
    pr = prepare_problem(ModelConfig(shape.length, args.theta, args.coupling, parity, shape.alpha))
    st = exact_state(shape, params, parity, pr.basis)
    q = qgt_report_from_jacobian(st.centered_jacobian(), pr.d_q).eigenvalues
    spec = hessian_spectrum(infidelity_hessian(shape, params, parity, pr.basis, pr.target))
    for normalized in (True, False):
        res = pairing_check(spec.eigenvalues, q, normalized=normalized)
        print(f"{'relative' if normalized else 'absolute'} floor: {res.line()}")
    h, qq = spec.eigenvalues, np.repeat(q, 2)
    print(f"lambda_max {h[0]:.4e}  min eig {h.min():.3e}")
    for i in np.unique(np.linspace(0, h.size - 1, 12).astype(int)):
        rel = abs(h[i] - qq[i]) / qq[i] if qq[i] > 0 else float("nan")
        print(f"{i:5d}  H {h[i]: .6e}  2xQGT {qq[i]: .6e}  rel {rel:.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(run())
