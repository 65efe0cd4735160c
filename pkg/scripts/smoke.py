"""Short pilot runs whose thresholds are quoted in the README.

AKLT, L=8, alpha=2: 2000 NGD steps on the infidelity.
AKLT, L=8, alpha=4: 10000 NGD steps on the energy.
"""
import argparse
import math
import time

from spin1_nqs.optimizer import (ModelConfig, NgdConfig, run_energy_minimization,
                                 run_infidelity_minimization)

AKLT = math.atan(1.0 / 3.0)


def run(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--init-scale", type=float, default=0.3, help="infidelity run")
    ap.add_argument("--energy-init-scale", type=float, default=0.1)
    ap.add_argument("--skip-energy", action="store_true")
    args = ap.parse_args(argv)

    t0 = time.perf_counter()
    opt = NgdConfig(iterations=2000, learning_rate=1e-2, init_scale=args.init_scale)
    tr = run_infidelity_minimization(ModelConfig(8, AKLT, parity="even", alpha=2), opt)
    ok_inf = tr.final_infidelity <= 1e-3
    print(f"infidelity smoke: I={tr.final_infidelity:.3e} (<=1e-3) d_r={tr.report.d_r} "
          f"{time.perf_counter() - t0:.0f}s {'ok' if ok_inf else 'FAILED'}")
    if args.skip_energy:
        return 0 if ok_inf else 1

    t0 = time.perf_counter()
    opt = NgdConfig(iterations=10000, learning_rate=1e-2, init_scale=args.energy_init_scale)
    tr = run_energy_minimization(ModelConfig(8, AKLT, parity="even", alpha=4), opt)
    rel = tr.column("rel_energy_error")[-1]
    ok_en = rel <= 1e-6
    print(f"energy smoke: rel err={rel:.3e} (<=1e-6) I={tr.final_infidelity:.3e} "
          f"window violations={tr.manifest.get('energy_window_violations')} "
          f"{time.perf_counter() - t0:.0f}s {'ok' if ok_en else 'FAILED'}")
    return 0 if ok_inf and ok_en else 1


if __name__ == "__main__":
    raise SystemExit(run())
