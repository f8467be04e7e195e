"""Equilibrium sweep over beta: eta scaling, energy ratios, spectra and resonant share.

    python3 scripts/run_sweep.py --out results/sweep [--betas 1,2,4] [--t-record 1e5]

Writes summary.json and prints one line per beta plus the fitted eta exponents.
Set FPU_THREADS to cap the number of worker processes (0 = all cores).
"""
import argparse
import json
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path

from betafpu import analysis as an
from betafpu.cli import sweep_workers
from betafpu.config import RunConfig
from betafpu.experiment import run_equilibrium


def summarize(beta, seed, t_record, N):
    r = run_equilibrium(RunConfig(N=N, beta=beta, seed=seed, t_record=t_record))
    k20 = r.trackers.get(20)
    row = {
        "beta": beta,
        "eta_measured": r.eta_measured,
        "eta_analytic": r.eta_analytic,
        "eta_single": r.eta_single,
        "dispersion_residual": r.dispersion_residual,
        "rj_slope": r.spectrum_bare.slope_fit,
        "rj_temperature": r.spectrum_bare.temperature_fit,
        "h4_h2": r.ratios["h4_over_h2"],
        "h4t_h2t": r.ratios["h4t_over_h2t"],
        "resonant_fraction": r.resonant_fraction,
        "energy_drift": r.energy_drift,
        "equipartition": r.equipartition,
        "wall_seconds": r.wall_seconds,
    }
    if k20 is not None:
        row["k20_drift_renormalized"] = an.phase_drift(k20.result("renormalized", r.eta_measured))
        row["k20_drift_bare"] = an.phase_drift(k20.result("bare"))
    return row


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--betas", default="1,2,4,8,16,32,64,128")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--N", type=int, default=128)
    ap.add_argument("--t-record", type=float, default=1e5)
    ap.add_argument("--out", type=Path, default=Path("results/sweep"))
    args = ap.parse_args()
    betas = [float(b) for b in args.betas.split(",")]
    job = partial(summarize, seed=args.seed, t_record=args.t_record, N=args.N)
    with ProcessPoolExecutor(sweep_workers(len(betas))) as pool:
        rows = sorted(pool.map(job, betas), key=lambda r: r["beta"])
    for r in rows:
        print(
            f"beta={r['beta']:g} eta_m={r['eta_measured']:.4f} eta_a={r['eta_analytic']:.4f} "
            f"H4/H2={r['h4_h2']:.4f} H4~/H2~={r['h4t_h2t']:.4f} slope={r['rj_slope']:.3f} "
            f"share={r['resonant_fraction']:.3f} drift={r['energy_drift']:.1e}"
        )
    fits = {}
    if len(rows) > 1:
        for key in ("eta_measured", "eta_analytic"):
            fit = an.eta_beta_scaling([(r["beta"], r[key]) for r in rows])
            fits[key] = {"exponent": fit.exponent, "prefactor": fit.prefactor, "r_squared": fit.r_squared}
            print(f"{key}: eta ~ {fit.prefactor:.3f} beta^{fit.exponent:.4f} (R^2 {fit.r_squared:.4f})")
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "summary.json").write_text(json.dumps({"rows": rows, "fits": fits}, indent=2))


if __name__ == "__main__":
    main()
