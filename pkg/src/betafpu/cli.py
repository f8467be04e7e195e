"""Command-line driver: ``fpu <verb> [options]``.

Simulation writes binary records plus a manifest into the output directory;
every analysis verb reads those records back, so any of them can be rerun
without simulating again.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis as an
from .breathers import FilterSpec, Thresholds, filtered_displacement, site_energy_field, track_breathers
from .config import ConfigError, RunConfig, dump_config, load_config
from .experiment import SEED_RULE, FanOut, run_equilibrium, thermalize
from .lattice import BlowUpError, InvalidStateError, ParameterError, integrate, site_energy_density, total_energy
from .modes import dispersion, eta_analytic, to_modes
from .records import (
    RecordFormatError,
    RecordHeader,
    RecordWriter,
    concat_trajectory,
    iter_modes,
    iter_trajectory,
    read_header,
    write_csv,
    write_mode_csv,
    write_snapshot_csv,
)
from . import verify as oracle

log = logging.getLogger("betafpu")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
DEFAULT_BETAS = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0)
TRAJ_FILE, MODES_FILE, QF_FILE = "traj.fpu", "modes.fpm", "qf.fpf"
MANIFEST = "manifest.json"


# ---------------------------------------------------------------------------
# manifest


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def version_tag() -> str:
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=Path(__file__).parent, capture_output=True, text=True, timeout=5,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        rev = ""
    return f"{__version__}+{rev}" if rev else __version__


def update_manifest(out: Path, files, cfg: RunConfig | None = None, **extra) -> dict:
    """Add (or refresh) checksums for `files` in out/manifest.json."""
    path = out / MANIFEST
    man = json.loads(path.read_text()) if path.exists() else {"files": {}, "runs": []}
    if cfg is not None:
        man["config"] = cfg.to_dict()
        man["seed_rule"] = SEED_RULE
    man["version"] = version_tag()
    for f in files:
        man["files"][Path(f).name] = sha256(out / Path(f).name)
    if extra:
        man["runs"].append(extra)
    path.write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    return man


def validate_manifest(out) -> list[str]:
    """Names of listed files whose checksum no longer matches (or that vanished)."""
    out = Path(out)
    man = json.loads((out / MANIFEST).read_text())
    bad = []
    for name, digest in man["files"].items():
        p = out / name
        if not p.exists() or sha256(p) != digest:
            bad.append(name)
    return bad


# ---------------------------------------------------------------------------
# verbs


def cmd_simulate(cfg: RunConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    wall = time.perf_counter()
    params = cfg.params
    state = thermalize(cfg)
    header = RecordHeader(cfg.N, cfg.beta, cfg.dt, cfg.sample_stride)
    energy = an.RatioAccumulator(cfg.beta)
    h0 = total_energy(state, params).total
    with RecordWriter(out / TRAJ_FILE, header, "trajectory") as tw, RecordWriter(out / MODES_FILE, header, "modes") as mw:

        class _Both:
            def update(self, rec):
                tw(rec.t, rec.q, rec.p)
                mw(rec.t, rec.q, rec.p)

        sink = FanOut(header, site=[_Both(), energy])
        final = integrate(state, params, cfg.dt, state.t + cfg.t_record, cfg.sample_stride, sink, scheme=cfg.scheme)
    drift = float(np.max(np.abs(energy.total_energy() - h0)) / h0)
    write_snapshot_csv(out / "snapshot.csv", final.q, final.p, site_energy_density(final, params).e)
    m = to_modes(final)
    write_mode_csv(out / "modes_final.csv", m.Q, m.P)
    (out / "config.txt").write_text(dump_config(cfg))
    files = [TRAJ_FILE, MODES_FILE, "snapshot.csv", "modes_final.csv", "config.txt"]
    info = {
        "verb": "simulate",
        "started": started,
        "wall_seconds": time.perf_counter() - wall,
        "energy_initial": h0,
        "energy_drift": drift,
        "samples": energy.count,
    }
    update_manifest(out, files, cfg, **info)
    print(f"simulate: {energy.count} samples, relative energy drift {drift:.3e}")
    return info


def _records(src: Path) -> tuple[Path, Path]:
    traj, modes = src / TRAJ_FILE, src / MODES_FILE
    for p in (traj, modes):
        if not p.exists():
            raise FileNotFoundError(f"missing record file {p}")
    return traj, modes


def _moments(modes_path) -> an.ModeMoments:
    acc = None
    for rec in iter_modes(modes_path):
        acc = acc or an.ModeMoments(rec.header.N)
        acc.update(rec)
    if acc is None:
        raise an.AnalysisError("empty mode record")
    return acc


def _spectrogram(modes_path, segment: int) -> an.SpectrogramResult:
    acc = None
    for rec in iter_modes(modes_path):
        if acc is None:
            acc = an.WelchSpectrogram(rec.header.N, rec.header.sample_interval, segment)
        acc.update(rec)
    if acc is None:
        raise an.AnalysisError("empty mode record")
    return acc.result()


def _eta(choice: str, modes_path, segment: int) -> tuple[float, str]:
    """Resolve --eta: a number, 'analytic' or 'measured'."""
    if choice == "analytic":
        m = _moments(modes_path)
        return eta_analytic(m.mean_Q_sq(), _beta(modes_path), m.N).eta_analytic, "analytic"
    if choice == "measured":
        spec = _spectrogram(modes_path, segment)
        return an.measure_eta(spec).eta, "measured"
    try:
        return float(choice), "given"
    except ValueError:
        raise ConfigError(f"--eta must be a number, 'analytic' or 'measured', not {choice!r}") from None


def _beta(path) -> float:
    return read_header(path).beta


def cmd_spectrum(src: Path, out: Path, dispersion_used: str = "bare", eta: str = "analytic") -> an.PowerSpectrum:
    _, modes = _records(src)
    m = _moments(modes)
    e = 1.0
    if dispersion_used == "renormalized":
        e = eta_analytic(m.mean_Q_sq(), _beta(modes), m.N).eta_analytic if eta == "analytic" else _eta(eta, modes, 2**14)[0]
    spec = m.spectrum(dispersion_used, e)
    rows = ((k, w, s, spec.temperature_fit, spec.slope_fit) for k, w, s in zip(spec.k, spec.omega, spec.mean_sq_a))
    write_csv(out / "spectrum.csv", ["k", "omega", "mean_sq_a", "T_fit", "slope"], rows)
    update_manifest(out, ["spectrum.csv"], verb="spectrum", dispersion=dispersion_used, eta=e)
    print(f"spectrum: slope {spec.slope_fit:.4f}, T {spec.temperature_fit:.4f}, equipartition {m.equipartition():.4f}")
    return spec


def cmd_dispersion(src: Path, out: Path, segment: int = 2**14, omega_max: float | None = None, delta: float | None = None) -> dict:
    _, modes = _records(src)
    spec = _spectrogram(modes, segment)
    m = _moments(modes)
    N, beta = m.N, _beta(modes)
    est = an.measure_eta(spec, N)
    eta_a = eta_analytic(m.mean_Q_sq(), beta, N).eta_analytic
    w = spec.omega_bins
    hi = omega_max if omega_max is not None else 1.5 * float(np.nanmax(spec.peak_omega))
    keep = (w >= 0) & (w <= hi)
    rows = ((k, wb + 0.0, p) for k in range(1, N) for wb, p in zip(w[keep], spec.power[k - 1, keep]))
    write_csv(out / "spectrogram.csv", ["k", "omega_bin", "power"], rows)
    write_csv(out / "eta.csv", ["beta", "eta_measured", "eta_analytic"], [(beta, est.eta, eta_a)])
    write_csv(
        out / "peaks.csv",
        ["k", "omega_k", "peak_omega", "width"],
        zip(range(1, N), dispersion(N), spec.peak_omega, spec.width),
    )
    d = float(spec.width[N // 4 - 1]) if delta is None else float(delta)
    count = an.near_resonance_count(N, est.eta * dispersion(N), d)
    write_csv(out / "quartets.csv", ["delta", "count"], [(d, count)])
    files = ["spectrogram.csv", "eta.csv", "peaks.csv", "quartets.csv"]
    info = {
        "eta_measured": est.eta,
        "eta_single": est.eta_single,
        "eta_analytic": eta_a,
        "residual_rms": est.residual_rms,
        "window": spec.window_meta,
        "delta": d,
        "near_resonant_quartets": count,
    }
    update_manifest(out, files, verb="dispersion", **info)
    print(
        f"dispersion: eta_measured {est.eta:.4f} (k=N/2 readout {est.eta_single:.4f}), "
        f"eta_analytic {eta_a:.4f}, residual {est.residual_rms:.3%}, quartets(delta={d:.4g}) {count}"
    )
    return info


def cmd_ratios(src: Path, out: Path, eta: str = "analytic") -> dict:
    traj, modes = _records(src)
    e, how = _eta(eta, modes, 2**14)
    r = an.nonlinearity_ratios(iter_trajectory(traj), e)
    beta = _beta(traj)
    write_csv(out / "ratios.csv", ["beta", "h4_h2", "h4t_h2t"], [(beta, r["h4_over_h2"], r["h4t_over_h2t"])])
    update_manifest(out, ["ratios.csv"], verb="ratios", eta=e, eta_source=how)
    print(f"ratios: H4/H2 {r['h4_over_h2']:.4f}, H4~/H2~ {r['h4t_over_h2t']:.4f} (eta {e:.4f}, {how})")
    return r


def cmd_modes(src: Path, out: Path, ks, dispersion_used: str = "bare", eta: str = "measured", segment: int = 2**14) -> dict:
    _, modes = _records(src)
    e = 1.0
    if dispersion_used == "renormalized":
        e, _ = _eta(eta, modes, segment)
    trackers = None
    for rec in iter_modes(modes):
        if trackers is None:
            trackers = {k: an.ModeTracker(rec.header.N, k) for k in ks}
        for tr in trackers.values():
            tr.update(rec)
    if trackers is None:
        raise an.AnalysisError("empty mode record")
    files, summary = [], {}
    for k, tr in trackers.items():
        evo = tr.result(dispersion_used, e)
        name = f"modes_{k}.csv"
        write_csv(out / name, ["t", "amplitude", "phase"], zip(evo.t, evo.amplitude, evo.phase))
        files.append(name)
        summary[k] = {
            "omega": evo.omega,
            "phase_drift": an.phase_drift(evo),
            "phase_excursion": an.phase_drift(evo, excursion=True),
            "modulation_depth": an.modulation_depth(evo),
        }
        s = summary[k]
        print(
            f"modes: k={k} omega {evo.omega:.4f} phase drift per 10 periods {s['phase_drift']:.3f} "
            f"(max excursion {s['phase_excursion']:.3f}), modulation {s['modulation_depth']:.3f}"
        )
    update_manifest(out, files, verb="modes", dispersion=dispersion_used, eta=e, summary={str(k): v for k, v in summary.items()})
    return summary


def cmd_breathers(src: Path, out: Path, omega_cut: float, thresholds: Thresholds = Thresholds()) -> list:
    traj_path, _ = _records(src)
    traj = concat_trajectory(iter_trajectory(traj_path))
    ff = filtered_displacement(traj, FilterSpec(omega_cut))
    tracks = track_breathers(ff, site_energy_field(traj), thresholds)
    rows = (
        (i, tr.t_start, tr.t_end, tr.mean_site, tr.max_span, tr.oscillation_count, tr.peak_energy)
        for i, tr in enumerate(tracks)
    )
    write_csv(
        out / "breathers.csv",
        ["track_id", "t_start", "t_end", "mean_site", "max_span", "oscillation_count", "peak_energy"],
        rows,
    )
    with RecordWriter(out / QF_FILE, traj.header, "field") as w:
        w(traj.t, ff.qf.T)
    update_manifest(
        out, ["breathers.csv", QF_FILE], verb="breathers", omega_cut=omega_cut,
        thresholds=thresholds.__dict__, tracks=len(tracks),
    )
    print(f"breathers: {len(tracks)} tracks above omega_cut={omega_cut}")
    return tracks


def _sweep_job(cfg: RunConfig) -> dict:
    r = run_equilibrium(cfg)
    return {
        "beta": cfg.beta,
        "eta_measured": r.eta_measured,
        "eta_single": r.eta_single,
        "eta_analytic": r.eta_analytic,
        "residual_rms": r.dispersion_residual,
        "h4_h2": r.ratios["h4_over_h2"],
        "h4t_h2t": r.ratios["h4t_over_h2t"],
        "resonant_fraction": r.resonant_fraction,
        "energy_drift": r.energy_drift,
        "slope": r.spectrum_bare.slope_fit,
        "wall_seconds": r.wall_seconds,
    }


def sweep_workers(n_jobs: int) -> int:
    raw = os.environ.get("FPU_THREADS", "0").strip() or "0"
    try:
        cap = int(raw)
    except ValueError:
        raise ConfigError(f"FPU_THREADS must be an integer, not {raw!r}") from None
    if cap < 0:
        raise ConfigError("FPU_THREADS must be >= 0")
    auto = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
    return max(1, min(n_jobs, cap or auto))


def cmd_sweep(cfg: RunConfig, out: Path, betas=DEFAULT_BETAS) -> list[dict]:
    out.mkdir(parents=True, exist_ok=True)
    cfgs = [cfg.with_overrides(beta=float(b)) for b in sorted(set(betas))]
    workers = sweep_workers(len(cfgs))
    wall = time.perf_counter()
    if workers == 1:
        rows = [_sweep_job(c) for c in cfgs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_job, cfgs))
    rows.sort(key=lambda r: r["beta"])
    write_csv(out / "eta.csv", ["beta", "eta_measured", "eta_analytic"], ((r["beta"], r["eta_measured"], r["eta_analytic"]) for r in rows))
    write_csv(out / "ratios.csv", ["beta", "h4_h2", "h4t_h2t"], ((r["beta"], r["h4_h2"], r["h4t_h2t"]) for r in rows))
    cols = list(rows[0])
    write_csv(out / "sweep.csv", cols, ([r[c] for c in cols] for r in rows))
    files = ["eta.csv", "ratios.csv", "sweep.csv"]
    info = {"betas": [r["beta"] for r in rows], "workers": workers, "wall_seconds": time.perf_counter() - wall}
    if len(rows) >= 2:
        for key in ("eta_measured", "eta_analytic"):
            fit = an.eta_beta_scaling([(r["beta"], r[key]) for r in rows])
            info[f"exponent_{key}"] = fit.exponent
            print(f"sweep: {key} ~ beta^{fit.exponent:.4f} (R^2 {fit.r_squared:.4f})")
    update_manifest(out, files, cfg, verb="sweep", **info)
    for r in rows:
        print(f"sweep: beta={r['beta']:g} eta_measured {r['eta_measured']:.4f} eta_analytic {r['eta_analytic']:.4f}")
    return rows


def cmd_verify(cfg: RunConfig, drift_time: float = 1e5) -> list[oracle.CheckResult]:
    betas = tuple(dict.fromkeys((cfg.beta, 32.0)))
    results = oracle.run_all(cfg.seed, drift_betas=betas, drift_time=drift_time)
    for r in results:
        print(r.line())
    print(f"verify: {sum(r.passed for r in results)}/{len(results)} checks passed")
    return results


# ---------------------------------------------------------------------------
# argument parsing


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--config", help="key = value configuration file")
    g.add_argument("--seed", type=int, help="master seed")
    g.add_argument("--out", help="output directory (default: config output_dir)")
    g.add_argument("-v", "--verbose", action="store_true")
    run = argparse.ArgumentParser(add_help=False)
    r = run.add_argument_group("run overrides")
    r.add_argument("--N", type=int)
    r.add_argument("--beta", type=float)
    r.add_argument("--energy", dest="target_energy", type=float)
    r.add_argument("--dt", type=float)
    r.add_argument("--t-transient", type=float)
    r.add_argument("--t-record", type=float)
    r.add_argument("--stride", dest="sample_stride", type=int)
    r.add_argument("--scheme")
    src = argparse.ArgumentParser(add_help=False)
    src.add_argument("--records", help="directory holding traj.fpu and modes.fpm (default: --out)")

    p = argparse.ArgumentParser(prog="fpu", description="beta-FPU chain simulation and spectral analysis")
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("simulate", parents=[common, run], help="thermalize and record")
    s = sub.add_parser("spectrum", parents=[common, src], help="time-averaged |a_k|^2")
    s.add_argument("--dispersion", choices=("bare", "renormalized"), default="bare")
    s.add_argument("--eta", default="analytic", help="number, 'analytic' or 'measured'")
    s = sub.add_parser("dispersion", parents=[common, src], help="spectrogram and eta")
    s.add_argument("--segment", type=int, default=2**14)
    s.add_argument("--omega-max", type=float)
    s.add_argument("--delta", type=float, help="near-resonance tolerance (default: width at k=N/4)")
    s = sub.add_parser("ratios", parents=[common, src], help="H4/H2 and H4~/H2~")
    s.add_argument("--eta", default="analytic", help="number, 'analytic' or 'measured'")
    s = sub.add_parser("modes", parents=[common, src], help="amplitude and phase of single modes")
    s.add_argument("--k", type=_int_list, default=[1, 20])
    s.add_argument("--dispersion", choices=("bare", "renormalized"), default="bare")
    s.add_argument("--eta", default="measured", help="number, 'analytic' or 'measured'")
    s.add_argument("--segment", type=int, default=2**14)
    s = sub.add_parser("breathers", parents=[common, src], help="high-pass filter and track breathers")
    s.add_argument("--omega-cut", type=float)
    t = Thresholds()
    s.add_argument("--relative", type=float, default=t.relative)
    s.add_argument("--floor-fraction", type=float, default=t.floor_fraction)
    s.add_argument("--min-samples", type=int, default=t.min_samples)
    s.add_argument("--span-fraction", type=float, default=t.span_fraction)
    s.add_argument("--max-hop", type=float, default=t.max_hop)
    s.add_argument("--max-gap", type=int, default=t.max_gap)
    s = sub.add_parser("sweep", parents=[common, run], help="independent runs over a beta list")
    s.add_argument("--betas", type=_float_list, default=list(DEFAULT_BETAS))
    s = sub.add_parser("verify", parents=[common, run], help="oracle checks")
    s.add_argument("--drift-time", type=float, default=1e5)
    return p


def _config(args) -> RunConfig:
    base = load_config(args.config) if args.config else RunConfig()
    keys = ("N", "beta", "target_energy", "dt", "t_transient", "t_record", "sample_stride", "scheme", "omega_cut")
    over = {k: getattr(args, k, None) for k in keys}
    return base.with_overrides(seed=args.seed, output_dir=args.out, **over)


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = _config(args)
        out = Path(cfg.output_dir)
        src = Path(args.records) if getattr(args, "records", None) else out
        if args.verb not in ("simulate", "sweep", "verify"):
            out.mkdir(parents=True, exist_ok=True)
        if args.verb == "simulate":
            cmd_simulate(cfg, out)
        elif args.verb == "spectrum":
            cmd_spectrum(src, out, args.dispersion, args.eta)
        elif args.verb == "dispersion":
            cmd_dispersion(src, out, args.segment, args.omega_max, args.delta)
        elif args.verb == "ratios":
            cmd_ratios(src, out, args.eta)
        elif args.verb == "modes":
            cmd_modes(src, out, args.k, args.dispersion, args.eta, args.segment)
        elif args.verb == "breathers":
            th = Thresholds(
                relative=args.relative, floor_fraction=args.floor_fraction, min_samples=args.min_samples,
                span_fraction=args.span_fraction, max_hop=args.max_hop, max_gap=args.max_gap,
            )
            cmd_breathers(src, out, args.omega_cut or cfg.omega_cut or 7.0, th)
        elif args.verb == "sweep":
            cmd_sweep(cfg, out, args.betas)
        elif args.verb == "verify":
            results = cmd_verify(cfg, args.drift_time)
            if not all(r.passed for r in results):
                return EXIT_NUMERIC
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RecordFormatError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BlowUpError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (an.AnalysisError, InvalidStateError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
