"""High-pass filtering of site time series and tracking of the localised,
above-band excitations (discrete breathers) it exposes.

Filtered fields are stored site-major: ``qf[n, j]`` is site n at sample j.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import hilbert

from .lattice import ParameterError, site_energy_series
from .records import TrajectoryRecord

MIN_RECORD = 2**10


@dataclass(frozen=True)
class FilterSpec:
    omega_cut: float = 7.0
    transition: str = "hard"

    def __post_init__(self):
        if not self.omega_cut > 0:
            raise ParameterError("omega_cut must be positive")
        if self.transition != "hard":
            raise ParameterError("only the hard spectral cut is implemented")


@dataclass
class FilteredField:
    qf: np.ndarray  # (sites, samples)
    spec: FilterSpec
    source_meta: dict = field(default_factory=dict)

    @property
    def sample_interval(self) -> float:
        return self.source_meta["sample_interval"]


def highpass_filter(signal: np.ndarray, spec: FilterSpec, dt_sample: float, min_length: int = MIN_RECORD) -> FilteredField:
    """Zero every temporal Fourier coefficient with |omega| < omega_cut.

    `signal` is (sites, samples) or a single series. This is an orthogonal
    projection, hence linear and idempotent. Edge samples ring; callers should
    discard them downstream.
    """
    g = np.asarray(signal, dtype=float)
    if g.shape[-1] < min_length:
        raise ParameterError(f"record needs at least {min_length} samples, has {g.shape[-1]}")
    nyquist = np.pi / dt_sample
    if spec.omega_cut >= nyquist:
        raise ParameterError(f"omega_cut {spec.omega_cut} is not below the Nyquist frequency {nyquist:.4g}")
    n = g.shape[-1]
    omega = 2 * np.pi * np.fft.fftfreq(n, dt_sample)
    G = np.fft.fft(g, axis=-1)
    G[..., np.abs(omega) < spec.omega_cut] = 0.0
    qf = np.fft.ifft(G, axis=-1).real
    return FilteredField(qf, spec, {"sample_interval": float(dt_sample), "samples": n})


def filtered_displacement(trajectory: TrajectoryRecord, spec: FilterSpec) -> FilteredField:
    """q_n^f(t) for every site of a uniformly sampled trajectory."""
    dt = float(np.median(np.diff(trajectory.t))) if len(trajectory) > 1 else trajectory.header.sample_interval
    ff = highpass_filter(trajectory.q.T, spec, dt)
    ff.source_meta.update(t0=float(trajectory.t[0]), N=trajectory.q.shape[1], beta=trajectory.header.beta)
    return ff


def participation_ratio(e) -> float:
    """(sum e)^2 / sum e^2: N for a uniform field, 1 for a single site."""
    e = np.asarray(getattr(e, "e", e), dtype=float)
    scale = float(np.max(np.abs(e))) if e.size else 0.0
    if scale == 0:
        raise ValueError("participation ratio of an all-zero field is undefined")
    e = e / scale  # squares of tiny energies would underflow
    return float(np.sum(e) ** 2 / np.sum(e * e))


# ---------------------------------------------------------------------------
# detection and tracking


@dataclass(frozen=True)
class Thresholds:
    relative: float = 5.0  # local filtered energy over its spatial median
    floor_fraction: float = 1e-3  # absolute floor, fraction of the mean site energy
    min_samples: int = 3  # sustained detection
    span_fraction: float = 0.1  # a site counts toward the span above this share of the region peak
    max_hop: float = 2.0  # sites per sample when linking
    max_gap: int = 2  # missing samples bridged inside a track
    edge_fraction: float = 0.05  # discarded at each end of the record


@dataclass
class BreatherTrack:
    times: np.ndarray
    site_center: np.ndarray
    span_sites: np.ndarray
    t_start: float
    t_end: float
    frequency: float
    oscillation_count: float
    peak_energy: float
    n_sites: int = 0

    @property
    def lifetime(self) -> float:
        return self.t_end - self.t_start

    @property
    def mean_site(self) -> float:
        return float(_circular_mean(self.site_center, self.n_sites))

    @property
    def max_span(self) -> int:
        return int(self.span_sites.max())


def _circular_mean(x: np.ndarray, n: int) -> float:
    if n == 0:
        return float(np.mean(x))
    ang = 2 * np.pi * np.asarray(x) / n
    m = np.angle(np.mean(np.exp(1j * ang))) * n / (2 * np.pi)
    return float(m % n)


def _ring_dist(a: float, b: float, n: int) -> float:
    d = abs(a - b) % n
    return min(d, n - d)


def _runs(mask: np.ndarray) -> list[np.ndarray]:
    """Contiguous groups of True sites on a ring, as index arrays."""
    n = mask.size
    if not mask.any():
        return []
    if mask.all():
        return [np.arange(n)]
    start = int(np.argmin(mask))  # a False site; unroll the ring from there
    order = (np.arange(n) + start) % n
    m = mask[order]
    groups = []
    i = 0
    while i < n:
        if m[i]:
            j = i
            while j < n and m[j]:
                j += 1
            groups.append(order[i:j])
            i = j
        else:
            i += 1
    return groups


def local_filtered_energy(ff: FilteredField) -> np.ndarray:
    """1/2 omega_cut^2 |z|^2 with z the analytic signal of q^f, per (site, sample).

    The envelope removes the carrier oscillation, so a breather shows up as
    a sustained plateau instead of twice-per-period spikes.
    """
    z = hilbert(ff.qf, axis=-1)
    return 0.5 * ff.spec.omega_cut**2 * (z.real**2 + z.imag**2)


def track_breathers(
    ff: FilteredField,
    energy: np.ndarray | None = None,
    thresholds: Thresholds = Thresholds(),
    t0: float | None = None,
) -> list[BreatherTrack]:
    """Detect and link localised high-frequency regions.

    `energy` is the site-energy density shaped like ``ff.qf`` (sites, samples);
    it sets the absolute floor and the reported peak energy. Tracks whose mean
    frequency does not exceed omega_cut are dropped.
    """
    qf = ff.qf
    n_sites, n_t = qf.shape
    dt = ff.sample_interval
    t0 = ff.source_meta.get("t0", 0.0) if t0 is None else t0
    times = t0 + dt * np.arange(n_t)
    eps = local_filtered_energy(ff)
    z_phase = np.unwrap(np.angle(hilbert(qf, axis=-1)), axis=-1)

    if energy is not None:
        mean_site = float(np.mean(energy))
    else:
        mean_site = float(np.mean(eps))
    floor = thresholds.floor_fraction * mean_site

    edge = int(np.floor(thresholds.edge_fraction * n_t))
    lo, hi = edge, n_t - edge
    med = np.median(eps, axis=0)
    mask = (eps > thresholds.relative * med[None, :]) & (eps > floor)
    mask[:, :lo] = False
    mask[:, hi:] = False

    active: list[dict] = []
    finished: list[dict] = []
    for j in range(lo, hi):
        regions = []
        for sites in _runs(mask[:, j]):
            w = eps[sites, j]
            core = sites[w >= thresholds.span_fraction * w.max()]
            regions.append((_weighted_ring_center(sites, w, n_sites), core))
        # retire stale tracks
        still = []
        for tr in active:
            (finished if j - tr["last"] > thresholds.max_gap + 1 else still).append(tr)
        active = still
        # greedy nearest-center association
        pairs = []
        for ri, (c, _) in enumerate(regions):
            for ti, tr in enumerate(active):
                d = _ring_dist(c, tr["center"][-1], n_sites)
                if d <= thresholds.max_hop * (j - tr["last"]):
                    pairs.append((d, ri, ti))
        pairs.sort()
        used_r, used_t = set(), set()
        for d, ri, ti in pairs:
            if ri in used_r or ti in used_t:
                continue
            used_r.add(ri)
            used_t.add(ti)
            _extend(active[ti], j, *regions[ri])
        for ri, (c, sites) in enumerate(regions):
            if ri not in used_r:
                tr = {"idx": [], "center": [], "span": [], "sites": [], "last": j}
                _extend(tr, j, c, sites)
                active.append(tr)
    finished.extend(active)

    tracks = []
    for tr in finished:
        idx = np.array(tr["idx"])
        if idx.size < thresholds.min_samples:
            continue
        ts, te = times[idx[0]], times[idx[-1]]
        if te <= ts:
            continue
        # mean instantaneous frequency at the most energetic site of each sample
        lead = np.array([s[np.argmax(eps[s, i])] for s, i in zip(tr["sites"], idx)])
        freq = _mean_frequency(z_phase, lead, idx, dt)
        if not freq > ff.spec.omega_cut:
            continue
        peak_e = 0.0
        if energy is not None:
            peak_e = float(max(energy[s, i].max() for s, i in zip(tr["sites"], idx)))
        track = BreatherTrack(
            times=times[idx],
            site_center=np.array(tr["center"]),
            span_sites=np.array(tr["span"]),
            t_start=float(ts),
            t_end=float(te),
            frequency=freq,
            oscillation_count=float((te - ts) * freq / (2 * np.pi)),
            peak_energy=peak_e,
            n_sites=n_sites,
        )
        tracks.append(track)
    tracks.sort(key=lambda tr: (tr.t_start, tr.mean_site))
    return tracks


def _extend(tr: dict, j: int, center: float, sites: np.ndarray) -> None:
    tr["idx"].append(j)
    tr["center"].append(center)
    tr["span"].append(sites.size)
    tr["sites"].append(sites)
    tr["last"] = j


def _weighted_ring_center(sites: np.ndarray, w: np.ndarray, n: int) -> float:
    # sites come out of _runs in ring order, so unwrap them into a line
    lin = sites.astype(float).copy()
    for i in range(1, lin.size):
        while lin[i] < lin[i - 1]:
            lin[i] += n
    return float(np.dot(lin, w) / w.sum()) % n


def _mean_frequency(z_phase: np.ndarray, lead: np.ndarray, idx: np.ndarray, dt: float) -> float:
    """Average d(phase)/dt of the analytic signal along the track's leading site."""
    rates = []
    for a, b, site in zip(idx[:-1], idx[1:], lead[:-1]):
        rates.append((z_phase[site, b] - z_phase[site, a]) / ((b - a) * dt))
    if not rates:
        return float("nan")
    return float(np.mean(rates))


def breather_statistics(tracks: list[BreatherTrack], n_sites: int, duration: float, bins: int = 10) -> dict:
    """Track density per site and time unit, lifetime/span histograms and mean frequency."""
    if not tracks:
        return {
            "count": 0,
            "count_per_site_time": 0.0,
            "lifetime_hist": (np.zeros(bins, dtype=int), np.linspace(0, 1, bins + 1)),
            "span_hist": (np.zeros(0, dtype=int), np.zeros(0)),
            "mean_frequency": float("nan"),
        }
    life = np.array([t.lifetime for t in tracks])
    spans = np.array([t.max_span for t in tracks])
    return {
        "count": len(tracks),
        "count_per_site_time": len(tracks) / (n_sites * duration),
        "lifetime_hist": np.histogram(life, bins=bins),
        "span_hist": np.histogram(spans, bins=np.arange(0.5, spans.max() + 1.5)),
        "mean_frequency": float(np.mean([t.frequency for t in tracks])),
    }


def site_energy_field(trajectory: TrajectoryRecord) -> np.ndarray:
    """Site energies shaped (sites, samples) to align with a FilteredField."""
    return site_energy_series(trajectory.q, trajectory.p, trajectory.header.beta).T
