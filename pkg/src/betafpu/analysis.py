"""Equilibrium diagnostics on sampled mode records.

Every diagnostic exists as a streaming accumulator (``update(block)`` then
``result()``) so that long records never need to sit in memory, and as a
plain function over an iterable of record blocks.

Frequency sign: in the absence of nonlinearity a_k(t) = a_k(0) exp(-i omega_k t).
Spectra are therefore reported on the axis where that rotation sits at +omega_k.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .lattice import ParameterError, bond_stretch, energy_series, equipartition_indicator
from .modes import dispersion, normal_amplitudes
from .records import ModeRecord, TrajectoryRecord


class AnalysisError(ValueError):
    pass


def _resolve_eta(dispersion_used: str, eta: float) -> float:
    if dispersion_used == "bare":
        return 1.0
    if dispersion_used == "renormalized":
        if not eta >= 1.0:
            raise ParameterError("renormalized dispersion needs eta >= 1")
        return float(eta)
    raise ParameterError(f"dispersion_used must be 'bare' or 'renormalized', not {dispersion_used!r}")


# ---------------------------------------------------------------------------
# power spectra


@dataclass
class PowerSpectrum:
    mean_sq_a: np.ndarray
    omega: np.ndarray
    temperature_fit: float
    slope_fit: float
    dispersion_used: str = "bare"
    eta: float = 1.0

    @property
    def k(self) -> np.ndarray:
        return np.arange(1, self.mean_sq_a.size + 1)


def rayleigh_jeans_fit(omega: np.ndarray, mean_sq_a: np.ndarray, exclude: int = 3) -> tuple[float, float]:
    """Least-squares line through log <|a_k|^2> against log omega_k.

    The `exclude` lowest modes at both ends of k = 1..N-1 and the `exclude`
    modes nearest k = N/2 are left out. Returns (slope, T) with T = exp(intercept).
    """
    n = mean_sq_a.size
    N = n + 1
    k = np.arange(1, N)
    keep = (k > exclude) & (k < N - exclude) & (np.abs(k - N // 2) > (exclude - 1) // 2)
    keep &= mean_sq_a > 0
    if keep.sum() < 2:
        raise AnalysisError("too few modes left for the Rayleigh-Jeans fit")
    slope, intercept = np.polyfit(np.log(omega[keep]), np.log(mean_sq_a[keep]), 1)
    return float(slope), float(np.exp(intercept))


class ModeMoments:
    """Running sums of |Q_k|^2, |P_k|^2 and Im(P_k conj Q_k).

    These fix <|a_k|^2> for any choice of frequency after the fact:
    |P - i w Q|^2 = |P|^2 + w^2 |Q|^2 - 2 w Im(P conj Q).
    """

    def __init__(self, N: int):
        self.N = N
        self.count = 0
        self.sum_Q2 = np.zeros(N)
        self.sum_P2 = np.zeros(N)
        self.sum_cross = np.zeros(N)

    def update(self, rec: ModeRecord) -> None:
        self.count += len(rec)
        self.sum_Q2 += np.sum(np.abs(rec.Q) ** 2, axis=0)
        self.sum_P2 += np.sum(np.abs(rec.P) ** 2, axis=0)
        self.sum_cross += np.sum((rec.P * np.conj(rec.Q)).imag, axis=0)

    def _need(self):
        if self.count == 0:
            raise AnalysisError("empty record set")

    def mean_Q_sq(self) -> np.ndarray:
        """<|Q_k|^2> for k = 1..N-1."""
        self._need()
        return self.sum_Q2[1:] / self.count

    def mean_sq_a(self, eta: float = 1.0) -> np.ndarray:
        self._need()
        w = dispersion(self.N, eta)
        c = self.count
        return (self.sum_P2[1:] / c + w * w * self.sum_Q2[1:] / c - 2 * w * self.sum_cross[1:] / c) / (2 * w)

    def mode_energy(self) -> np.ndarray:
        """Time-averaged linear mode energies, k = 1..N-1."""
        self._need()
        w2 = dispersion(self.N) ** 2
        return 0.5 * (self.sum_P2[1:] + w2 * self.sum_Q2[1:]) / self.count

    def equipartition(self) -> float:
        return equipartition_indicator(self.mode_energy())

    def spectrum(self, dispersion_used: str = "bare", eta: float = 1.0, exclude: int = 3) -> PowerSpectrum:
        eta = _resolve_eta(dispersion_used, eta)
        msa = self.mean_sq_a(eta)
        omega = dispersion(self.N, eta)
        slope, T = rayleigh_jeans_fit(omega, msa, exclude)
        return PowerSpectrum(msa, omega, T, slope, dispersion_used, eta)


def average_power_spectrum(
    mode_records: Iterable[ModeRecord], dispersion_used: str = "bare", eta: float = 1.0, exclude: int = 3
) -> PowerSpectrum:
    """<|a_k|^2> per mode with its Rayleigh-Jeans (log-log) fit."""
    acc = None
    for rec in mode_records:
        if acc is None:
            acc = ModeMoments(rec.Q.shape[-1])
        acc.update(rec)
    if acc is None:
        raise AnalysisError("empty record set")
    return acc.spectrum(dispersion_used, eta, exclude)


# ---------------------------------------------------------------------------
# omega-k spectrogram


@dataclass
class SpectrogramResult:
    power: np.ndarray  # (N-1, nbins), density per unit omega
    omega_bins: np.ndarray  # ascending
    peak_omega: np.ndarray
    width: np.ndarray
    window_meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.power.shape[0] + 1

    @property
    def bin_width(self) -> float:
        return float(self.omega_bins[1] - self.omega_bins[0])


def peak_and_width(power: np.ndarray, omega_bins: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Parabolic-interpolated peak location and integrated/peak width per row."""
    dw = omega_bins[1] - omega_bins[0]
    n = power.shape[-1]
    i = np.argmax(power, axis=-1)
    rows = np.arange(power.shape[0])
    y0 = power[rows, i]
    ym = power[rows, np.clip(i - 1, 0, n - 1)]
    yp = power[rows, np.clip(i + 1, 0, n - 1)]
    denom = ym - 2 * y0 + yp
    interior = (i > 0) & (i < n - 1) & (denom < 0)
    shift = np.where(interior, 0.5 * (ym - yp) / np.where(interior, denom, 1.0), 0.0)
    peak = omega_bins[i] + shift * dw
    with np.errstate(invalid="ignore", divide="ignore"):
        width = np.where(y0 > 0, power.sum(axis=-1) * dw / y0, 0.0)
    peak = np.where(y0 > 0, peak, np.nan)
    return peak, width


class WelchSpectrogram:
    """Segment-averaged periodograms of the complex series a_k(t), one per k.

    Hann taper, `overlap` fraction of shared samples between consecutive
    segments. The normalisation makes sum(power) * d_omega equal to the
    mean of |a_k|^2 (up to taper bias).
    """

    def __init__(self, N: int, sample_interval: float, segment: int = 2**14, overlap: float = 0.5, eta: float = 1.0):
        if segment < 8:
            raise ParameterError("segment length too short")
        self.N = N
        self.dt = float(sample_interval)
        self.segment = int(segment)
        self.hop = max(1, int(round(self.segment * (1 - overlap))))
        self.overlap = overlap
        self.eta = float(eta)
        self.omega = dispersion(N, self.eta)
        self.window = np.hanning(self.segment)
        self._buf = np.empty((0, N - 1), dtype=complex)
        self._acc = np.zeros((self.segment, N - 1))
        self.nseg = 0

    def update(self, rec: ModeRecord) -> None:
        a = normal_amplitudes(rec.Q, rec.P, self.omega)
        self.push(a)

    def push(self, a: np.ndarray) -> None:
        """Feed normal amplitudes shaped (m, N-1) directly."""
        self._buf = np.concatenate([self._buf, a]) if self._buf.size else np.asarray(a, dtype=complex)
        while self._buf.shape[0] >= self.segment:
            seg = self._buf[: self.segment]
            X = np.fft.fft(seg * self.window[:, None], axis=0)
            self._acc += X.real**2 + X.imag**2
            self.nseg += 1
            self._buf = self._buf[self.hop :]

    def result(self) -> SpectrogramResult:
        if self.nseg == 0:
            raise AnalysisError(f"record too short for one segment of {self.segment} samples")
        scale = self.dt / (2 * np.pi * np.sum(self.window**2) * self.nseg)
        # exp(-i w t) lands on numpy frequency -w/(2 pi); flip so it reads +w
        omega = -2 * np.pi * np.fft.fftfreq(self.segment, self.dt)
        order = np.argsort(omega, kind="stable")
        power = (self._acc[order] * scale).T.copy()
        omega = omega[order]
        peak, width = peak_and_width(power, omega)
        meta = {
            "segment": self.segment,
            "overlap": self.overlap,
            "taper": "hann",
            "segments": self.nseg,
            "sample_interval": self.dt,
            "eta": self.eta,
        }
        return SpectrogramResult(power, omega, peak, width, meta)


def spectrogram(
    mode_records: Iterable[ModeRecord], segment: int = 2**14, overlap: float = 0.5, eta: float = 1.0
) -> SpectrogramResult:
    acc = None
    for rec in mode_records:
        if acc is None:
            acc = WelchSpectrogram(rec.header.N, rec.header.sample_interval, segment, overlap, eta)
        acc.update(rec)
    if acc is None:
        raise AnalysisError("empty record set")
    return acc.result()


@dataclass
class EtaEstimate:
    eta: float  # least-squares fit of the whole peak locus
    eta_single: float  # peak at k = N/2 divided by 2
    residual_rms: float  # rms(peak - fit) / rms(fit)


def measure_eta(spec: SpectrogramResult, N: int | None = None) -> EtaEstimate:
    """Fit peak_omega[k] = eta * 2 sin(pi k/N) by least squares."""
    N = N or spec.N
    s = dispersion(N)
    peak = spec.peak_omega
    if peak.shape != s.shape or not np.all(np.isfinite(peak)) or np.any(peak <= 0):
        raise AnalysisError("degenerate spectral peaks; cannot fit a dispersion curve")
    eta = float(np.dot(peak, s) / np.dot(s, s))
    fit = eta * s
    resid = float(np.sqrt(np.mean((peak - fit) ** 2)) / np.sqrt(np.mean(fit**2)))
    return EtaEstimate(eta, float(peak[N // 2 - 1] / 2.0), resid)


@dataclass
class ScalingFit:
    exponent: float
    prefactor: float
    r_squared: float
    points: list


def eta_beta_scaling(points) -> ScalingFit:
    """Power law eta = prefactor * beta**exponent by log-log least squares."""
    pts = [(float(b), float(e)) for b, e in points]
    b = np.array([p[0] for p in pts])
    e = np.array([p[1] for p in pts])
    if np.any(b <= 0) or np.any(e <= 0):
        raise AnalysisError("beta and eta must be positive for a log-log fit")
    if b.size < 2:
        raise AnalysisError("need at least two points")
    x, y = np.log(b), np.log(e)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return ScalingFit(float(slope), float(np.exp(intercept)), float(min(max(r2, 0.0), 1.0)), pts)


# ---------------------------------------------------------------------------
# energy ratios


class RatioAccumulator:
    """Per-sample energy pieces from which H4/H2 and H4~/H2~ follow for any eta.

    H2~ = 1/2 sum_{k>=1} (|P_k|^2 + eta^2 omega_k^2 |Q_k|^2) is evaluated in
    site space: sum_{k>=1} |P_k|^2 = sum p^2 - (sum p)^2/N and
    sum_k omega_k^2 |Q_k|^2 = sum_i (q_i - q_{i+1})^2.
    """

    def __init__(self, beta: float):
        self.beta = float(beta)
        self._h2: list[np.ndarray] = []
        self._h4: list[np.ndarray] = []
        self._kin: list[np.ndarray] = []
        self._pot: list[np.ndarray] = []

    def update(self, rec: TrajectoryRecord) -> None:
        q, p = rec.q, rec.p
        N = q.shape[-1]
        h2, h4 = energy_series(q, p, self.beta)
        self._h2.append(h2)
        self._h4.append(h4)
        self._kin.append(np.sum(p * p, axis=-1) - np.sum(p, axis=-1) ** 2 / N)
        self._pot.append(np.sum(bond_stretch(q) ** 2, axis=-1))

    @property
    def count(self) -> int:
        return sum(x.size for x in self._h2)

    def total_energy(self) -> np.ndarray:
        return np.concatenate(self._h2) + np.concatenate(self._h4)

    def result(self, eta: float) -> dict:
        if not self._h2:
            raise AnalysisError("empty record set")
        h2 = np.concatenate(self._h2)
        h4 = np.concatenate(self._h4)
        h2t = 0.5 * (np.concatenate(self._kin) + eta**2 * np.concatenate(self._pot))
        return {
            "h4_over_h2": float(np.mean(h4 / h2)),
            "h4t_over_h2t": float(np.mean((h2 + h4 - h2t) / h2t)),
        }


def nonlinearity_ratios(trajectory: Iterable[TrajectoryRecord], eta: float, beta: float | None = None) -> dict:
    """Time averages of H4/H2 and of H4~/H2~ under the supplied eta."""
    acc = None
    for rec in trajectory:
        if acc is None:
            acc = RatioAccumulator(rec.header.beta if beta is None else beta)
        acc.update(rec)
    if acc is None:
        raise AnalysisError("empty record set")
    return acc.result(eta)


# ---------------------------------------------------------------------------
# quartic terms


def _bond_modes(Q: np.ndarray) -> np.ndarray:
    N = Q.shape[-1]
    return Q * (1.0 - np.exp(2j * np.pi * np.arange(N) / N))


def quartic_sums(Q: np.ndarray, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Resonant and total quartic energy for each frame of Q (shape (..., N)).

    With R_k = Q_k (1 - exp(2 pi i k/N)), H4 = beta/(4N) sum R_a R_b R_c R_d over
    a, b, c, d in 1..N-1 with a+b+c+d a multiple of N. Writing the last two
    factors as conj(R_{N-c}) conj(R_{N-d}) shows that the sum 2N is exactly the
    Q_k Q_l Q_m* Q_s* family with k+l = m+s; sums N and 3N are the rest. The
    sums over each class are read off the fourth power of the generating
    polynomial sum_a R_a x^a.
    """
    N = Q.shape[-1]
    R = _bond_modes(np.asarray(Q))
    R[..., 0] = 0.0
    L = 1 << int(np.ceil(np.log2(4 * N)))
    F = np.fft.fft(R, n=L, axis=-1)
    c4 = np.fft.ifft(F**4, axis=-1)
    pref = beta / (4.0 * N)
    resonant = pref * c4[..., 2 * N].real
    total = pref * (c4[..., N] + c4[..., 2 * N] + c4[..., 3 * N]).real
    return resonant, total


class ResonantFractionAccumulator:
    """Evaluates the quartic split on a random subset of frames.

    `total_samples` is the number of frames that will be streamed; `n_frames`
    of them are picked without replacement. With total_samples=None every frame
    is used.
    """

    def __init__(self, beta: float, n_frames: int = 100, total_samples: int | None = None, seed=0):
        self.beta = float(beta)
        self._pick = None
        if total_samples is not None:
            rng = np.random.default_rng(seed)
            n = min(n_frames, total_samples)
            self._pick = np.sort(rng.choice(total_samples, size=n, replace=False))
        self._seen = 0
        self.resonant: list[np.ndarray] = []
        self.total: list[np.ndarray] = []

    def update(self, rec: ModeRecord) -> None:
        m = len(rec)
        if self._pick is None:
            idx = np.arange(m)
        else:
            lo, hi = np.searchsorted(self._pick, [self._seen, self._seen + m])
            idx = self._pick[lo:hi] - self._seen
        self._seen += m
        if idx.size:
            r, t = quartic_sums(rec.Q[idx], self.beta)
            self.resonant.append(r)
            self.total.append(t)

    def result(self) -> float:
        """<|resonant|> / (<|resonant|> + <|rest|>), a share in [0, 1]."""
        if not self.total:
            raise AnalysisError("no frames evaluated")
        r = np.concatenate(self.resonant)
        rest = np.concatenate(self.total) - r
        num = np.mean(np.abs(r))
        denom = num + np.mean(np.abs(rest))
        if denom == 0:
            return 1.0
        return float(num / denom)


def resonant_quartic_fraction(mode_records: Iterable[ModeRecord], n_frames: int | None = 100, seed=0) -> float:
    """Share of the quartic energy carried by Q_k Q_l Q_m* Q_s* terms with k+l = m+s.

    The share is <|resonant|> / (<|resonant|> + <|rest|>) over the selected
    frames; the two parts always add up to H4 frame by frame. Frames are drawn at random (n_frames of them, reproducible via seed);
    n_frames=None uses every frame.
    """
    records = list(mode_records)
    if not records:
        raise AnalysisError("empty record set")
    total = sum(len(r) for r in records)
    acc = ResonantFractionAccumulator(
        records[0].header.beta, n_frames or total, None if n_frames is None else total, seed
    )
    for rec in records:
        acc.update(rec)
    return acc.result()


# ---------------------------------------------------------------------------
# single-mode evolution


@dataclass
class ModeEvolution:
    k: int
    omega: float
    t: np.ndarray
    amplitude: np.ndarray
    phase: np.ndarray  # unwrapped, linear rotation removed


def demodulate(t: np.ndarray, a: np.ndarray, omega: float) -> np.ndarray:
    """phi(t) with a = |a| exp(-i(phi + omega t)); unwrapped."""
    return np.unwrap(np.angle(np.conj(a) * np.exp(-1j * omega * t)))


class ModeTracker:
    """Keeps Q_k(t), P_k(t) of one mode so it can be demodulated with any frequency."""

    def __init__(self, N: int, k: int):
        if not 1 <= k <= N - 1:
            raise ParameterError(f"k must lie in 1..{N - 1}")
        self.N, self.k = N, k
        self._t: list[np.ndarray] = []
        self._Q: list[np.ndarray] = []
        self._P: list[np.ndarray] = []

    def update(self, rec: ModeRecord) -> None:
        self._t.append(rec.t)
        # copies, so the full blocks are not kept alive through views
        self._Q.append(rec.Q[:, self.k].copy())
        self._P.append(rec.P[:, self.k].copy())

    def result(self, dispersion_used: str = "bare", eta: float = 1.0) -> ModeEvolution:
        if not self._t:
            raise AnalysisError("empty record set")
        w = _resolve_eta(dispersion_used, eta) * dispersion(self.N)[self.k - 1]
        return self.evolution(w)

    def evolution(self, omega: float) -> ModeEvolution:
        """Amplitude and phase using an arbitrary (positive) frequency."""
        t = np.concatenate(self._t)
        a = (np.concatenate(self._P) - 1j * omega * np.concatenate(self._Q)) / np.sqrt(2 * omega)
        return ModeEvolution(self.k, float(omega), t, np.abs(a), demodulate(t, a, omega))


def mode_evolution_record(
    mode_records: Iterable[ModeRecord], k: int, dispersion_used: str = "bare", eta: float = 1.0
) -> ModeEvolution:
    """|a_k(t)| and the phase left after removing the linear rotation."""
    tracker = None
    for rec in mode_records:
        if tracker is None:
            tracker = ModeTracker(rec.Q.shape[-1], k)
        tracker.update(rec)
    if tracker is None:
        raise AnalysisError("empty record set")
    return tracker.result(dispersion_used, eta)


def phase_drift(evo: ModeEvolution, n_periods: float = 10.0, excursion: bool = False) -> float:
    """Median over consecutive windows of n_periods * 2 pi/omega of the net
    phase change |phi(end) - phi(start)|, or of max |phi - phi(start)| when
    `excursion` is set."""
    span = n_periods * 2 * np.pi / evo.omega
    t0 = evo.t[0]
    nwin = int((evo.t[-1] - t0) // span)
    if nwin < 1:
        raise AnalysisError("record shorter than one drift window")
    win = ((evo.t - t0) // span).astype(int)
    drifts = []
    for w in range(nwin):
        ph = evo.phase[win == w]
        drifts.append(np.max(np.abs(ph - ph[0])) if excursion else abs(ph[-1] - ph[0]))
    return float(np.median(drifts))


def modulation_depth(evo: ModeEvolution, n_periods: float = 10.0) -> float:
    """Median over windows of (max - min)/mean of |a_k|."""
    span = n_periods * 2 * np.pi / evo.omega
    win = ((evo.t - evo.t[0]) // span).astype(int)
    nwin = int(win.max())
    if nwin < 1:
        raise AnalysisError("record shorter than one window")
    out = []
    for w in range(nwin):
        amp = evo.amplitude[win == w]
        out.append((amp.max() - amp.min()) / amp.mean())
    return float(np.median(out))


# ---------------------------------------------------------------------------
# near-resonant quartets


def near_resonance_count(N: int, omega: np.ndarray, delta: float) -> int:
    """Ordered quartets (k1, k2, k3, k4) in 1..N-1 with k1+k2 = k3+k4 (mod N)
    and |w1 + w2 - w3 - w4| < delta. `omega` holds w_k for k = 1..N-1."""
    if not delta > 0:
        raise ParameterError("delta must be positive")
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (N - 1,):
        raise ParameterError(f"omega must hold N-1={N - 1} entries")
    k = np.arange(1, N)
    s = ((k[:, None] + k[None, :]) % N).ravel()
    w = (omega[:, None] + omega[None, :]).ravel()
    count = 0
    for r in np.unique(s):
        ws = np.sort(w[s == r])
        hi = np.searchsorted(ws, ws + delta, side="left")
        lo = np.searchsorted(ws, ws - delta, side="right")
        count += int(np.sum(hi - lo))
    return count
