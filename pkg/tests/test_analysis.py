import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from synthetic import linear_chain_records, modes_from_amplitudes, rotating_records

from betafpu import analysis as an
from betafpu.lattice import ChainParams, ChainState, ParameterError, random_initial_state, total_energy
from betafpu.modes import dispersion, normal_amplitudes, to_modes
from betafpu.records import ModeRecord, RecordHeader
from betafpu.verify import brute_force_near_resonance, brute_force_quartic


def test_synthetic_amplitudes_round_trip():
    rng = np.random.default_rng(0)
    N = 16
    w = dispersion(N, 1.3)
    a = rng.standard_normal((3, N - 1)) + 1j * rng.standard_normal((3, N - 1))
    Q, P = modes_from_amplitudes(a, w)
    np.testing.assert_allclose(normal_amplitudes(Q, P, w), a, atol=1e-13)
    # the corresponding site data is real
    assert np.abs(np.fft.ifft(Q, norm="ortho").imag).max() < 1e-13


# --- power spectrum ---------------------------------------------------------------


def test_rayleigh_jeans_exact():
    w = dispersion(128)
    slope, T = an.rayleigh_jeans_fit(w, 2.5 / w)
    assert slope == pytest.approx(-1.0, abs=1e-12)
    assert T == pytest.approx(2.5, rel=1e-12)


def test_average_spectrum_synthetic_rayleigh_jeans():
    N, T = 64, 3.0
    w = dispersion(N)
    rng = np.random.default_rng(1)
    t = 0.1 * np.arange(500)
    amp = np.sqrt(T / w) * np.exp(1j * rng.uniform(0, 2 * np.pi, N - 1))
    spec = an.average_power_spectrum(rotating_records(amp, w, w, t))
    np.testing.assert_allclose(spec.mean_sq_a, T / w, rtol=1e-12)
    assert spec.slope_fit == pytest.approx(-1.0, abs=1e-9)
    assert spec.temperature_fit == pytest.approx(T, rel=1e-9)


@settings(max_examples=20, deadline=None)
@given(theta=st.floats(0, 2 * np.pi))
def test_average_spectrum_phase_invariant(theta):
    N = 32
    w = dispersion(N)
    rng = np.random.default_rng(2)
    t = 0.1 * np.arange(200)
    amp = rng.standard_normal(N - 1) + 1j * rng.standard_normal(N - 1)
    base = an.average_power_spectrum(rotating_records(amp, 1.1 * w, w, t))
    rot = an.average_power_spectrum(rotating_records(amp * np.exp(1j * theta), 1.1 * w, w, t))
    np.testing.assert_allclose(rot.mean_sq_a, base.mean_sq_a, rtol=1e-10)


def test_renormalized_spectrum_needs_eta_at_least_one():
    rec = linear_chain_records(16, 50.0).modes()
    with pytest.raises(ParameterError):
        an.average_power_spectrum(rec, "renormalized", 0.5)
    with pytest.raises(ParameterError):
        an.average_power_spectrum(rec, "sideways")


def test_empty_records():
    with pytest.raises(an.AnalysisError):
        an.average_power_spectrum([])
    with pytest.raises(an.AnalysisError):
        an.spectrogram([])


# --- spectrogram ----------------------------------------------------------------


def _single_mode_state(N, k, amp=1.0):
    j = np.arange(N)
    return ChainState(amp * np.cos(2 * np.pi * k * j / N), np.zeros(N))


def test_linear_single_mode_ridge():
    N, k0 = 16, 5
    col = linear_chain_records(N, 420.0, state=_single_mode_state(N, k0))
    spec = an.spectrogram(col.modes(), segment=1024)
    row = spec.power[k0 - 1]
    assert abs(spec.peak_omega[k0 - 1] - dispersion(N)[k0 - 1]) < spec.bin_width
    # delta-like: nearly all power within a few bins of the peak
    i = np.argmax(row)
    assert row[i - 3 : i + 4].sum() > 0.99 * row.sum()


def test_linear_chain_eta_is_one():
    col = linear_chain_records(32, 1700.0, seed=3)
    spec = an.spectrogram(col.modes(), segment=4096)
    est = an.measure_eta(spec)
    assert abs(est.eta - 1.0) * 2 < spec.bin_width
    assert abs(est.eta_single - 1.0) * 2 < spec.bin_width
    assert est.residual_rms < 0.01


@pytest.mark.parametrize("eta0", [1.0, 1.5, 2.0])
def test_measure_eta_recovers_synthetic(eta0):
    N = 32
    w = dispersion(N)
    rng = np.random.default_rng(4)
    amp = np.exp(1j * rng.uniform(0, 2 * np.pi, N - 1))
    t = 0.1 * np.arange(8192)
    spec = an.spectrogram(rotating_records(amp, eta0 * w, w, t), segment=2048)
    est = an.measure_eta(spec)
    assert abs(est.eta - eta0) * np.max(w) < spec.bin_width


def test_welch_normalisation_white_noise():
    rng = np.random.default_rng(5)
    m, n = 2**14, 7
    a = (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))) / np.sqrt(2)
    acc = an.WelchSpectrogram(n + 1, 0.1, segment=1024)
    acc.push(a)
    res = acc.result()
    total = res.power.sum(axis=1) * res.bin_width
    np.testing.assert_allclose(total, 1.0, rtol=0.05)
    assert res.window_meta["taper"] == "hann"
    assert res.window_meta["segments"] == (m - 1024) // 512 + 1


def test_welch_block_boundaries_do_not_matter():
    rng = np.random.default_rng(6)
    a = rng.standard_normal((5000, 3)) + 1j * rng.standard_normal((5000, 3))
    one = an.WelchSpectrogram(4, 0.1, segment=512)
    one.push(a)
    many = an.WelchSpectrogram(4, 0.1, segment=512)
    for s in range(0, 5000, 333):
        many.push(a[s : s + 333])
    np.testing.assert_allclose(many.result().power, one.result().power, rtol=1e-12)


def test_welch_too_short():
    acc = an.WelchSpectrogram(8, 0.1, segment=1024)
    acc.push(np.zeros((100, 7), complex))
    with pytest.raises(an.AnalysisError):
        acc.result()


def test_peak_and_width_shapes():
    w = np.linspace(-5, 5, 101)
    dw = w[1] - w[0]
    box = np.where(np.abs(w - 1.0) < 0.5 + 1e-9, 2.0, 0.0)[None, :]
    _, width = an.peak_and_width(box, w)
    assert width[0] == pytest.approx(11 * dw)
    # a sampled parabola peaks exactly at its vertex
    par = (10.0 - (w - 0.537) ** 2)[None, :]
    par = np.where(par > 0, par, 0.0)
    peak, _ = an.peak_and_width(par, w)
    assert peak[0] == pytest.approx(0.537, abs=1e-12)


def test_eta_scaling_exact_power_law():
    betas = [1, 2, 4, 8, 16, 32, 64, 128]
    fit = an.eta_beta_scaling([(b, b**0.2) for b in betas])
    assert fit.exponent == pytest.approx(0.2, abs=1e-12)
    assert fit.prefactor == pytest.approx(1.0)
    assert fit.r_squared == pytest.approx(1.0)
    with pytest.raises(an.AnalysisError):
        an.eta_beta_scaling([(0.0, 1.0), (1.0, 1.0)])


# --- ratios -------------------------------------------------------------------------


def test_ratios_vanish_for_linear_chain():
    col = linear_chain_records(32, 30.0)
    r = an.nonlinearity_ratios(col.blocks, 1.0)
    assert r["h4_over_h2"] == 0.0
    assert r["h4t_over_h2t"] == pytest.approx(0.0, abs=1e-12)


def test_ratios_match_direct_evaluation():
    beta = 2.0
    col = linear_chain_records(32, 20.0, beta=beta, seed=4)
    traj = col.trajectory()
    eta = 1.3
    r = an.nonlinearity_ratios(col.blocks, eta)
    w = dispersion(32, eta)
    want4, wantt = [], []
    for q, p in zip(traj.q, traj.p):
        s = ChainState(q, p)
        e = total_energy(s, ChainParams(32, beta))
        m = to_modes(s)
        h2t = 0.5 * np.sum(np.abs(m.P[1:]) ** 2 + w**2 * np.abs(m.Q[1:]) ** 2)
        want4.append(e.h4 / e.h2)
        wantt.append((e.total - h2t) / h2t)
    assert r["h4_over_h2"] == pytest.approx(np.mean(want4), rel=1e-12)
    assert r["h4t_over_h2t"] == pytest.approx(np.mean(wantt), rel=1e-9)


# --- quartic decomposition --------------------------------------------------------


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), N=st.sampled_from([4, 8, 16, 32]), beta=st.floats(0.1, 10))
def test_quartic_sums_against_enumeration(seed, N, beta):
    params = ChainParams(N, beta)
    s = random_initial_state(params, seed)
    Q = to_modes(s).Q
    res, tot = an.quartic_sums(Q, beta)
    res_bf, tot_bf = brute_force_quartic(Q, beta)
    h4 = total_energy(s, params).h4
    assert tot == pytest.approx(h4, rel=1e-8)
    assert tot_bf == pytest.approx(h4, rel=1e-8)
    assert res == pytest.approx(res_bf, rel=1e-8, abs=1e-10 * h4)


def test_single_mode_is_fully_resonant():
    N, k0 = 16, 3
    Q = to_modes(_single_mode_state(N, k0, 0.7)).Q
    res, tot = an.quartic_sums(Q, 1.0)
    assert res == pytest.approx(tot, rel=1e-12)
    header = RecordHeader(N, 1.0, 0.01, 1)
    rec = ModeRecord(np.zeros(1), Q[None, :], np.zeros((1, N), complex), header)
    assert an.resonant_quartic_fraction([rec], n_frames=None) == pytest.approx(1.0)


def test_quarter_wavelength_mode_has_umklapp_terms():
    # 4 k0 = N puts the all-equal quartet outside the k+l=m+s family
    N = 16
    Q = to_modes(_single_mode_state(N, N // 4, 0.7)).Q
    res, tot = an.quartic_sums(Q, 1.0)
    assert abs(res - tot) > 1e-3 * abs(tot)


def test_resonant_fraction_is_a_share():
    col = linear_chain_records(32, 50.0, beta=1.0, seed=8, stride=50)
    f = an.resonant_quartic_fraction(col.modes(), n_frames=20, seed=1)
    assert 0.0 <= f <= 1.0
    assert f == an.resonant_quartic_fraction(col.modes(), n_frames=20, seed=1)


def test_resonant_fraction_subsample_picks_requested_frames():
    col = linear_chain_records(16, 100.0, beta=1.0, seed=8, stride=10)
    acc = an.ResonantFractionAccumulator(1.0, n_frames=17, total_samples=100, seed=3)
    for rec in col.modes():
        acc.update(rec)
    assert sum(r.size for r in acc.resonant) == 17


# --- single-mode evolution ------------------------------------------------------------


def test_linear_chain_phase_is_constant():
    col = linear_chain_records(32, 500.0, seed=9)
    evo = an.mode_evolution_record(col.modes(), 5, "bare")
    assert np.ptp(evo.phase) < 1e-8
    assert np.ptp(evo.amplitude) < 1e-8 * evo.amplitude.mean()


@given(st.floats(0.2, 3.0), st.floats(-0.5, 0.5))
def test_wrong_frequency_gives_phase_ramp(w_true, offset):
    t = np.linspace(0, 50, 2001)
    a = 0.8 * np.exp(-1j * (w_true * t + 0.3))
    phi = an.demodulate(t, a, w_true + offset)
    slope = np.polyfit(t, phi, 1)[0]
    assert slope == pytest.approx(w_true - (w_true + offset), abs=1e-9)


def test_phase_drift_of_linear_ramp():
    w = 1.0
    t = np.arange(0, 1000, 0.05)
    phi = 0.01 * t
    evo = an.ModeEvolution(1, w, t, np.ones_like(t), phi)
    span = 10 * 2 * np.pi / w
    assert an.phase_drift(evo) == pytest.approx(0.01 * span, rel=1e-2)
    assert an.phase_drift(evo, excursion=True) == pytest.approx(0.01 * span, rel=1e-2)
    assert an.modulation_depth(evo) == 0.0
    with pytest.raises(an.AnalysisError):
        an.phase_drift(an.ModeEvolution(1, w, t[:10], np.ones(10), phi[:10]))


def test_mode_tracker_frame_choice():
    col = linear_chain_records(32, 200.0, seed=2)
    tr = an.ModeTracker(32, 7)
    for rec in col.modes():
        tr.update(rec)
    bare = tr.result("bare")
    assert bare.omega == pytest.approx(dispersion(32)[6])
    ren = tr.result("renormalized", 1.5)
    assert ren.omega == pytest.approx(1.5 * dispersion(32)[6])
    with pytest.raises(ParameterError):
        an.ModeTracker(32, 32)


# --- near resonances --------------------------------------------------------------


@pytest.mark.parametrize("delta", [0.05, 0.1, 0.5, 1.0])
def test_near_resonance_matches_enumeration(delta):
    w = dispersion(8)
    assert an.near_resonance_count(8, w, delta) == brute_force_near_resonance(8, w, delta)


def _trivial_quartets(N):
    count = 0
    for k1, k2, k3, k4 in itertools.product(range(1, N), repeat=4):
        if (k1 + k2 - k3 - k4) % N:
            continue
        same = sorted((k1, k2)) == sorted((k3, k4))
        mirror = sorted((k3, k4)) == sorted((N - k1, N - k2))
        count += same or mirror
    return count


@pytest.mark.parametrize("N", [8, 16])
def test_no_exact_resonances_beyond_trivial(N):
    # omega_{N-k} = omega_k, so mirrored pairs are degenerate by symmetry
    assert an.near_resonance_count(N, dispersion(N), 1e-9) == _trivial_quartets(N)


def test_wide_delta_counts_every_constrained_quartet():
    N = 8
    w = dispersion(N)
    total = sum(
        1 for k1, k2, k3, k4 in itertools.product(range(1, N), repeat=4) if (k1 + k2 - k3 - k4) % N == 0
    )
    assert an.near_resonance_count(N, w, 2 * w.max()) == total


def test_near_resonance_validation():
    with pytest.raises(ParameterError):
        an.near_resonance_count(8, dispersion(8), 0.0)
    with pytest.raises(ParameterError):
        an.near_resonance_count(8, dispersion(16), 0.1)
