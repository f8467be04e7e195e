"""Independent numerical oracles for the core operations.

Each check pits an implementation path against a brute-force or
finite-difference computation and reports pass/fail with the observed error.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .analysis import near_resonance_count, quartic_sums
from .breathers import FilterSpec, highpass_filter
from .lattice import (
    ChainParams,
    ChainState,
    energy_series,
    forces,
    integrate,
    random_initial_state,
    site_energy_density,
    step,
    total_energy,
)
from .modes import (
    bare_from_renormalized,
    dispersion,
    from_modes,
    normal_amplitudes,
    renormalized_from_bare,
    to_modes,
    transform,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: {self.value:.3e} (tol {self.tolerance:.0e})"


def _states(rng, n_states, N, beta, energy=200.0):
    params = ChainParams(N, beta, energy)
    for _ in range(n_states):
        yield params, random_initial_state(params, rng)


def brute_force_dft(x: np.ndarray) -> np.ndarray:
    """O(N^2) unitary DFT by explicit summation."""
    N = x.size
    out = np.zeros(N, dtype=complex)
    for k in range(N):
        for j in range(N):
            out[k] += x[j] * np.exp(-2j * np.pi * j * k / N)
    return out / np.sqrt(N)


def fd_forces(state: ChainState, params: ChainParams, h: float = 1e-6) -> np.ndarray:
    """Central finite difference of -H with respect to each q_i."""
    out = np.empty(params.N)
    for i in range(params.N):
        qp, qm = state.q.copy(), state.q.copy()
        qp[i] += h
        qm[i] -= h
        ep = total_energy(ChainState(qp, state.p), params).total
        em = total_energy(ChainState(qm, state.p), params).total
        out[i] = -(ep - em) / (2 * h)
    return out


def brute_force_quartic(Q: np.ndarray, beta: float) -> tuple[float, float]:
    """Enumerate every (a, b, c, d) in 1..N-1 with a+b+c+d = 0 (mod N)."""
    N = Q.size
    R = Q * (1.0 - np.exp(2j * np.pi * np.arange(N) / N))
    resonant = total = 0.0
    for a, b, c in itertools.product(range(1, N), repeat=3):
        d = (-(a + b + c)) % N
        if d == 0:
            continue
        term = R[a] * R[b] * R[c] * R[d]
        total += term.real
        if a + b + c + d == 2 * N:
            resonant += term.real
    pref = beta / (4.0 * N)
    return pref * resonant, pref * total


def brute_force_near_resonance(N: int, omega: np.ndarray, delta: float) -> int:
    count = 0
    for k1, k2, k3, k4 in itertools.product(range(1, N), repeat=4):
        if (k1 + k2 - k3 - k4) % N == 0:
            if abs(omega[k1 - 1] + omega[k2 - 1] - omega[k3 - 1] - omega[k4 - 1]) < delta:
                count += 1
    return count


# ---------------------------------------------------------------------------
# checks


def check_forces(rng, n_states=100, N=16) -> CheckResult:
    worst = 0.0
    for params, s in _states(rng, n_states, N, float(rng.uniform(0, 10))):
        f = forces(s, params)
        worst = max(worst, np.max(np.abs(fd_forces(s, params) - f)) / np.max(np.abs(f)))
    return CheckResult("forces vs central finite differences", worst < 1e-6, worst, 1e-6)


def check_dft(rng, n_states=20) -> CheckResult:
    worst = 0.0
    for _ in range(n_states):
        N = int(rng.choice([4, 6, 8, 12, 16]))
        q, p = rng.standard_normal(N), rng.standard_normal(N)
        Q, P = transform(q, p)
        worst = max(worst, np.max(np.abs(Q - brute_force_dft(q))), np.max(np.abs(P - brute_force_dft(p))))
    return CheckResult("unitary transform vs brute-force DFT", worst < 1e-10, worst, 1e-10)


def check_round_trip(rng, n_states=100) -> CheckResult:
    worst = 0.0
    for params, s in _states(rng, n_states, 64, 1.0):
        back = from_modes(to_modes(s))
        worst = max(worst, np.max(np.abs(back.q - s.q)), np.max(np.abs(back.p - s.p)))
    return CheckResult("to_modes/from_modes round trip", worst < 1e-10, worst, 1e-10)


def check_parseval(rng, n_states=100) -> CheckResult:
    worst = 0.0
    for params, s in _states(rng, n_states, 128, 1.0):
        m = to_modes(s)
        w = dispersion(params.N)
        h2_modes = 0.5 * np.sum(np.abs(m.P) ** 2) + 0.5 * np.sum(w**2 * np.abs(m.Q[1:]) ** 2)
        h2 = total_energy(s, params).h2
        worst = max(worst, abs(h2_modes - h2) / h2)
    return CheckResult("mode-space H2 equals site-space H2", worst < 1e-10, worst, 1e-10)


def check_site_energy(rng, n_states=100) -> CheckResult:
    worst = 0.0
    for params, s in _states(rng, n_states, 128, float(rng.uniform(0, 50))):
        tot = total_energy(s, params).total
        worst = max(worst, abs(site_energy_density(s, params).e.sum() - tot) / tot)
    return CheckResult("site energies sum to H", worst < 1e-10, worst, 1e-10)


def check_two_path(rng, n_states=50) -> CheckResult:
    """a_k from (Q, P) directly vs via the renormalised variables."""
    worst = 0.0
    for params, s in _states(rng, n_states, 64, 1.0):
        eta = float(rng.uniform(1.0, 5.0))
        m = to_modes(s)
        w = dispersion(params.N)
        a_direct = normal_amplitudes(m.Q, m.P, w)
        a_tilde = normal_amplitudes(m.Q, m.P, eta * w)
        a_via = bare_from_renormalized(a_tilde, eta)
        scale = np.max(np.abs(a_direct))
        worst = max(worst, np.max(np.abs(a_via - a_direct)) / scale)
        worst = max(worst, np.max(np.abs(renormalized_from_bare(a_direct, eta) - a_tilde)) / scale)
    return CheckResult("a_k two-path consistency", worst < 1e-10, worst, 1e-10)


def check_filter(rng) -> list[CheckResult]:
    spec = FilterSpec(7.0)
    n = 4096
    g = rng.standard_normal((4, n))
    h = rng.standard_normal((4, n))
    alpha = float(rng.normal())
    f = lambda x: highpass_filter(x, spec, 0.1).qf  # noqa: E731
    scale = np.max(np.abs(f(g)))
    lin = np.max(np.abs(f(alpha * g + h) - alpha * f(g) - f(h))) / scale
    idem = np.max(np.abs(f(f(g)) - f(g))) / scale
    return [
        CheckResult("high-pass filter linearity", lin < 1e-10, lin, 1e-10),
        CheckResult("high-pass filter idempotence", idem < 1e-10, idem, 1e-10),
    ]


def check_quartic(rng, n_states=3) -> CheckResult:
    worst = 0.0
    for N in (8, 16, 32)[:n_states]:
        params = ChainParams(N, float(rng.uniform(0.5, 5)))
        s = random_initial_state(params, rng)
        Q = to_modes(s).Q
        res_bf, tot_bf = brute_force_quartic(Q, params.beta)
        res, tot = quartic_sums(Q, params.beta)
        h4 = total_energy(s, params).h4
        worst = max(worst, abs(tot - h4) / h4, abs(tot_bf - h4) / h4, abs(res - res_bf) / h4)
    return CheckResult("quartic term sum reproduces H4 (N<=32)", worst < 1e-8, worst, 1e-8)


def check_near_resonance(rng) -> CheckResult:
    N = 8
    w = dispersion(N) * float(rng.uniform(1, 2))
    got = near_resonance_count(N, w, 0.1)
    want = brute_force_near_resonance(N, w, 0.1)
    return CheckResult("near-resonance count vs enumeration (N=8)", got == want, abs(got - want), 0)


def check_reversibility(rng) -> CheckResult:
    """Forward, momentum flip, forward again. The nonlinear leg stays short:
    chaos amplifies round-off exponentially beyond a few Lyapunov times."""
    worst_ratio = 0.0
    for beta, nsteps in ((0.0, 20_000), (1.0, 1000)):
        params = ChainParams(128, beta)
        s = random_initial_state(params, rng)
        fwd = step(s, params, 0.01, nsteps)
        back = step(ChainState(fwd.q, -fwd.p), params, 0.01, nsteps)
        err = max(np.max(np.abs(back.q - s.q)), np.max(np.abs(-back.p - s.p)))
        amp = max(np.max(np.abs(s.q)), np.max(np.abs(s.p)))
        bound = nsteps * np.finfo(float).eps * amp
        worst_ratio = max(worst_ratio, err / bound)
    return CheckResult("time reversibility (error / n eps amplitude)", worst_ratio < 100, worst_ratio, 100)


def check_energy_drift(rng, beta: float, t_total: float = 1e5, N: int = 128, energy: float = 200.0) -> CheckResult:
    params = ChainParams(N, beta, energy)
    s = random_initial_state(params, rng)
    h0 = total_energy(s, params).total
    worst = [0.0]

    def sink(t, q, p):
        h2, h4 = energy_series(q, p, beta)
        worst[0] = max(worst[0], float(np.max(np.abs(h2 + h4 - h0))) / h0)

    integrate(s, params, 0.01, t_total, 100, sink)
    return CheckResult(f"energy drift over {t_total:g} time units (beta={beta:g})", worst[0] < 1e-5, worst[0], 1e-5)


def run_all(seed: int = 0, drift_betas=(1.0, 32.0), drift_time: float = 1e5) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = [
        check_forces(rng),
        check_dft(rng),
        check_round_trip(rng),
        check_parseval(rng),
        check_site_energy(rng),
        check_two_path(rng),
        *check_filter(rng),
        check_quartic(rng),
        check_near_resonance(rng),
        check_reversibility(rng),
    ]
    for beta in drift_betas:
        out.append(check_energy_drift(rng, beta, drift_time))
    return out
