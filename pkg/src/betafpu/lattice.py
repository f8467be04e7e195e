"""The periodic beta-FPU chain: energies, forces, thermal initial data and
symplectic splitting integrators.

Sites are indexed 0..N-1 with q[N] == q[0]. The potential of the spring
between sites i and i+1 is V(r) = r**2/2 + beta*r**4/4 with r = q[i] - q[i+1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np

DEFAULT_DT = 0.01


class InvalidStateError(ValueError):
    """Raised for non-finite or mis-shaped chain states."""


class ParameterError(ValueError):
    """Raised for out-of-range numerical parameters."""


class BlowUpError(RuntimeError):
    """Integration produced a non-finite state."""

    def __init__(self, step_index: int, t: float):
        super().__init__(f"non-finite state at step {step_index} (t={t:.6g})")
        self.step_index = step_index
        self.t = t


@dataclass(frozen=True)
class ChainParams:
    N: int
    beta: float
    target_energy: float = 200.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 4 or self.N % 2:
            raise ParameterError(f"N must be an even integer >= 4, got {self.N}")
        if not self.beta >= 0:
            raise ParameterError(f"beta must be >= 0, got {self.beta}")
        if not self.target_energy > 0:
            raise ParameterError("target_energy must be positive")


@dataclass
class ChainState:
    q: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.q = np.ascontiguousarray(self.q, dtype=np.float64)
        self.p = np.ascontiguousarray(self.p, dtype=np.float64)
        if self.q.ndim != 1 or self.q.shape != self.p.shape:
            raise InvalidStateError(
                f"q and p must be 1-d arrays of equal length, got {self.q.shape} and {self.p.shape}"
            )

    @property
    def N(self) -> int:
        return self.q.size

    def copy(self) -> "ChainState":
        return ChainState(self.q.copy(), self.p.copy(), self.t)


@dataclass(frozen=True)
class EnergyBreakdown:
    h2: float
    h4: float
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", self.h2 + self.h4)


@dataclass
class SiteEnergyField:
    e: np.ndarray
    t: float = 0.0


def _check(state: ChainState, params: ChainParams) -> None:
    if state.N != params.N:
        raise InvalidStateError(f"state has {state.N} sites, params say {params.N}")
    if not (np.all(np.isfinite(state.q)) and np.all(np.isfinite(state.p))):
        raise InvalidStateError("state contains non-finite entries")


def bond_stretch(q: np.ndarray) -> np.ndarray:
    """r_i = q_i - q_{i+1} with periodic wrap; works along the last axis."""
    return q - np.roll(q, -1, axis=-1)


def total_energy(state: ChainState, params: ChainParams) -> EnergyBreakdown:
    _check(state, params)
    r = bond_stretch(state.q)
    r2 = r * r
    h2 = 0.5 * (np.dot(state.p, state.p) + r2.sum())
    h4 = 0.25 * params.beta * np.dot(r2, r2)
    return EnergyBreakdown(float(h2), float(h4))


def energy_series(q: np.ndarray, p: np.ndarray, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """H2 and H4 for a batch of samples, arrays shaped (m, N)."""
    r2 = bond_stretch(q) ** 2
    h2 = 0.5 * ((p * p).sum(axis=-1) + r2.sum(axis=-1))
    h4 = 0.25 * beta * (r2 * r2).sum(axis=-1)
    return h2, h4


def forces(state: ChainState, params: ChainParams) -> np.ndarray:
    """-dH/dq_i for every site."""
    _check(state, params)
    r = bond_stretch(state.q)
    tension = r + params.beta * r**3  # V'(r) for the bond (i, i+1)
    return np.roll(tension, 1) - tension


def site_energy_density(state: ChainState, params: ChainParams) -> SiteEnergyField:
    """Per-site energy; each spring's energy is split evenly between its two ends."""
    _check(state, params)
    r = bond_stretch(state.q)
    v = 0.5 * r * r + 0.25 * params.beta * r**4
    e = 0.5 * state.p**2 + 0.5 * (v + np.roll(v, 1))
    return SiteEnergyField(e, state.t)


def site_energy_series(q: np.ndarray, p: np.ndarray, beta: float) -> np.ndarray:
    """Vectorised site_energy_density over samples shaped (m, N)."""
    r = bond_stretch(q)
    v = 0.5 * r * r + 0.25 * beta * r**4
    return 0.5 * p**2 + 0.5 * (v + np.roll(v, 1, axis=-1))


# ---------------------------------------------------------------------------
# integration


@numba.njit(cache=True)
def _accel(q, beta, out):
    n = q.size
    prev = q[n - 1] - q[0]
    prev_t = prev + beta * prev * prev * prev
    for i in range(n):
        j = i + 1
        if j == n:
            j = 0
        r = q[i] - q[j]
        t = r + beta * r * r * r
        out[i] = prev_t - t
        prev_t = t


@numba.njit(cache=True)
def _compose(q, p, a, beta, dt, nsteps, drift, kick):
    """Symmetric kick/drift composition: kick[0], drift[0], kick[1], ..., kick[-1].

    `a` holds the acceleration at q on entry and exit. Returns the number of
    completed steps before a non-finite value appeared (nsteps when clean).
    """
    n = q.size
    ns = drift.size
    for s in range(nsteps):
        for st in range(ns):
            h = kick[st] * dt
            for i in range(n):
                p[i] += h * a[i]
            h = drift[st] * dt
            for i in range(n):
                q[i] += h * p[i]
            _accel(q, beta, a)
        h = kick[ns] * dt
        bad = False
        for i in range(n):
            p[i] += h * a[i]
            if not math.isfinite(p[i]) or not math.isfinite(q[i]):
                bad = True
        if bad:
            return s
    return nsteps


@numba.njit(cache=True)
def _compose_sampled(q, p, a, beta, dt, stride, nsamples, drift, kick, qs, ps):
    """Run nsamples*stride steps, storing the state after every stride steps."""
    for m in range(nsamples):
        done = _compose(q, p, a, beta, dt, stride, drift, kick)
        if done < stride:
            return m * stride + done
        qs[m, :] = q
        ps[m, :] = p
    return nsamples * stride


def _blanes_moan():
    # 6-stage order-4 Runge-Kutta-Nystrom splitting (Blanes & Moan 2002, SRKN_6^b)
    b1, b2, b3 = 0.0829844064174052, 0.396309801498368, -0.0390563049223486
    a1, a2 = 0.245298957184271, 0.604872665711080
    a3 = 0.5 - a1 - a2
    b4 = 1.0 - 2.0 * (b1 + b2 + b3)
    return np.array([a1, a2, a3, a3, a2, a1]), np.array([b1, b2, b3, b4, b3, b2, b1])


def _yoshida4():
    w1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
    w0 = 1.0 - 2.0 * w1
    return np.array([w1, w0, w1]), np.array([w1 / 2, (w1 + w0) / 2, (w1 + w0) / 2, w1 / 2])


SCHEMES = {
    "verlet": (np.array([1.0]), np.array([0.5, 0.5])),
    "yoshida4": _yoshida4(),
    "blanes-moan4": _blanes_moan(),
}
DEFAULT_SCHEME = "blanes-moan4"


def _scheme(name: str):
    try:
        return SCHEMES[name]
    except KeyError:
        raise ParameterError(f"unknown integration scheme {name!r}; choose from {sorted(SCHEMES)}") from None


def _validate_dt(dt: float) -> None:
    if not dt > 0:
        raise ParameterError(f"dt must be positive, got {dt}")


def step(
    state: ChainState,
    params: ChainParams,
    dt: float = DEFAULT_DT,
    nsteps: int = 1,
    scheme: str = DEFAULT_SCHEME,
) -> ChainState:
    """Advance by `nsteps` symplectic steps; returns a new state."""
    _validate_dt(dt)
    _check(state, params)
    q, p = state.q.copy(), state.p.copy()
    a = np.empty_like(q)
    _accel(q, float(params.beta), a)
    drift, kick = _scheme(scheme)
    done = _compose(q, p, a, float(params.beta), float(dt), int(nsteps), drift, kick)
    if done < nsteps:
        raise BlowUpError(done, state.t + done * dt)
    return ChainState(q, p, state.t + nsteps * dt)


Sink = Callable[[np.ndarray, np.ndarray, np.ndarray], None]
"""Receives a block of samples: times (m,), q (m, N), p (m, N)."""


def integrate(
    state: ChainState,
    params: ChainParams,
    dt: float,
    t_end: float,
    sample_every: int,
    sink: Sink | None = None,
    block: int = 4096,
    scheme: str = DEFAULT_SCHEME,
) -> ChainState:
    """Integrate up to `t_end`, handing every `sample_every`-th state to `sink`.

    Samples are delivered in blocks of at most `block` rows. The number of
    steps is round((t_end - t)/dt), so the final time is within dt/2 of t_end.
    """
    _validate_dt(dt)
    _check(state, params)
    if sample_every < 1:
        raise ParameterError("sample_every must be a positive integer")
    nsteps = int(round((t_end - state.t) / dt))
    if nsteps < 0:
        raise ParameterError("t_end precedes the current time")
    drift, kick = _scheme(scheme)
    beta = float(params.beta)
    q, p = state.q.copy(), state.p.copy()
    a = np.empty_like(q)
    _accel(q, beta, a)
    n = params.N
    qs = np.empty((block, n))
    ps = np.empty((block, n))
    done = 0
    nsamples = nsteps // sample_every
    emitted = 0
    while emitted < nsamples:
        m = min(block, nsamples - emitted)
        ok = _compose_sampled(q, p, a, beta, dt, sample_every, m, drift, kick, qs, ps)
        if ok < m * sample_every:
            idx = done + ok
            raise BlowUpError(idx, state.t + idx * dt)
        steps_before = done
        done += m * sample_every
        emitted += m
        if sink is not None:
            t = state.t + dt * (steps_before + sample_every * np.arange(1, m + 1))
            sink(t, qs[:m].copy(), ps[:m].copy())
    rest = nsteps - done
    if rest:
        ok = _compose(q, p, a, beta, dt, rest, drift, kick)
        if ok < rest:
            raise BlowUpError(done + ok, state.t + (done + ok) * dt)
    return ChainState(q, p, state.t + nsteps * dt)


def random_initial_state(params: ChainParams, seed: int | np.random.Generator | None = None) -> ChainState:
    """Gaussian q and p with zero mean, scaled so that H equals the target exactly.

    H(s*q, s*p) = s^2 H2 + s^4 H4, so the scale factor is the positive root
    of a quadratic in s^2.
    """
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(params.N)
    p = rng.standard_normal(params.N)
    q -= q.mean()
    p -= p.mean()
    e = total_energy(ChainState(q, p), params)
    target = params.target_energy
    if e.h4 > 0:
        s2 = 2.0 * target / (e.h2 + math.sqrt(e.h2 * e.h2 + 4.0 * e.h4 * target))
    else:
        s2 = target / e.h2
    s = math.sqrt(s2)
    return ChainState(q * s, p * s, 0.0)


def equipartition_indicator(mode_energy: np.ndarray) -> float:
    """Normalised spectral entropy exp(S)/n of time-averaged mode energies.

    1 means all n modes carry equal energy, 1/n means a single mode holds it all.
    """
    e = np.asarray(mode_energy, dtype=float)
    total = e.sum()
    if not total > 0:
        raise ValueError("mode energies must have a positive sum")
    w = e / total
    w = w[w > 0]  # tiny entries can underflow to zero after the division
    s = -np.sum(w * np.log(w))
    return float(np.exp(s) / e.size)
