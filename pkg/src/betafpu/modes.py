"""Mode-space view of the chain: unitary Fourier transform, bare and
renormalised dispersion, normal variables and the renormalisation factor.

Conventions
-----------
Q_k = N**-0.5 * sum_j q_j exp(-2*pi*i*j*k/N), k = 0..N-1 (``numpy.fft`` with
``norm="ortho"``), so that H2 = 1/2 sum_k (|P_k|^2 + omega_k^2 |Q_k|^2)
exactly. Normal-variable arrays drop k = 0 and store mode k at index k-1;
the mode -k == N-k therefore sits at the mirrored index, ``a[::-1]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import ChainState, InvalidStateError, ParameterError

HERMITIAN_TOL = 1e-9


@dataclass
class ModeState:
    Q: np.ndarray
    P: np.ndarray
    t: float = 0.0

    @property
    def N(self) -> int:
        return self.Q.shape[-1]


@dataclass
class NormalModeVars:
    a: np.ndarray
    dispersion_used: str = "bare"
    eta: float = 1.0


@dataclass
class RenormReport:
    eta_analytic: float
    mean_Q_sq: np.ndarray
    beta: float
    N: int


def to_modes(state: ChainState) -> ModeState:
    Q, P = transform(state.q, state.p)
    return ModeState(Q, P, state.t)


def transform(q: np.ndarray, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unitary DFT along the last axis; accepts single states or (m, N) blocks."""
    return np.fft.fft(q, norm="ortho"), np.fft.fft(p, norm="ortho")


def hermitian_defect(X: np.ndarray) -> float:
    """max |X_{N-k} - conj(X_k)|, zero for the transform of real data."""
    mirrored = np.roll(X[..., ::-1], 1, axis=-1)
    return float(np.max(np.abs(mirrored - np.conj(X)), initial=0.0))


def from_modes(modes: ModeState) -> ChainState:
    scale = max(1.0, float(np.max(np.abs(modes.Q), initial=0.0)), float(np.max(np.abs(modes.P), initial=0.0)))
    if max(hermitian_defect(modes.Q), hermitian_defect(modes.P)) > HERMITIAN_TOL * scale:
        raise InvalidStateError("mode arrays violate Hermitian symmetry; not the transform of real data")
    q = np.fft.ifft(modes.Q, norm="ortho").real
    p = np.fft.ifft(modes.P, norm="ortho").real
    return ChainState(q, p, modes.t)


def bare_dispersion(N: int, k):
    """omega_k = 2 sin(pi k / N) for 1 <= k <= N-1 (scalar or array k)."""
    k_arr = np.asarray(k)
    if np.any(k_arr < 1) or np.any(k_arr > N - 1):
        raise ParameterError(f"mode index out of range 1..{N - 1}: {k}")
    w = 2.0 * np.sin(np.pi * k_arr / N)
    return float(w) if w.ndim == 0 else w


def dispersion(N: int, eta: float = 1.0) -> np.ndarray:
    """eta * omega_k for k = 1..N-1."""
    return eta * bare_dispersion(N, np.arange(1, N))


def normal_vars(modes: ModeState, omega: np.ndarray, eta: float = 1.0, dispersion_used: str | None = None) -> NormalModeVars:
    """a_k = (P_k - i omega_k Q_k)/sqrt(2 omega_k) for k = 1..N-1.

    `omega` has N-1 entries. `eta` is only recorded; pass the already scaled
    frequencies.
    """
    a = normal_amplitudes(modes.Q, modes.P, omega)
    tag = dispersion_used or ("bare" if eta == 1.0 else "renormalized")
    return NormalModeVars(a, tag, float(eta))


def normal_amplitudes(Q: np.ndarray, P: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Array form of `normal_vars`; works on (m, N) blocks."""
    omega = np.asarray(omega, dtype=float)
    if omega.shape[-1] != Q.shape[-1] - 1:
        raise ParameterError(f"need {Q.shape[-1] - 1} frequencies, got {omega.shape[-1]}")
    if np.any(omega <= 0):
        raise ParameterError("frequencies must be positive")
    return (P[..., 1:] - 1j * omega * Q[..., 1:]) / np.sqrt(2.0 * omega)


def eta_analytic(mean_Q_sq: np.ndarray, beta: float, N: int) -> RenormReport:
    """eta = sqrt(1 + 3 beta/(2N) sum_l <|Q_l|^2> omega_l^2), l = 1..N-1."""
    mean_Q_sq = np.asarray(mean_Q_sq, dtype=float)
    if mean_Q_sq.shape != (N - 1,):
        raise ParameterError(f"mean_Q_sq must hold N-1={N - 1} entries")
    if np.any(mean_Q_sq < 0):
        raise ParameterError("mean_Q_sq entries must be nonnegative")
    s = float(np.sum(mean_Q_sq * dispersion(N) ** 2))
    eta = float(np.sqrt(1.0 + 1.5 * beta * s / N))
    return RenormReport(eta, mean_Q_sq, float(beta), int(N))


def _mixing(eta: float) -> tuple[float, float]:
    if not eta > 0:
        raise ParameterError("eta must be positive")
    r = np.sqrt(eta)
    return 0.5 * (r + 1.0 / r), 0.5 * (r - 1.0 / r)


def bare_from_renormalized(a_tilde: np.ndarray, eta: float) -> np.ndarray:
    """a_k = [(sqrt(eta) + 1/sqrt(eta)) at_k + (sqrt(eta) - 1/sqrt(eta)) conj(at_{-k})] / 2."""
    c, s = _mixing(eta)
    a_tilde = np.asarray(a_tilde)
    return c * a_tilde + s * np.conj(a_tilde[..., ::-1])


def renormalized_from_bare(a: np.ndarray, eta: float) -> np.ndarray:
    """Inverse of `bare_from_renormalized` (the 2x2 mixing has unit determinant)."""
    c, s = _mixing(eta)
    a = np.asarray(a)
    return c * a - s * np.conj(a[..., ::-1])


def quadratic_energies(modes: ModeState, eta: float, total: float) -> tuple[float, float]:
    """(H2~, H4~): the renormalised quadratic part and the residual H - H2~.

    The zero mode is left out of H2~, so its kinetic energy ends up in H4~.
    """
    N = modes.N
    w2 = dispersion(N, eta) ** 2
    h2t = 0.5 * float(np.sum(np.abs(modes.P[1:]) ** 2 + w2 * np.abs(modes.Q[1:]) ** 2))
    return h2t, total - h2t


def mode_energies(Q: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Linear mode energies 1/2(|P_k|^2 + omega_k^2 |Q_k|^2), k = 1..N-1."""
    N = Q.shape[-1]
    return 0.5 * (np.abs(P[..., 1:]) ** 2 + dispersion(N) ** 2 * np.abs(Q[..., 1:]) ** 2)
