"""Reference detectors: FD-MMSE, exhaustive MAP/ML, and the SISO AWGN curve."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, logsumexp

from .channel import EffectiveModel
from .modulation import Modulation

MAX_HYPOTHESES = 2**20


class OracleTooLargeError(ValueError):
    """The exhaustive search would exceed the enumeration guard."""


@dataclass(frozen=True)
class OracleResult:
    alphabet: np.ndarray
    marginals: np.ndarray  # (n_vars, |alphabet|)
    map_decision: np.ndarray
    ml_decision: np.ndarray


def fd_mmse_equalize(blocks: np.ndarray, r_freq: np.ndarray, sigma2: float, Es: float = 1.0) -> np.ndarray:
    """Per-frequency MMSE followed by an inverse DFT; returns time-domain soft symbols.

    ``blocks`` is (K, n_r, n_t), ``r_freq`` the stacked frequency-domain
    observation of length K n_r.
    """
    K, n_r, n_t = blocks.shape
    r = np.asarray(r_freq).reshape(K, n_r)
    Gh = np.conj(np.swapaxes(blocks, 1, 2))
    A = Gh @ blocks + (sigma2 / Es) * np.eye(n_t)
    u = np.linalg.solve(A, (Gh @ r[:, :, None]))[:, :, 0]
    # x_q = sum_i exp(+2 pi j q i / K) u_i / sqrt(K)
    x = np.fft.ifft(u, axis=0) * np.sqrt(K)
    return x.ravel()


def mmse_equalize(model: EffectiveModel, Es: float = 1.0) -> np.ndarray:
    """MMSE estimate of x; uses the per-frequency form when blocks are known."""
    if model.blocks is not None:
        return fd_mmse_equalize(model.blocks, model.r, model.sigma2, Es)
    H = model.H
    A = H.conj().T @ H + (model.sigma2 / Es) * np.eye(H.shape[1])
    return np.linalg.solve(A, H.conj().T @ model.r)


def _alphabet(alphabet) -> np.ndarray:
    if isinstance(alphabet, Modulation):
        return alphabet.points
    if isinstance(alphabet, str):
        return Modulation.parse(alphabet).points
    return np.asarray(alphabet, dtype=complex)


def _enumerate(model: EffectiveModel, points: np.ndarray, chunk: int = 1 << 15):
    """Yield (indices, squared residuals) over all |A|^n hypotheses in chunks."""
    n = model.n_vars
    q = len(points)
    total = q**n
    if total > MAX_HYPOTHESES:
        raise OracleTooLargeError(f"{q}^{n} = {total} hypotheses exceeds the guard of {MAX_HYPOTHESES}")
    digits = q ** np.arange(n - 1, -1, -1)
    HT = model.H.T
    for start in range(0, total, chunk):
        ids = np.arange(start, min(start + chunk, total))
        idx = (ids[:, None] // digits) % q
        X = points[idx]
        E = model.r[None, :] - X @ HT
        yield idx, np.sum(E.real**2 + E.imag**2, axis=1)


def map_oracle(model: EffectiveModel, alphabet="bpsk") -> OracleResult:
    """Exact posterior marginals with likelihood exp(-||r - Hx||^2 / (2 sigma^2))."""
    points = _alphabet(alphabet)
    n, q = model.n_vars, len(points)
    idx_all, res_all = zip(*_enumerate(model, points))
    idx = np.concatenate(idx_all)
    res = np.concatenate(res_all)
    logw = -res / (2.0 * model.sigma2)
    logw -= logsumexp(logw)
    w = np.exp(logw)
    marg = np.zeros((n, q))
    for k in range(n):
        marg[k] = np.bincount(idx[:, k], weights=w, minlength=q)
    marg /= marg.sum(axis=1, keepdims=True)
    best = int(np.argmin(res))
    return OracleResult(points, marg, points[np.argmax(marg, axis=1)], points[idx[best]])


def ml_oracle(model: EffectiveModel, alphabet="bpsk") -> np.ndarray:
    """argmin_x ||r - Hx||^2 by enumeration."""
    points = _alphabet(alphabet)
    best_cost, best = np.inf, None
    for idx, res in _enumerate(model, points):
        k = int(np.argmin(res))
        if res[k] < best_cost:
            best_cost, best = res[k], idx[k]
    return points[best]


def siso_awgn_ber(snr_db):
    """BPSK on an unfaded scalar AWGN channel: Q(sqrt(2 gamma))."""
    gamma = 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)
    ber = 0.5 * erfc(np.sqrt(gamma))
    return float(ber) if np.ndim(ber) == 0 else ber
