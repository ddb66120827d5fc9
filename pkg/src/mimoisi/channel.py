"""Frequency-selective MIMO channel with cyclic-prefixed single-carrier framing.

The cyclic prefix turns the L-tap linear convolution into a circular one, so
after a per-antenna K-point DFT the frame is described by

    r = H_eff x + v,    H_eff = G F,

with G block-diagonal in the per-frequency matrices G_i and
F = (D_K kron I_nt) / sqrt(K).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .modulation import Modulation


class ParameterError(ValueError):
    """Invalid system or frame parameter."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ChannelTaps:
    """One fading realization: ``taps[l]`` is the n_r x n_t gain matrix of path l."""

    taps: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.taps)
        if t.ndim != 3 or min(t.shape) < 1:
            raise ParameterError(f"taps must have shape (L, n_r, n_t), got {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ParameterError("channel taps must be finite")
        object.__setattr__(self, "taps", _frozen(t.astype(complex)))

    @property
    def L(self) -> int:
        return self.taps.shape[0]

    @property
    def n_r(self) -> int:
        return self.taps.shape[1]

    @property
    def n_t(self) -> int:
        return self.taps.shape[2]


@dataclass(frozen=True)
class FrameParams:
    K: int
    L: int
    modulation: Modulation = field(default_factory=lambda: Modulation("bpsk", 2))

    def __post_init__(self):
        if self.L < 1 or self.K < self.L:
            raise ParameterError(f"need K >= L >= 1, got K={self.K}, L={self.L}")

    @property
    def cp_len(self) -> int:
        return self.L - 1


@dataclass(frozen=True)
class EffectiveModel:
    """The linear model every detector consumes.

    ``H`` is (K n_r) x (K n_t), ``r`` has length K n_r and ``sigma2`` is the
    per-entry complex noise variance.  ``blocks`` keeps the per-frequency
    matrices when the model came from :func:`simulate_frame`.
    """

    H: np.ndarray
    r: np.ndarray
    sigma2: float
    dims: tuple = None
    blocks: np.ndarray | None = None

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H))
        r = np.atleast_1d(np.asarray(self.r))
        if H.shape[0] != r.shape[0]:
            raise ParameterError(f"H has {H.shape[0]} rows but r has {r.shape[0]} entries")
        if not self.sigma2 > 0:
            raise ParameterError(f"sigma2 must be positive, got {self.sigma2}")
        dims = self.dims if self.dims is not None else (1, H.shape[1], H.shape[0])
        K, n_t, n_r = dims
        if H.shape != (K * n_r, K * n_t):
            raise ParameterError(f"H shape {H.shape} inconsistent with dims (K, n_t, n_r)={dims}")
        object.__setattr__(self, "H", _frozen(H.astype(complex)))
        object.__setattr__(self, "r", _frozen(r.astype(complex)))
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "dims", tuple(int(d) for d in dims))
        if self.blocks is not None:
            object.__setattr__(self, "blocks", _frozen(self.blocks))

    @property
    def n_vars(self) -> int:
        return self.H.shape[1]

    @property
    def n_obs(self) -> int:
        return self.H.shape[0]


def generate_channel(n_t: int, n_r: int, L: int, rng: np.random.Generator, profile=None) -> ChannelTaps:
    """Draw L i.i.d. CN(0, 1) gain matrices.

    ``profile`` optionally scales the average power of each tap; the default
    is the uniform power-delay profile.
    """
    if min(n_t, n_r, L) < 1:
        raise ParameterError(f"n_t, n_r, L must be >= 1, got {(n_t, n_r, L)}")
    taps = complex_normal((L, n_r, n_t), 1.0, rng)
    if profile is not None:
        profile = np.asarray(profile, dtype=float)
        if profile.shape != (L,) or np.any(profile < 0):
            raise ParameterError("profile must hold L non-negative tap powers")
        taps *= np.sqrt(profile)[:, None, None]
    return ChannelTaps(taps)


def complex_normal(shape, var: float, rng: np.random.Generator) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with variance ``var``."""
    s = np.sqrt(var / 2.0)
    return s * rng.standard_normal(shape) + 1j * s * rng.standard_normal(shape)


def dft_matrix(K: int) -> np.ndarray:
    """Unnormalized K-point DFT matrix, entry (i, q) = exp(-2 pi j q i / K)."""
    k = np.arange(K)
    return np.exp(-2j * np.pi * np.outer(k, k) / K)


def build_frequency_blocks(taps: ChannelTaps, K: int) -> np.ndarray:
    """Per-frequency matrices ``G[i] = sum_l exp(-2 pi j l i / K) H_l``, shape (K, n_r, n_t)."""
    if K < taps.L:
        raise ParameterError(f"need K >= L, got K={K}, L={taps.L}")
    return np.fft.fft(taps.taps, n=K, axis=0)


def build_effective_matrix(blocks: np.ndarray, K: int, n_t: int) -> np.ndarray:
    """Dense ``H_eff = G F`` from the per-frequency blocks.

    Block (i, q) of the result is ``G_i exp(-2 pi j q i / K) / sqrt(K)``, so the
    product is formed in O(K^2 n_r n_t) without materializing G or F.
    """
    blocks = np.asarray(blocks)
    if blocks.ndim != 3 or blocks.shape[0] != K or blocks.shape[2] != n_t:
        raise RuntimeError(f"blocks of shape {blocks.shape} do not match K={K}, n_t={n_t}")
    n_r = blocks.shape[1]
    D = dft_matrix(K) / np.sqrt(K)
    H = blocks[:, :, None, :] * D[:, None, :, None]
    return H.reshape(K * n_r, K * n_t)


def spreading_matrix(K: int, n_t: int) -> np.ndarray:
    """F = (D_K kron I_nt) / sqrt(K)."""
    return np.kron(dft_matrix(K), np.eye(n_t)) / np.sqrt(K)


def noise_variance(n_t: int, L: int, snr_db: float, Es: float = 1.0) -> float:
    """sigma^2 = n_t L E_s / gamma, gamma being the SNR per receive antenna."""
    return n_t * L * Es / 10.0 ** (snr_db / 10.0)


def circular_convolve(taps: ChannelTaps, x: np.ndarray) -> np.ndarray:
    """y_q = sum_l H_l x_{(q - l) mod K}; ``x`` is (K, n_t), result (K, n_r)."""
    K = x.shape[0]
    y = np.zeros((K, taps.n_r), dtype=complex)
    for l in range(taps.L):
        y += np.roll(x, l, axis=0) @ taps.taps[l].T
    return y


def transmit_with_cp(taps: ChannelTaps, x: np.ndarray) -> np.ndarray:
    """Linear convolution of the CP-extended frame, CP samples stripped at the receiver."""
    K = x.shape[0]
    cp = taps.L - 1
    tx = np.concatenate([x[K - cp:], x]) if cp else x
    rx = np.zeros((tx.shape[0], taps.n_r), dtype=complex)
    for l in range(taps.L):
        rx[l:] += tx[: tx.shape[0] - l] @ taps.taps[l].T
    return rx[cp:]


def to_frequency(y: np.ndarray) -> np.ndarray:
    """Per-antenna unitary DFT of a (K, n) time-domain block, stacked to length K n."""
    K = y.shape[0]
    return (np.fft.fft(y, axis=0) / np.sqrt(K)).ravel()


def simulate_frame(
    taps: ChannelTaps,
    params: FrameParams,
    x: np.ndarray,
    snr_db: float,
    rng: np.random.Generator,
    add_noise: bool = True,
    explicit_cp: bool = False,
) -> EffectiveModel:
    """Send one frame of K n_t symbols and return the frequency-domain model.

    ``x`` is the stacked vector [x_0; x_1; ...; x_{K-1}].  ``add_noise=False``
    gives the noiseless observation while keeping the nominal sigma^2.
    """
    K, n_t, n_r = params.K, taps.n_t, taps.n_r
    if params.L != taps.L:
        raise ParameterError(f"frame expects L={params.L} but channel has L={taps.L}")
    if not np.isfinite(snr_db):
        raise ParameterError("snr_db must be finite; use add_noise=False for a noiseless frame")
    x = np.asarray(x, dtype=complex)
    if x.shape != (K * n_t,):
        raise ParameterError(f"x must have length K n_t = {K * n_t}, got {x.shape}")
    xs = x.reshape(K, n_t)
    y = transmit_with_cp(taps, xs) if explicit_cp else circular_convolve(taps, xs)
    sigma2 = noise_variance(n_t, taps.L, snr_db)
    if add_noise:
        y = y + complex_normal(y.shape, sigma2, rng)
    blocks = build_frequency_blocks(taps, K)
    H = build_effective_matrix(blocks, K, n_t)
    return EffectiveModel(H, to_frequency(y), sigma2, (K, n_t, n_r), blocks)
