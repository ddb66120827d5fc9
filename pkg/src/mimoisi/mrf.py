"""Belief propagation on the fully connected pairwise MRF of r = Hx + v.

For x in {+-1}^N the posterior (with the exp(-||r - Hx||^2 / (2 sigma^2))
likelihood) factors into self potentials exp(x_i Re z_i + ln p(x_i)) and edge
potentials exp(-x_i Re R_ij x_j), where z = H^H r / sigma^2 and
R = H^H H / sigma^2.

Messages are stored as log-ratios ln m(+1) - ln m(-1) and beliefs as
(P(+1), P(-1)) pairs; damping blends the normalized probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import expit, log_expit

from .channel import EffectiveModel, ParameterError
from .modulation import UnsupportedAlphabetError

# log-ratios beyond this are saturated; exp(-500) is far below double eps
_LR_CLIP = 500.0


@dataclass(frozen=True)
class DampingConfig:
    alpha_m: float = 0.0
    alpha_b: float = 0.0

    def __post_init__(self):
        for name in ("alpha_m", "alpha_b"):
            a = getattr(self, name)
            if not 0.0 <= a < 1.0:
                raise ParameterError(f"{name} must lie in [0, 1), got {a}")

    @property
    def kind(self) -> str:
        if self.alpha_m == 0 and self.alpha_b == 0:
            return "undamped"
        if self.alpha_b == 0:
            return "message"
        if self.alpha_m == 0:
            return "belief"
        return "hybrid"


@dataclass(frozen=True)
class MrfConfig:
    num_iter: int = 10
    damping: DampingConfig = DampingConfig()


@dataclass(frozen=True)
class MrfPotentials:
    z: np.ndarray
    R: np.ndarray
    log_prior: np.ndarray  # (2, N): ln p(x_i = +1), ln p(x_i = -1)

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def log_phi(self) -> np.ndarray:
        """(2, N) log self potentials for x_i = +1 and x_i = -1."""
        rz = np.real(self.z)
        return np.stack([rz + self.log_prior[0], -rz + self.log_prior[1]])

    @cached_property
    def coupling(self) -> np.ndarray:
        c = np.ascontiguousarray(np.real(self.R))
        np.fill_diagonal(c, 0.0)
        return c

    @cached_property
    def edge_gain(self) -> np.ndarray:
        # tanh of a message's half log-ratio is -tanh(c_ij) times that of its input
        return -np.tanh(self.coupling)

    def log_psi(self, i: int, j: int) -> np.ndarray:
        """2x2 table of ln psi_ij(a, b), rows/cols ordered (+1, -1)."""
        s = np.array([1.0, -1.0])
        return -np.outer(s, s) * np.real(self.R[i, j])

    def self_ratio(self) -> np.ndarray:
        return self.log_phi[0] - self.log_phi[1]


@dataclass
class MrfState:
    """Messages and beliefs after ``iteration`` rounds.

    ``log_ratio[i, j]`` is ln m_ij(+1) - ln m_ij(-1) for the message from i to
    j (diagonal unused, held at 0); ``beliefs`` is (2, N) with rows P(+1), P(-1).
    """

    log_ratio: np.ndarray
    beliefs: np.ndarray
    iteration: int = 0

    @classmethod
    def initial(cls, n: int) -> "MrfState":
        return cls(np.zeros((n, n)), np.full((2, n), 0.5), 0)

    @property
    def messages(self) -> np.ndarray:
        """(2, N, N): ``messages[:, i, j]`` is m_ij(x_j) as (P(+1), P(-1))."""
        return _pair(self.log_ratio)

    def decisions(self) -> np.ndarray:
        return np.where(self.beliefs[0] >= self.beliefs[1], 1.0, -1.0)


def compute_potentials(model: EffectiveModel, priors=None) -> MrfPotentials:
    """Self and edge potentials of the posterior MRF.

    ``priors`` is an optional length-N vector of P(x_i = +1); uniform by default.
    Works on complex models with BPSK input and on realified (real) models.
    """
    if not model.sigma2 > 0:
        raise ParameterError("sigma2 must be positive")
    H = model.H
    Hc = H.conj().T
    z = Hc @ model.r / model.sigma2
    R = Hc @ H / model.sigma2
    n = H.shape[1]
    if priors is None:
        log_prior = np.full((2, n), np.log(0.5))
    else:
        p = np.asarray(priors, dtype=float)
        log_prior = np.stack([np.log(p), np.log1p(-p)])
    return MrfPotentials(z, R, log_prior)


def _pair(lr: np.ndarray) -> np.ndarray:
    return np.stack([expit(lr), expit(-lr)])


def _logcosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax))


def _exact_update(a, c, lam_old, alpha):
    """Log-domain message update for entries the tanh form cannot resolve."""
    lr = _logcosh(0.5 * a - c) - _logcosh(0.5 * a + c)
    if not alpha:
        return lr
    la, lb = np.log(alpha), np.log1p(-alpha)
    lp = np.logaddexp(la + log_expit(lam_old), lb + log_expit(lr))
    lq = np.logaddexp(la + log_expit(-lam_old), lb + log_expit(-lr))
    return lp - lq


# past these magnitudes 1 - |tanh| is too coarse for arctanh to be accurate
_MU_SAT = 1.0 - 1e-6
_LAM_SAT = 13.0


def mrf_iteration(potentials: MrfPotentials, state: MrfState, damping: DampingConfig = DampingConfig()) -> MrfState:
    """One flooding round of damped message and belief updates.

    Every tentative message reads only the previous round's messages; messages
    are damped first, then the tentative beliefs (built from the new messages)
    are damped. Damping blends normalized probabilities, which for a binary
    variable is a linear blend of P(+1) - P(-1) = tanh(log_ratio / 2).
    """
    am, ab = damping.alpha_m, damping.alpha_b
    h = potentials.self_ratio()
    lam = state.log_ratio
    # a[i, j]: node i's log-ratio excluding the message it received from j
    ext = h + lam.sum(axis=0)
    mu = np.subtract(ext[:, None], lam.T)
    mu *= 0.5
    np.tanh(mu, out=mu)
    mu *= potentials.edge_gain
    sat = np.abs(mu) > _MU_SAT
    if am:
        sat |= np.abs(lam) > _LAM_SAT
        old = np.tanh(0.5 * lam)
        old *= am
        mu *= 1.0 - am
        mu += old
    new = np.arctanh(mu, out=mu)
    new *= 2.0
    if sat.any():
        i, j = np.nonzero(sat)
        new[i, j] = _exact_update(ext[i] - lam[j, i], potentials.coupling[i, j], lam[i, j], am)
    np.clip(new, -_LR_CLIP, _LR_CLIP, out=new)
    np.fill_diagonal(new, 0.0)

    b_tent = _pair(np.clip(h + new.sum(axis=0), -_LR_CLIP, _LR_CLIP))
    if ab:
        b = ab * state.beliefs + (1.0 - ab) * b_tent
        beliefs = b / b.sum(axis=0)
    else:
        beliefs = b_tent
    return MrfState(new, beliefs, state.iteration + 1)


def _as_binary_model(model):
    from .qam_search import RealModel

    if isinstance(model, RealModel):
        if model.pam_order != 2:
            raise UnsupportedAlphabetError(
                f"MRF detection needs a +-1 alphabet; realified {model.pam_order}-PAM is not supported"
            )
        return model.as_effective()
    return model


def detect_mrf(model, config: MrfConfig = MrfConfig(), priors=None, trace: bool = False):
    """Run ``config.num_iter`` rounds and decide x_i = argmax b_i (ties -> +1).

    ``model`` is a BPSK :class:`EffectiveModel` or a realified 4-QAM model.
    Returns ``(decisions, beliefs)``; with ``trace=True`` also a list whose
    entry t holds the decisions after t iterations (entry 0: self potentials only).
    """
    model = _as_binary_model(model)
    pot = compute_potentials(model, priors)
    state = MrfState.initial(pot.n)
    history = [np.where(pot.self_ratio() >= 0, 1.0, -1.0)] if trace else None
    for _ in range(config.num_iter):
        state = mrf_iteration(pot, state, config.damping)
        if trace:
            history.append(state.decisions())
    if trace:
        return state.decisions(), state.beliefs, history
    return state.decisions(), state.beliefs
