"""Factor-graph BP with a Gaussian approximation of interference (GAI).

Each observation r_i sends variable k the LLR of x_k obtained by modelling
everything else at that node, sum_{j != k} h_ij x_j + v_i, as a Gaussian whose
mean and variance come from the extrinsic probabilities the variables sent
to node i in the previous round.  All "sum over everything but one" terms
are formed as a full sum minus the excluded term, so a round costs
O(n_obs * n_vars).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .channel import EffectiveModel
from .modulation import UnsupportedAlphabetError


@dataclass(frozen=True)
class FgConfig:
    num_iter: int = 10
    alpha_m: float = 0.4

    def __post_init__(self):
        if not 0.0 <= self.alpha_m < 1.0:
            raise ValueError(f"alpha_m must lie in [0, 1), got {self.alpha_m}")


@dataclass
class FgState:
    """``llr[i, k]`` is Lambda_i^k; ``ext_prob[i, k]`` is p_i^{k+}."""

    llr: np.ndarray
    ext_prob: np.ndarray
    iteration: int = 0

    @classmethod
    def initial(cls, n_obs: int, n_vars: int) -> "FgState":
        return cls(np.zeros((n_obs, n_vars)), np.full((n_obs, n_vars), 0.5), 0)


@dataclass(frozen=True)
class GaiStats:
    mu: np.ndarray
    var: np.ndarray


class _Graph:
    """Quantities of the model that do not change across rounds."""

    def __init__(self, H, r, sigma2, real):
        self.H = H
        self.r = r
        self.real = real
        self.H2 = np.abs(H) ** 2
        self.Hr = np.ascontiguousarray(H.real)
        self.Hi = None if real else np.ascontiguousarray(H.imag)
        # real-valued observations carry half the complex noise variance
        self.noise = sigma2 / 2.0 if real else sigma2
        self.scale = 2.0 if real else 4.0

    @classmethod
    def of(cls, model):
        from .qam_search import RealModel

        if isinstance(model, RealModel):
            if model.pam_order != 2:
                raise UnsupportedAlphabetError("FG-GAI detection needs a +-1 alphabet")
            return cls(model.H_lattice, model.r_real, model.sigma2, True)
        if isinstance(model, EffectiveModel):
            return cls(model.H, model.r, model.sigma2, False)
        raise UnsupportedAlphabetError(f"cannot run FG-GAI on {type(model).__name__}")


def gai_stats(graph: _Graph, ext_prob: np.ndarray) -> GaiStats:
    mean = 2.0 * ext_prob - 1.0
    var = 1.0 - mean**2
    hm = graph.H * mean
    h2v = graph.H2 * var
    mu = hm.sum(axis=1, keepdims=True) - hm
    s2 = np.maximum(h2v.sum(axis=1, keepdims=True) - h2v, 0.0) + graph.noise
    return GaiStats(mu, s2)


def llr_update(model, state: FgState, _graph: _Graph | None = None) -> np.ndarray:
    """Observation-to-variable LLRs from the current extrinsic probabilities.

    Uses Re(h_ik^* (r_i - mu_ik)) = Re(h_ik^* c_i) + |h_ik|^2 m_ik with the
    row residual c_i = r_i - sum_j h_ij m_ij, so every temporary is a real
    array (same values as forming ``gai_stats`` explicitly).
    """
    g = _graph or _Graph.of(model)
    mean = 2.0 * state.ext_prob - 1.0
    var = 1.0 - mean * mean
    num = g.Hr * (g.r.real - np.einsum("ik,ik->i", g.Hr, mean))[:, None]
    if g.Hi is not None:
        num += g.Hi * (g.r.imag - np.einsum("ik,ik->i", g.Hi, mean))[:, None]
    mean *= g.H2
    num += mean
    var *= g.H2
    np.subtract(var.sum(axis=1, keepdims=True), var, out=var)
    np.maximum(var, 0.0, out=var)
    var += g.noise
    num /= var
    num *= g.scale
    return num


def prob_update(state: FgState, alpha_m: float = 0.0) -> np.ndarray:
    """Extrinsic P(x_k = +1) excluding each observation's own LLR, optionally damped."""
    total = state.llr.sum(axis=0, keepdims=True)
    p = expit(np.subtract(total, state.llr))
    if alpha_m:
        p *= 1.0 - alpha_m
        p += alpha_m * state.ext_prob
    return p


def decide(llr: np.ndarray) -> np.ndarray:
    return np.where(llr.sum(axis=0) >= 0, 1.0, -1.0)


def detect_fg(model, config: FgConfig = FgConfig(), trace: bool = False):
    """Run ``config.num_iter`` rounds and return ``(decisions, total_llr)``.

    With ``trace=True`` a third element lists the decisions after each round
    (entry 0 holds matched-filter decisions sign(Re(H^H r))).
    """
    g = _Graph.of(model)
    state = FgState.initial(*g.H.shape)
    history = [np.where(np.real(np.conj(g.H).T @ g.r) >= 0, 1.0, -1.0)] if trace else None
    for _ in range(config.num_iter):
        state.llr = llr_update(model, state, g)
        state.ext_prob = prob_update(state, config.alpha_m)
        state.iteration += 1
        if trace:
            history.append(decide(state.llr))
    total = state.llr.sum(axis=0)
    if trace:
        return decide(state.llr), total, history
    return decide(state.llr), total
