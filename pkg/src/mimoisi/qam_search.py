"""M-QAM detection by reactive tabu search (RTS) and the hybrid RTS / FG-GAI loop.

Everything here works on the real-valued model r' = H' x' + v' where x' sits on
the unnormalized PAM lattice {+-1, +-3, ...}.  A lattice value decomposes as
x' = sum_j 2**j b^(j) with b^(j) in {+-1}; RTS tends to get the least
significant layer b^(0) wrong, so the hybrid detector cancels the upper
layers and re-detects b^(0) with FG-GAI belief propagation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import EffectiveModel
from .fg import FgConfig, detect_fg
from .modulation import Modulation, UnsupportedAlphabetError


class LatticeError(ValueError):
    """A value is not a point of the PAM lattice."""


@dataclass(frozen=True)
class RealModel:
    """Stacked real model; ``H_lattice`` maps lattice vectors to ``r_real``.

    For BPSK only the real half of x is kept, so ``H_real`` is 2n_obs x n_vars.
    """

    H_real: np.ndarray
    r_real: np.ndarray
    pam_alphabet: np.ndarray
    sigma2: float
    scale: float = 1.0

    @property
    def pam_order(self) -> int:
        return len(self.pam_alphabet)

    @property
    def n_layers(self) -> int:
        return int(np.log2(self.pam_order))

    @property
    def H_lattice(self) -> np.ndarray:
        return self.H_real * self.scale

    def residual(self, x_lattice: np.ndarray) -> np.ndarray:
        return self.r_real - self.H_lattice @ x_lattice

    def cost(self, x_lattice: np.ndarray) -> float:
        e = self.residual(x_lattice)
        return float(e @ e)

    def as_effective(self) -> EffectiveModel:
        """The +-1 lattice problem as an EffectiveModel (real entries)."""
        if self.pam_order != 2:
            raise UnsupportedAlphabetError(f"{self.pam_order}-PAM is not antipodal")
        H = self.H_lattice
        return EffectiveModel(H, self.r_real, self.sigma2, (1, H.shape[1], H.shape[0]))

    def with_observation(self, r_real: np.ndarray, pam_alphabet=None) -> "RealModel":
        alphabet = self.pam_alphabet if pam_alphabet is None else np.asarray(pam_alphabet, dtype=float)
        return RealModel(self.H_lattice, r_real, alphabet, self.sigma2, 1.0)


def realify(model: EffectiveModel, modulation: Modulation) -> RealModel:
    """Real-valued equivalent of ``model`` for the given square QAM (or BPSK)."""
    if not isinstance(modulation, Modulation):
        modulation = Modulation.parse(str(modulation)) if isinstance(modulation, str) else Modulation("qam", int(modulation))
    H, r = model.H, model.r
    if modulation.is_bpsk:
        Hr = np.vstack([H.real, H.imag])
    else:
        Hr = np.block([[H.real, -H.imag], [H.imag, H.real]])
    rr = np.concatenate([r.real, r.imag])
    return RealModel(Hr, rr, modulation.pam_levels, model.sigma2, modulation.scale)


def bit_expand(x_pam, pam_order: int | None = None) -> np.ndarray:
    """+-1 layers of lattice values; row j carries weight 2**j.

    ``pam_order`` defaults to the smallest power of two covering ``x_pam``.
    """
    x = np.asarray(x_pam, dtype=float)
    if pam_order is None:
        top = int(np.max(np.abs(x))) if x.size else 1
        pam_order = 2
        while pam_order - 1 < top:
            pam_order *= 2
    n = int(round(math.log2(pam_order)))
    if 2**n != pam_order:
        raise LatticeError(f"PAM order must be a power of two, got {pam_order}")
    u = (x + (pam_order - 1)) / 2.0
    ui = np.rint(u)
    if np.any(np.abs(u - ui) > 1e-9) or np.any(ui < 0) or np.any(ui > pam_order - 1):
        raise LatticeError(f"values off the {pam_order}-PAM lattice")
    ui = ui.astype(np.int64)
    return np.stack([2.0 * ((ui >> j) & 1) - 1.0 for j in range(n)])


def reconstruct(layers: np.ndarray) -> np.ndarray:
    layers = np.atleast_2d(layers)
    w = 2.0 ** np.arange(layers.shape[0])
    return w @ layers


@dataclass(frozen=True)
class RtsConfig:
    max_iterations: int = 300
    initial_tabu_period: int = 2
    growth: float = 1.5
    repetition_window: int = 50
    neighborhood: str = "nearest"  # or "full"
    initial: str = "mmse"  # or "mf"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.initial_tabu_period < 0:
            raise ValueError("tabu period must be >= 0")
        if self.neighborhood not in ("nearest", "full"):
            raise ValueError(f"unknown neighborhood {self.neighborhood!r}")
        if self.initial not in ("mmse", "mf"):
            raise ValueError(f"unknown initial-vector policy {self.initial!r}")


class IncrementalCost:
    """Track ||r - H x||^2 under single-coordinate moves in O(n) per move."""

    def __init__(self, H: np.ndarray, r: np.ndarray, x: np.ndarray, gram: np.ndarray | None = None):
        self.H = H
        self.gram = H.T @ H if gram is None else gram
        self.x = np.array(x, dtype=float)
        e = r - H @ self.x
        self.cost = float(e @ e)
        self.corr = H.T @ e  # H^T (r - Hx)

    def deltas(self, steps: np.ndarray) -> np.ndarray:
        """Cost change for moving coordinate i by ``steps[i, m]``."""
        d = np.diag(self.gram)
        return steps * (steps * d[:, None] - 2.0 * self.corr[:, None])

    def move(self, i: int, new_value: float) -> None:
        step = new_value - self.x[i]
        self.cost += step * (step * self.gram[i, i] - 2.0 * self.corr[i])
        self.corr -= step * self.gram[:, i]
        self.x[i] = new_value


def _candidate_steps(x: np.ndarray, alphabet: np.ndarray, policy: str) -> np.ndarray:
    """Steps to neighbouring lattice values; NaN marks a missing neighbour."""
    if policy == "nearest":
        lo, hi = alphabet[0], alphabet[-1]
        up = np.where(x + 2.0 <= hi, 2.0, np.nan)
        down = np.where(x - 2.0 >= lo, -2.0, np.nan)
        return np.stack([down, up], axis=1)
    steps = alphabet[None, :] - x[:, None]
    steps[steps == 0] = np.nan
    return steps


def rts_detect(real_model: RealModel, config: RtsConfig = RtsConfig(), initial: np.ndarray | None = None):
    """Reactive tabu search for argmin ||r' - H' x'||^2 over the lattice.

    Each iteration moves to the best neighbour (uphill allowed) that is not tabu,
    unless a tabu move beats the best cost seen so far.  Returning to a value
    a coordinate just left is tabu for the current tabu period; the period
    grows by ``growth`` (capped at n) whenever a solution reappears within
    ``repetition_window`` iterations and shrinks by one otherwise.

    Returns ``(x_best, cost_best)`` with ``x_best`` on the lattice.
    """
    alphabet = np.asarray(real_model.pam_alphabet, dtype=float)
    H = real_model.H_lattice
    n = H.shape[1]
    if initial is None:
        initial = initial_vector(real_model, config.initial)
    x0 = np.asarray(initial, dtype=float)
    if x0.shape != (n,):
        raise ValueError(f"initial vector must have length {n}")
    bit_expand(x0, len(alphabet))  # lattice check

    state = IncrementalCost(H, real_model.r_real, x0)
    best_x, best_cost = state.x.copy(), state.cost
    tabu_until = np.zeros((n, len(alphabet)), dtype=np.int64)
    period = config.initial_tabu_period
    seen: dict[bytes, int] = {state.x.tobytes(): 0}
    rows = np.arange(n)
    # beyond n every coordinate is frozen and the search degenerates
    max_period = max(n, config.initial_tabu_period)

    for it in range(1, config.max_iterations + 1):
        steps = _candidate_steps(state.x, alphabet, config.neighborhood)
        if np.all(np.isnan(steps)):
            break
        delta = state.deltas(steps)
        new_vals = state.x[:, None] + steps
        target = np.where(np.isnan(new_vals), 0, np.rint((new_vals + alphabet[-1]) / 2.0)).astype(np.int64)
        is_tabu = tabu_until[rows[:, None], target] >= it
        aspire = state.cost + delta < best_cost - 1e-12
        allowed = ~np.isnan(delta) & (~is_tabu | aspire)
        if not allowed.any():
            allowed = ~np.isnan(delta)
        masked = np.where(allowed, delta, np.inf)
        flat = int(np.argmin(masked))
        i, m = divmod(flat, steps.shape[1])
        old = state.x[i]
        state.move(i, float(new_vals[i, m]))
        tabu_until[i, int(round((old + alphabet[-1]) / 2.0))] = it + period

        if state.cost < best_cost:
            best_cost, best_x = state.cost, state.x.copy()

        key = state.x.tobytes()
        last = seen.get(key)
        if last is not None and it - last <= config.repetition_window:
            period = min(math.ceil(period * config.growth) if period else 1, max_period)
        else:
            period = max(config.initial_tabu_period, period - 1)
        seen[key] = it

    return best_x, real_model.cost(best_x)


def greedy_descent(real_model: RealModel, initial: np.ndarray, neighborhood: str = "nearest"):
    """Steepest single-coordinate descent; stops at the first local minimum."""
    alphabet = np.asarray(real_model.pam_alphabet, dtype=float)
    state = IncrementalCost(real_model.H_lattice, real_model.r_real, initial)
    while True:
        steps = _candidate_steps(state.x, alphabet, neighborhood)
        delta = np.where(np.isnan(steps), np.inf, state.deltas(np.nan_to_num(steps)))
        flat = int(np.argmin(delta))
        i, m = divmod(flat, steps.shape[1])
        if not delta[i, m] < -1e-12:
            break
        state.move(i, float(state.x[i] + steps[i, m]))
    return state.x.copy(), real_model.cost(state.x)


def quantize_lattice(v: np.ndarray, pam_order: int) -> np.ndarray:
    k = np.clip(np.round((np.asarray(v) + (pam_order - 1)) / 2.0), 0, pam_order - 1)
    return 2.0 * k - (pam_order - 1)


def initial_vector(real_model: RealModel, policy: str = "mmse") -> np.ndarray:
    """Starting point for RTS: quantized MMSE (or matched-filter) estimate."""
    H = real_model.H_lattice
    m = real_model.pam_order
    if policy == "mf":
        est = H.T @ real_model.r_real / np.maximum(np.sum(H * H, axis=0), 1e-300)
    else:
        # lattice symbols have variance (m^2 - 1) / 3; real noise has sigma2 / 2
        prior_var = (m * m - 1) / 3.0
        A = H.T @ H + (real_model.sigma2 / 2.0 / prior_var) * np.eye(H.shape[1])
        est = np.linalg.solve(A, H.T @ real_model.r_real)
    return quantize_lattice(est, m)


@dataclass(frozen=True)
class HybridConfig:
    rts: RtsConfig = field(default_factory=RtsConfig)
    fg: FgConfig = field(default_factory=FgConfig)
    loops: int = 2
    theta: float = 0.0


def _lsb_refine(real_model: RealModel, x_hat: np.ndarray, fg: FgConfig) -> np.ndarray:
    """Cancel all but the LSB layer, re-detect it with FG-GAI, recombine."""
    layers = bit_expand(x_hat, real_model.pam_order)
    upper = reconstruct(layers) - layers[0]
    r_tilde = real_model.r_real - real_model.H_lattice @ upper
    lsb_model = real_model.with_observation(r_tilde, pam_alphabet=[-1.0, 1.0])
    b0, _ = detect_fg(lsb_model, fg)
    return b0 + upper


def _hybrid_from(real_model: RealModel, x_hat: np.ndarray, config: HybridConfig) -> np.ndarray:
    for loop in range(config.loops):
        if loop:
            x_hat, _ = rts_detect(real_model, config.rts, x_hat)
        x_hat = _lsb_refine(real_model, x_hat, config.fg)
    return x_hat


def hybrid_detect(real_model: RealModel, config: HybridConfig = HybridConfig(), initial=None) -> np.ndarray:
    """RTS followed by ``loops`` rounds of (LSB re-detection by BP, RTS restart).

    The output is the lattice vector recombined after the last BP pass.
    """
    x_hat, _ = rts_detect(real_model, config.rts, initial)
    return _hybrid_from(real_model, x_hat, config)


@dataclass(frozen=True)
class SelectiveResult:
    x: np.ndarray
    used_bp: bool
    m1: float


def selective_hybrid_detect(
    real_model: RealModel, config: HybridConfig = HybridConfig(), theta: float | None = None, initial=None
) -> SelectiveResult:
    """Hybrid detection that only invokes BP when ||r' - H' x_rts|| > theta."""
    theta = config.theta if theta is None else theta
    if theta < 0:
        raise ValueError("theta must be >= 0")
    x_hat, cost = rts_detect(real_model, config.rts, initial)
    m1 = math.sqrt(max(cost, 0.0))
    if m1 > theta:
        return SelectiveResult(_hybrid_from(real_model, x_hat, config), True, m1)
    return SelectiveResult(x_hat, False, m1)


def layer_error_counts(x_true: np.ndarray, x_hat: np.ndarray, pam_order: int) -> np.ndarray:
    """Bit errors per layer (index 0 = LSB) between two lattice vectors."""
    a = bit_expand(x_true, pam_order)
    b = bit_expand(x_hat, pam_order)
    return np.sum(a != b, axis=1)
