"""Monte-Carlo BER engine.

Frame ``f`` of an experiment always draws its channel, symbols and noise from
``SeedSequence(seed, spawn_key=(f,))``, so results depend only on the spec and
never on how frames are scheduled across workers.  Frames are processed in
fixed-size chunks and the stopping rule is checked after each chunk in order.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .baselines import map_oracle, ml_oracle, mmse_equalize
from .channel import ChannelTaps, FrameParams, ParameterError, generate_channel, simulate_frame
from .fg import FgConfig, detect_fg
from .modulation import Modulation, UnsupportedAlphabetError
from .mrf import DampingConfig, MrfConfig, detect_mrf
from .qam_search import (
    HybridConfig,
    RtsConfig,
    _hybrid_from,
    bit_expand,
    hybrid_detect,
    quantize_lattice,
    realify,
    rts_detect,
    selective_hybrid_detect,
)

log = logging.getLogger(__name__)

DETECTORS = ("mrf", "fg", "fd-mmse", "mf", "map", "ml", "rts", "rts-bp", "rts-bp-selective", "coin")


@dataclass(frozen=True)
class DetectorConfig:
    """Knobs for every detector; ``None`` picks the detector's own default."""

    num_iter: int | None = None
    alpha_m: float | None = None
    alpha_b: float = 0.0
    rts_iterations: int = 300
    tabu_period: int = 2
    neighborhood: str = "nearest"
    hybrid_loops: int = 2
    theta: float = 0.0
    bp_iter: int = 10
    bp_alpha: float = 0.4

    def iters_for(self, detector: str, L: int = 1) -> int | None:
        if self.num_iter is not None:
            return self.num_iter
        if detector == "mrf":
            return 5 if L == 1 else 10
        if detector == "fg":
            return 10
        return None

    def alpha_for(self, detector: str) -> float | None:
        if self.alpha_m is not None:
            return self.alpha_m
        return {"mrf": 0.45, "fg": 0.4}.get(detector)

    def hybrid(self) -> HybridConfig:
        rts = RtsConfig(max_iterations=self.rts_iterations, initial_tabu_period=self.tabu_period, neighborhood=self.neighborhood)
        return HybridConfig(rts, FgConfig(self.bp_iter, self.bp_alpha), self.hybrid_loops, self.theta)


@dataclass(frozen=True)
class ExperimentSpec:
    n_t: int
    n_r: int
    L: int
    K: int
    modulation: Modulation = Modulation("bpsk", 2)
    detector: str = "mrf"
    config: DetectorConfig = DetectorConfig()
    snr_db: tuple = (6.0,)
    min_bit_errors: int = 200
    max_frames: int = 20000
    seed: int = 0
    workers: int = 1
    chunk_frames: int = 8
    add_noise: bool = True
    channel: str = "rayleigh"  # or "unit": every tap gain 1/sqrt(L), no fading

    def __post_init__(self):
        if not self.snr_db:
            raise ParameterError("SNR grid must not be empty")
        if self.min_bit_errors < 1:
            raise ParameterError("min_bit_errors must be >= 1")
        if self.max_frames < 1 or self.chunk_frames < 1:
            raise ParameterError("max_frames and chunk_frames must be >= 1")
        if self.channel not in ("rayleigh", "unit"):
            raise ParameterError(f"unknown channel {self.channel!r}")
        if self.detector not in DETECTORS:
            raise ParameterError(f"unknown detector {self.detector!r}; choose from {', '.join(DETECTORS)}")
        if isinstance(self.modulation, str):
            object.__setattr__(self, "modulation", Modulation.parse(self.modulation))
        object.__setattr__(self, "snr_db", tuple(float(s) for s in self.snr_db))
        FrameParams(self.K, self.L, self.modulation)

    @property
    def bits_per_frame(self) -> int:
        return self.K * self.n_t * self.modulation.bits_per_symbol


@dataclass(frozen=True)
class BerRecord:
    snr_db: float
    bits: int
    bit_errors: int
    frames: int
    frame_errors: int
    elapsed_s: float = field(compare=False)
    seed: int
    bp_invocations: int = 0

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else float("nan")

    def interval(self, z: float = 1.96) -> tuple[float, float]:
        """Wilson score interval on the BER."""
        n, p = self.bits, self.ber
        d = 1 + z * z / n
        c = (p + z * z / (2 * n)) / d
        h = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / d
        return max(0.0, c - h), min(1.0, c + h)


class FrameFailure(RuntimeError):
    """A detector raised; carries what is needed to replay the frame."""

    def __init__(self, seed, frame, snr_db, cause):
        super().__init__(f"detector failed at frame {frame} (seed={seed}, snr={snr_db} dB): {cause!r}")
        self.seed, self.frame, self.snr_db = seed, frame, snr_db


# -- detectors ---------------------------------------------------------------


def _binary_view(model, modulation):
    if modulation.is_bpsk:
        return model
    if modulation.pam_order == 2:
        return realify(model, modulation)
    raise UnsupportedAlphabetError(f"{modulation} needs the RTS-based detectors")


def _lattice_initial(model, modulation):
    soft = mmse_equalize(model)
    return quantize_lattice(modulation.to_lattice(soft), modulation.pam_order)


def make_detector(name: str, cfg: DetectorConfig = DetectorConfig(), L: int = 1) -> Callable:
    """Return ``f(model, modulation, rng) -> (symbol decisions, info dict)``."""
    if name == "mrf":
        mcfg = MrfConfig(cfg.iters_for("mrf", L), DampingConfig(cfg.alpha_for("mrf"), cfg.alpha_b))

        def run(model, mod, rng, trace=False):
            out = detect_mrf(_binary_view(model, mod), mcfg, trace=trace)
            info = {"trace": [mod.from_lattice(d) for d in out[2]]} if trace else {}
            return mod.from_lattice(out[0]), info

    elif name == "fg":
        fcfg = FgConfig(cfg.iters_for("fg", L), cfg.alpha_for("fg"))

        def run(model, mod, rng, trace=False):
            out = detect_fg(_binary_view(model, mod), fcfg, trace=trace)
            info = {"trace": [mod.from_lattice(d) for d in out[2]]} if trace else {}
            return mod.from_lattice(out[0]), info

    elif name == "fd-mmse":

        def run(model, mod, rng):
            return mod.quantize(mmse_equalize(model)), {}

    elif name == "mf":

        def run(model, mod, rng):
            H = model.H
            return mod.quantize(H.conj().T @ model.r / np.sum(np.abs(H) ** 2, axis=0)), {}

    elif name == "map":

        def run(model, mod, rng):
            return map_oracle(model, mod).map_decision, {}

    elif name == "ml":

        def run(model, mod, rng):
            return ml_oracle(model, mod), {}

    elif name in ("rts", "rts-bp", "rts-bp-selective"):
        hcfg = cfg.hybrid()

        def run(model, mod, rng):
            rm = realify(model, mod)
            x0 = _lattice_initial(model, mod)
            if name == "rts":
                x, _ = rts_detect(rm, hcfg.rts, x0)
                return mod.from_lattice(x), {}
            if name == "rts-bp":
                return mod.from_lattice(hybrid_detect(rm, hcfg, x0)), {"bp": 1}
            res = selective_hybrid_detect(rm, hcfg, hcfg.theta, x0)
            return mod.from_lattice(res.x), {"bp": int(res.used_bp), "m1": res.m1}

    elif name == "coin":

        def run(model, mod, rng):
            return mod.random_symbols(model.n_vars, rng), {}

    else:
        raise ParameterError(f"unknown detector {name!r}")
    return run


# -- frames ------------------------------------------------------------------


def frame_rngs(seed: int, frame: int):
    """Independent generators for the channel/data/noise and for the detector."""
    ss = np.random.SeedSequence(seed, spawn_key=(frame,))
    a, b = ss.spawn(2)
    return np.random.default_rng(a), np.random.default_rng(b)


def draw_frame(spec: ExperimentSpec, snr_db: float, frame: int):
    rng, det_rng = frame_rngs(spec.seed, frame)
    if spec.channel == "unit":
        taps = ChannelTaps(np.ones((spec.L, spec.n_r, spec.n_t), dtype=complex) / np.sqrt(spec.L))
    else:
        taps = generate_channel(spec.n_t, spec.n_r, spec.L, rng)
    x = spec.modulation.random_symbols(spec.K * spec.n_t, rng)
    params = FrameParams(spec.K, spec.L, spec.modulation)
    model = simulate_frame(taps, params, x, snr_db, rng, add_noise=spec.add_noise)
    return x, model, det_rng


def _run_chunk(spec: ExperimentSpec, snr_db: float, start: int, stop: int, trace_iters: int | None = None):
    """Per-frame bit-error counts for frames [start, stop).

    Returns an int array (frames,) or, when tracing, (frames, trace_iters + 1).
    """
    det = make_detector(spec.detector, spec.config, spec.L)
    mod = spec.modulation
    errs, bp = [], 0
    for f in range(start, stop):
        x, model, det_rng = draw_frame(spec, snr_db, f)
        ref = mod.bits(x)
        try:
            if trace_iters is None:
                x_hat, info = det(model, mod, det_rng)
                errs.append(int(np.sum(mod.bits(x_hat) != ref)))
                bp += info.get("bp", 0)
            else:
                _, info = det(model, mod, det_rng, trace=True)
                errs.append([int(np.sum(mod.bits(d) != ref)) for d in info["trace"]])
        except Exception as exc:  # noqa: BLE001 - re-raised with replay info
            raise FrameFailure(spec.seed, f, snr_db, exc) from exc
    return np.asarray(errs, dtype=np.int64), bp


def _chunks(spec):
    for start in range(0, spec.max_frames, spec.chunk_frames):
        yield start, min(start + spec.chunk_frames, spec.max_frames)


def _collect(spec, snr_db, done: Callable[[np.ndarray], bool], trace_iters=None):
    """Run chunks in order until ``done(errors_so_far)``; parallel when workers > 1."""
    parts, bp = [], 0
    if spec.workers <= 1:
        for start, stop in _chunks(spec):
            e, b = _run_chunk(spec, snr_db, start, stop, trace_iters)
            parts.append(e)
            bp += b
            if done(np.concatenate(parts)):
                break
        return np.concatenate(parts), bp

    chunks = list(_chunks(spec))
    with ProcessPoolExecutor(spec.workers) as pool:
        pending = {}
        nxt = 0
        for k in range(len(chunks)):
            while nxt < len(chunks) and len(pending) < 2 * spec.workers:
                pending[nxt] = pool.submit(_run_chunk, spec, snr_db, *chunks[nxt], trace_iters)
                nxt += 1
            e, b = pending.pop(k).result()
            parts.append(e)
            bp += b
            if done(np.concatenate(parts)):
                for fut in pending.values():
                    fut.cancel()
                break
    return np.concatenate(parts), bp


def _record(spec, snr_db, errs, bp, t0) -> BerRecord:
    return BerRecord(
        snr_db=snr_db,
        bits=len(errs) * spec.bits_per_frame,
        bit_errors=int(errs.sum()),
        frames=len(errs),
        frame_errors=int(np.count_nonzero(errs)),
        elapsed_s=time.perf_counter() - t0,
        seed=spec.seed,
        bp_invocations=bp,
    )


def run_ber_experiment(spec: ExperimentSpec) -> list[BerRecord]:
    """One BerRecord per SNR point, each stopped by the min-errors / max-frames rule."""
    out = []
    for snr in spec.snr_db:
        t0 = time.perf_counter()
        errs, bp = _collect(spec, snr, lambda e: e.sum() >= spec.min_bit_errors)
        rec = _record(spec, snr, errs, bp, t0)
        log.info("%s %.2f dB: %d/%d errors, BER %.3e", spec.detector, snr, rec.bit_errors, rec.bits, rec.ber)
        out.append(rec)
    return out


def frame_errors(spec: ExperimentSpec, snr_db: float, frames: int) -> np.ndarray:
    """Bit errors of frames 0..frames-1, for paired comparisons between detectors."""
    return _run_chunk(spec, float(snr_db), 0, frames)[0]


def sweep_damping(spec: ExperimentSpec, alpha_grid: Sequence[float]) -> list[tuple[float, BerRecord]]:
    """BER of the MRF detector for each message damping factor (same frames for all)."""
    if spec.detector != "mrf":
        raise ParameterError("damping sweeps need the mrf detector")
    if len(spec.snr_db) != 1:
        raise ParameterError("damping sweeps run at a single SNR")
    rows = []
    for a in alpha_grid:
        s = replace(spec, config=replace(spec.config, alpha_m=float(a)))
        rows.append((float(a), run_ber_experiment(s)[0]))
    return rows


def convergence_trace(spec: ExperimentSpec, max_iters: int) -> list[tuple[int, BerRecord]]:
    """BER after 0..max_iters iterations, all counts evaluated on the same frames.

    Frames are added until every iteration count has ``min_bit_errors`` errors.
    """
    if spec.detector not in ("mrf", "fg"):
        raise ParameterError("convergence traces need the mrf or fg detector")
    if len(spec.snr_db) != 1:
        raise ParameterError("convergence traces run at a single SNR")
    s = replace(spec, config=replace(spec.config, num_iter=max_iters))
    snr = s.snr_db[0]
    t0 = time.perf_counter()
    errs, _ = _collect(s, snr, lambda e: e.sum(axis=0).min() >= s.min_bit_errors, trace_iters=max_iters)
    return [(t, _record(s, snr, errs[:, t], 0, t0)) for t in range(max_iters + 1)]


# -- selective BP threshold ----------------------------------------------------


@dataclass(frozen=True)
class ThetaRow:
    theta: float
    bp_fraction: float
    bits: int
    bit_errors: int
    frames: int

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits


@dataclass(frozen=True)
class ThetaCalibration:
    theta: float
    m1: np.ndarray
    rts_correct: np.ndarray
    rows: list


def m1_statistics(spec: ExperimentSpec, frames: int):
    """Per frame: M1 of the RTS output, RTS bit errors and RTS-BP bit errors."""
    mod = spec.modulation
    hcfg = spec.config.hybrid()
    m1, e_rts, e_hyb = [], [], []
    for f in range(frames):
        x, model, _ = draw_frame(spec, spec.snr_db[0], f)
        rm = realify(model, mod)
        ref = bit_expand(mod.to_lattice(x), mod.pam_order)
        # same path as the selective detector: one RTS run, BP applied on top
        x_rts, cost = rts_detect(rm, hcfg.rts, _lattice_initial(model, mod))
        x_hyb = _hybrid_from(rm, x_rts, hcfg)
        m1.append(math.sqrt(max(cost, 0.0)))
        e_rts.append(int(np.sum(bit_expand(x_rts, mod.pam_order) != ref)))
        e_hyb.append(int(np.sum(bit_expand(x_hyb, mod.pam_order) != ref)))
    return np.array(m1), np.array(e_rts), np.array(e_hyb)


def valley_threshold(m1: np.ndarray, correct: np.ndarray) -> float:
    """Threshold between correct and erroneous M1 populations (fewest misclassified)."""
    cand = np.unique(m1)
    if correct.all() or (~correct).all():
        return float(cand.max() if correct.all() else 0.0)
    mids = np.concatenate([[0.0], (cand[:-1] + cand[1:]) / 2, [cand[-1] * 1.01]])
    miss = [np.sum(correct & (m1 > t)) + np.sum(~correct & (m1 <= t)) for t in mids]
    return float(mids[int(np.argmin(miss))])


def calibrate_theta(spec: ExperimentSpec, frames: int, thetas: Sequence[float] | None = None) -> ThetaCalibration:
    """Choose theta from the simulated M1 distribution and tabulate the trade-off."""
    m1, e_rts, e_hyb = m1_statistics(spec, frames)
    correct = e_rts == 0
    theta = valley_threshold(m1, correct)
    if thetas is None:
        thetas = np.linspace(0.0, float(m1.max()) * 1.05, 11)
    bits_per_frame = spec.K * spec.n_t * spec.modulation.bits_per_symbol
    rows = []
    for t in list(thetas) + [theta]:
        use = m1 > t
        rows.append(ThetaRow(float(t), float(use.mean()), frames * bits_per_frame, int(np.where(use, e_hyb, e_rts).sum()), frames))
    return ThetaCalibration(theta, m1, correct, rows)
