"""Named experiment setups whose system parameters follow published figure captions.

A preset fixes the system (n_t, n_r, L, K, modulation), detector settings and
the kind of run.  SNR grids are not stated in the captions and are chosen to
span the plotted BER range; everything else is copied from the caption.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .harness import DetectorConfig, ExperimentSpec
from .modulation import Modulation

BPSK = Modulation("bpsk", 2)
QAM16 = Modulation("qam", 16)
QAM64 = Modulation("qam", 64)


@dataclass(frozen=True)
class Preset:
    name: str
    kind: str  # ber | sweep-damping | trace | calibrate-theta
    specs: tuple  # one ExperimentSpec per detector variant, shared seed
    reference: str
    alpha_grid: tuple = ()
    max_iters: int = 0
    frames: int = 0
    extra: dict = field(default_factory=dict)


def _grid(start, step, stop):
    n = int(round((stop - start) / step)) + 1
    return tuple(float(round(start + k * step, 10)) for k in range(n))


def _mrf(iters, alpha):
    return DetectorConfig(num_iter=iters, alpha_m=alpha)


def _fg(iters=10, alpha=0.4):
    return DetectorConfig(num_iter=iters, alpha_m=alpha)


def _build() -> dict[str, Preset]:
    out: dict[str, Preset] = {}

    def add(p: Preset):
        out[p.name] = p

    damp_grid = _grid(0.0, 0.05, 0.9)
    for n in (16, 24):
        add(Preset(
            f"fig4-{n}", "sweep-damping",
            (ExperimentSpec(n, n, 1, 1, BPSK, "mrf", _mrf(5, 0.0), (8.0,)),),
            f"MRF BP vs alpha_m, {n}x{n} V-BLAST, flat fading, 8 dB, 5 iterations",
            alpha_grid=damp_grid,
        ))
    for n in (4, 8, 16, 24, 32):
        add(Preset(
            f"fig5-nt{n}", "ber",
            (ExperimentSpec(n, n, 1, 1, BPSK, "mrf", _mrf(5, 0.2), _grid(0, 2, 14)),),
            f"MRF BP BER vs SNR, {n}x{n} V-BLAST, flat fading, alpha_m=0.2, 5 iterations",
        ))
    add(Preset(
        "fig7", "sweep-damping",
        (ExperimentSpec(4, 4, 10, 50, BPSK, "mrf", _mrf(7, 0.0), (6.0,)),),
        "MRF BP vs alpha_m, 4x4, [L=10,K=50], uniform PDP, 6 dB, 7 iterations",
        alpha_grid=damp_grid,
    ))
    add(Preset(
        "fig8", "trace",
        tuple(ExperimentSpec(4, 4, 20, 100, BPSK, "mrf", _mrf(10, a), (7.0,)) for a in (0.0, 0.45)),
        "MRF BP BER vs iterations, 4x4, [L=20,K=100], 7 dB, alpha_m=0 and 0.45",
        max_iters=10,
    ))
    for L, K in ((5, 25), (10, 50), (20, 100)):
        add(Preset(
            f"fig9-L{L}", "ber",
            (ExperimentSpec(4, 4, L, K, BPSK, "mrf", _mrf(10, 0.45), _grid(0, 1, 10)),),
            f"damped MRF BP BER vs SNR, 4x4, [L={L},K={K}], uniform PDP, 10 iterations, alpha_m=0.45",
        ))
    for n in (8, 16, 24, 32, 64):
        add(Preset(
            f"fig11-nt{n}", "ber",
            (ExperimentSpec(n, n, 1, 1, BPSK, "fg", _fg(20, 0.4), _grid(0, 2, 14)),),
            f"FG-GAI BP BER vs SNR, {n}x{n} V-BLAST, flat fading, 20 iterations, alpha_m=0.4",
        ))
    for n in (4, 8, 16):
        add(Preset(
            f"fig12-nt{n}", "ber",
            (ExperimentSpec(n, n, 6, 64, BPSK, "fg", _fg(10, 0.4), _grid(0, 1, 10)),),
            f"FG-GAI BP BER vs SNR, {n}x{n}, [L=6,K=64], uniform PDP, 10 iterations, alpha_m=0.4",
        ))
    for L, K in ((5, 25), (20, 100)):
        grid = _grid(0, 1, 10)
        add(Preset(
            f"fig13-L{L}", "ber",
            (
                ExperimentSpec(4, 4, L, K, BPSK, "mrf", _mrf(10, 0.45), grid),
                ExperimentSpec(4, 4, L, K, BPSK, "fg", _fg(10, 0.4), grid),
            ),
            f"MRF BP vs FG-GAI BP, 4x4, [L={L},K={K}], uniform PDP",
        ))
    grid15 = _grid(10, 2, 24)
    add(Preset(
        "fig15", "ber",
        (
            ExperimentSpec(16, 16, 6, 64, QAM16, "rts", DetectorConfig(), grid15),
            ExperimentSpec(16, 16, 6, 64, QAM16, "rts-bp", DetectorConfig(), grid15),
        ),
        "RTS-BP vs RTS, 16x16 V-BLAST, 16-QAM, L=6, K=64, uniform PDP",
    ))
    add(Preset(
        "fig16", "calibrate-theta",
        (ExperimentSpec(32, 32, 1, 1, QAM64, "rts-bp-selective", DetectorConfig(), (30.0,)),),
        "pdf of M1 for RTS output, 32x32 V-BLAST, 64-QAM, 30 dB, flat fading",
        frames=2000,
        extra={"thetas": tuple(np.arange(0.0, 21.0, 2.0))},
    ))
    return out


PRESETS: dict[str, Preset] = _build()


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}") from None
