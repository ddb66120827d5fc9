"""Quick consistency checks bundled with the CLI: model equivalence and oracle agreement."""

from __future__ import annotations

import numpy as np

from .baselines import map_oracle, ml_oracle
from .channel import FrameParams, build_effective_matrix, build_frequency_blocks, generate_channel, simulate_frame
from .fg import FgConfig, detect_fg
from .modulation import Modulation
from .mrf import DampingConfig, MrfConfig, detect_mrf
from .qam_search import RtsConfig, realify, rts_detect

BPSK = Modulation("bpsk", 2)


def check_model_equivalence(rng, trials=20) -> tuple[bool, str]:
    """Noiseless CP frame in the frequency domain equals H_eff x."""
    worst = 0.0
    for _ in range(trials):
        taps = generate_channel(2, 2, 3, rng)
        x = BPSK.random_symbols(16, rng)
        for cp in (False, True):
            m = simulate_frame(taps, FrameParams(8, 3, BPSK), x, 10.0, rng, add_noise=False, explicit_cp=cp)
            worst = max(worst, np.linalg.norm(m.r - m.H @ x) / np.linalg.norm(m.r))
        H = build_effective_matrix(build_frequency_blocks(taps, 8), 8, 2)
        worst = max(worst, np.abs(H - m.H).max())
    return worst < 1e-10, f"max relative error {worst:.2e}"


def check_single_variable(rng, trials=20) -> tuple[bool, str]:
    """With one unknown both BP detectors are exact."""
    worst = 0.0
    for _ in range(trials):
        taps = generate_channel(1, 2, 1, rng)
        x = BPSK.random_symbols(1, rng)
        m = simulate_frame(taps, FrameParams(1, 1, BPSK), x, 3.0, rng)
        marg = map_oracle(m).marginals[0]
        _, b = detect_mrf(m, MrfConfig(3))
        worst = max(worst, abs(b[0, 0] - marg[1]))
        _, llr = detect_fg(m, FgConfig(3, 0.0))
        exact = np.log(marg[1] / marg[0])
        # FG uses the exact complex likelihood, twice the oracle's log-ratio
        worst = max(worst, abs(llr[0] - 2.0 * exact) / max(1.0, abs(exact)))
    return worst < 1e-8, f"max deviation {worst:.2e}"


def check_oracle_agreement(rng, trials=200) -> tuple[bool, str]:
    """MRF and FG decisions vs exhaustive MAP on 2x2, K=2 frames at 10 dB."""
    agree_m = agree_f = total = 0
    for _ in range(trials):
        taps = generate_channel(2, 2, 1, rng)
        x = BPSK.random_symbols(4, rng)
        m = simulate_frame(taps, FrameParams(2, 1, BPSK), x, 10.0, rng)
        ref = np.real(map_oracle(m).map_decision)
        agree_m += np.sum(detect_mrf(m, MrfConfig(5, DampingConfig(0.2)))[0] == ref)
        agree_f += np.sum(detect_fg(m, FgConfig(10, 0.4))[0] == ref)
        total += ref.size
    fm, ff = agree_m / total, agree_f / total
    return min(fm, ff) >= 0.95, f"MRF {fm:.3f}, FG {ff:.3f} of bits agree with MAP"


def check_rts_ml(rng, trials=100) -> tuple[bool, str]:
    mod = Modulation("qam", 16)
    hits = 0
    for _ in range(trials):
        taps = generate_channel(2, 2, 1, rng)
        x = mod.random_symbols(2, rng)
        m = simulate_frame(taps, FrameParams(1, 1, mod), x, 20.0, rng)
        x_rts, _ = rts_detect(realify(m, mod), RtsConfig())
        hits += np.allclose(mod.from_lattice(x_rts), ml_oracle(m, mod))
    return hits >= 0.9 * trials, f"RTS equals ML on {hits}/{trials} frames"


CHECKS = {
    "model-equivalence": check_model_equivalence,
    "single-variable-exactness": check_single_variable,
    "map-agreement": check_oracle_agreement,
    "rts-vs-ml": check_rts_ml,
}


def run_selftest(seed: int = 0, out=print) -> bool:
    ok_all = True
    for k, (name, fn) in enumerate(CHECKS.items()):
        ok, msg = fn(np.random.default_rng([seed, k]))
        ok_all &= ok
        out(f"{'PASS' if ok else 'FAIL'} {name}: {msg}")
    return ok_all
