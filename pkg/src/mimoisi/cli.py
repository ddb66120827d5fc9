"""Command-line front end.

    mimoisi ber --preset fig9-L5
    mimoisi ber --nt 4 --L 5 --K 25 --detector mrf,fg --snr 0:1:8
    mimoisi sweep-damping --nt 4 --L 10 --K 50 --snr 6 --grid 0:0.05:0.9
    mimoisi trace --nt 4 --L 20 --K 100 --snr 7 --alpha-m 0.45 --max-iters 10
    mimoisi calibrate-theta --nt 4 --L 6 --K 16 --modulation 16qam --snr 18 --frames 200
    mimoisi selftest

A ``--config`` file holds ``key = value`` lines using the long flag names
(``#`` starts a comment); flags on the command line override it.  The default
seed comes from ``MIMOISI_SEED``.  Exit codes: 0 success, 2 configuration
error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import replace

from .channel import ParameterError
from .harness import (
    DETECTORS,
    BerRecord,
    DetectorConfig,
    ExperimentSpec,
    FrameFailure,
    calibrate_theta,
    convergence_trace,
    run_ber_experiment,
    sweep_damping,
)
from .modulation import Modulation, UnsupportedAlphabetError
from .presets import PRESETS, get_preset

COLUMNS = (
    "snr_db,detector,n_t,n_r,L,K,modulation,alpha_m,alpha_b,iters,bits,bit_errors,ber,frames,frame_errors,seed,elapsed_s"
).split(",")
THETA_COLUMNS = "theta,bp_fraction,bits,bit_errors,ber,frames,selected".split(",")
SUBCOMMANDS = ("ber", "sweep-damping", "trace", "calibrate-theta", "selftest")
SEED_ENV = "MIMOISI_SEED"


class ConfigError(ValueError):
    """Bad flags, config file contents or combinations; maps to exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def parse_grid(text: str) -> list[float]:
    """``a:step:b`` (inclusive) or a comma-separated list."""
    text = str(text).strip()
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3:
                raise ValueError
            a, step, b = parts
            if step <= 0 or b < a:
                raise ConfigError(f"grid {text!r} needs step > 0 and stop >= start")
            n = int(round((b - a) / step)) + 1
            if a + (n - 1) * step > b + 1e-9 * max(1.0, abs(b)):
                n -= 1
            return [round(a + k * step, 10) for k in range(n)]
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse grid {text!r}") from None


def read_config_file(path: str) -> list[str]:
    """Turn ``key = value`` lines into command-line tokens."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    tokens = []
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if value.lower() in ("true", "yes", "on"):
            tokens.append(flag)
        elif value.lower() not in ("false", "no", "off"):
            tokens += [flag, value]
    return tokens


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mimoisi", description="BP detection in MIMO-ISI channels: BER simulations")
    sub = p.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}", parser_class=_Parser)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="key = value file; flags override it")
        s.add_argument("--seed", type=int, help=f"master seed (default ${SEED_ENV} or 0)")
        s.add_argument("-o", "--output", help="output file (default stdout)")
        if name == "selftest":
            continue
        s.add_argument("--preset", choices=sorted(PRESETS), metavar="NAME", help="named figure setup")
        s.add_argument("--nt", type=int)
        s.add_argument("--nr", type=int, help="defaults to --nt")
        s.add_argument("--L", type=int)
        s.add_argument("--K", type=int)
        s.add_argument("--modulation")
        s.add_argument("--detector", help=f"one or a comma list of: {', '.join(DETECTORS)}")
        s.add_argument("--snr", help="dB, a:step:b or comma list")
        s.add_argument("--iters", type=int)
        s.add_argument("--alpha-m", type=float)
        s.add_argument("--alpha-b", type=float)
        s.add_argument("--rts-iterations", type=int)
        s.add_argument("--theta", type=float)
        s.add_argument("--min-errors", type=int)
        s.add_argument("--max-frames", type=int)
        s.add_argument("--workers", type=int)
        s.add_argument("--channel", choices=("rayleigh", "unit"))
        s.add_argument("--no-noise", action="store_true")
        s.add_argument("--format", choices=("csv", "json"), default="csv")
        s.add_argument("--no-timing", action="store_true", help="write elapsed_s as 0 for byte-stable output")
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "sweep-damping":
            s.add_argument("--grid", help="alpha_m values, a:step:b or comma list")
        if name == "trace":
            s.add_argument("--max-iters", type=int)
        if name == "calibrate-theta":
            s.add_argument("--frames", type=int)
            s.add_argument("--thetas", help="theta values, a:step:b or comma list")
    return p


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    if not argv or argv[0] not in SUBCOMMANDS:
        if argv and argv[0] in ("-h", "--help"):
            parser.parse_args(argv)
        raise ConfigError(f"expected a subcommand: {', '.join(SUBCOMMANDS)}")
    first = parser.parse_args(argv)
    if first.config:
        argv = argv[:1] + read_config_file(first.config) + argv[1:]
        return parser.parse_args(argv)
    return first


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from None


def _override(spec: ExperimentSpec, args, seed: int) -> ExperimentSpec:
    cfg = spec.config
    for flag, field in (("iters", "num_iter"), ("alpha_m", "alpha_m"), ("alpha_b", "alpha_b"),
                        ("rts_iterations", "rts_iterations"), ("theta", "theta")):
        v = getattr(args, flag)
        if v is not None:
            cfg = replace(cfg, **{field: v})
    kw = {"config": cfg, "seed": seed}
    if args.snr is not None:
        kw["snr_db"] = tuple(parse_grid(args.snr))
    for flag, field in (("min_errors", "min_bit_errors"), ("max_frames", "max_frames"), ("workers", "workers"),
                        ("channel", "channel")):
        v = getattr(args, flag)
        if v is not None:
            kw[field] = v
    if args.no_noise:
        kw["add_noise"] = False
    return replace(spec, **kw)


def build_specs(args) -> tuple[list[ExperimentSpec], object]:
    """Experiment specs (one per detector variant) and the preset, if any."""
    seed = _seed(args)
    preset = get_preset(args.preset) if args.preset else None
    if preset is not None:
        if preset.kind != args.command:
            raise ConfigError(f"preset {preset.name} is a {preset.kind} run, not {args.command}")
        specs = list(preset.specs)
        system = {k: getattr(args, k) for k in ("nt", "nr", "L", "K", "modulation", "detector")}
        if any(v is not None for v in system.values()):
            raise ConfigError("a preset fixes the system and detector; drop --nt/--nr/--L/--K/--modulation/--detector")
        return [_override(s, args, seed) for s in specs], preset
    missing = [f"--{k}" for k in ("nt", "L", "K", "snr") if getattr(args, k) is None]
    if missing:
        raise ConfigError(f"missing {', '.join(missing)} (or use --preset)")
    detectors = (args.detector or ("fg" if args.command == "ber" else "mrf")).split(",")
    mod = Modulation.parse(args.modulation or "bpsk")
    specs = []
    for d in detectors:
        base = ExperimentSpec(args.nt, args.nr or args.nt, args.L, args.K, mod, d.strip(), DetectorConfig(),
                              tuple(parse_grid(args.snr)), seed=seed)
        specs.append(_override(base, args, seed))
    return specs, preset


def _iters(spec: ExperimentSpec):
    if spec.detector in ("mrf", "fg"):
        return spec.config.iters_for(spec.detector, spec.L)
    if spec.detector.startswith("rts"):
        return spec.config.rts_iterations
    return None


def record_row(spec: ExperimentSpec, rec: BerRecord, iters=None, timing=True) -> dict:
    bp = spec.detector in ("mrf", "fg")
    return {
        "snr_db": rec.snr_db,
        "detector": spec.detector,
        "n_t": spec.n_t,
        "n_r": spec.n_r,
        "L": spec.L,
        "K": spec.K,
        "modulation": str(spec.modulation),
        "alpha_m": spec.config.alpha_for(spec.detector) if bp else None,
        "alpha_b": spec.config.alpha_b if spec.detector == "mrf" else None,
        "iters": _iters(spec) if iters is None else iters,
        "bits": rec.bits,
        "bit_errors": rec.bit_errors,
        "ber": rec.ber,
        "frames": rec.frames,
        "frame_errors": rec.frame_errors,
        "seed": rec.seed,
        "elapsed_s": round(rec.elapsed_s, 6) if timing else 0.0,
    }


def format_rows(rows: list[dict], fmt: str, columns=COLUMNS) -> str:
    if fmt == "json":
        return json.dumps(rows, indent=1) + "\n"
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r[k] is None else (repr(r[k]) if isinstance(r[k], float) else r[k])) for k in columns})
    return buf.getvalue()


def run(args) -> tuple[str, list[dict]]:
    """Execute a parsed command; returns (text output, rows)."""
    if args.command == "selftest":
        from .selftest import run_selftest

        lines = []
        ok = run_selftest(_seed(args), lines.append)
        text = "\n".join(lines) + "\n"
        if not ok:
            raise RuntimeError("selftest failed:\n" + text)
        return text, []

    specs, preset = build_specs(args)
    timing = not args.no_timing
    rows = []
    if args.command == "ber":
        for s in specs:
            rows += [record_row(s, r, timing=timing) for r in run_ber_experiment(s)]
    elif args.command == "sweep-damping":
        grid = parse_grid(args.grid) if args.grid else (list(preset.alpha_grid) if preset else None)
        if not grid:
            raise ConfigError("sweep-damping needs --grid")
        for s in specs:
            for a, rec in sweep_damping(s, grid):
                rows.append(record_row(replace(s, config=replace(s.config, alpha_m=a)), rec, timing=timing))
    elif args.command == "trace":
        max_iters = args.max_iters or (preset.max_iters if preset else 10)
        for s in specs:
            rows += [record_row(s, rec, iters=t, timing=timing) for t, rec in convergence_trace(s, max_iters)]
    elif args.command == "calibrate-theta":
        frames = args.frames or (preset.frames if preset else 200)
        thetas = parse_grid(args.thetas) if args.thetas else (preset.extra.get("thetas") if preset else None)
        for s in specs:
            cal = calibrate_theta(s, frames, thetas)
            for k, r in enumerate(cal.rows):
                rows.append({"theta": r.theta, "bp_fraction": r.bp_fraction, "bits": r.bits,
                             "bit_errors": r.bit_errors, "ber": r.ber, "frames": r.frames,
                             "selected": int(k == len(cal.rows) - 1)})
        return format_rows(rows, args.format, THETA_COLUMNS), rows
    return format_rows(rows, args.format), rows


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.output:
            open(args.output, "a").close()
        text, _ = run(args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (ConfigError, ParameterError, UnsupportedAlphabetError, KeyError, OSError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2
    except FrameFailure as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        print(f"replay with --seed {exc.seed} (frame {exc.frame}, {exc.snr_db} dB)", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {exc!r} (seed {_safe_seed(argv)})", file=sys.stderr)
        return 3
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _safe_seed(argv):
    try:
        return _seed(parse_args(argv))
    except Exception:  # noqa: BLE001
        return os.environ.get(SEED_ENV, 0)
