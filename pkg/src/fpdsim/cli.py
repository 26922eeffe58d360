"""Command-line interface.

Precedence for every setting: command-line flag, then (for the seed) the
FPDSIM_SEED environment variable, then the config file, then built-in defaults.
Errors are reported on stderr as a single ``fpdsim: error[<kind>]: <message>``
line, with exit codes 1 usage, 2 config, 3 solver, 4 I/O.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import fileio
from .circuit import solve_pixel_chain
from .devices import photocurrent
from .errors import ConfigError, DomainError, FpdSimError, OutputError
from .panel import (
    BinPattern,
    PanelConfig,
    Scene,
    binned_read,
    build_panel,
    derive_seed,
    pixel_currents,
    resolution_reduce,
    scan_frame,
)
from .validation import REFERENCE_LUX, Stimulus, led_test, pulsed_response

EXIT_OK, EXIT_USAGE = 0, 1


class UsageError(FpdSimError):
    kind = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _pair(text: str, sep: str) -> tuple[int, int]:
    try:
        a, b = (int(x) for x in text.lower().split(sep))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two integers as A{sep}B, got {text!r}") from None
    return a, b


def _block(text):
    return _pair(text, "x")


def _pixel(text):
    return _pair(text, ",")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="sectioned key=value config file")
    common.add_argument("--scene", type=Path, help="scene as CSV (lux) or PGM")
    common.add_argument("--seed", type=int, help="mismatch master seed (default: $FPDSIM_SEED or config)")
    common.add_argument("--out", type=Path, help="output file (stdout when omitted)")
    common.add_argument("--lux", type=float, default=REFERENCE_LUX,
                        help="uniform illuminance used when no --scene is given")
    common.add_argument("--lux-max", type=float, default=1.0, help="lux of PGM full-scale gray")

    p = _Parser(prog="fpdsim", description="Current-mirror flat-panel readout simulator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    dc = sub.add_parser("dc", parents=[common], help="operating point of one pixel chain")
    dc.add_argument("--current", type=float, help="photodiode current [A] (overrides --lux)")
    dc.add_argument("--pixel", type=_pixel, default=(0, 0), help="pixel R,C whose chain is solved")

    sub.add_parser("frame", parents=[common], help="progressive scan of one frame")

    b = sub.add_parser("bin", parents=[common], help="binned readout by node summation")
    b.add_argument("--block", type=_block, default=(2, 2), help="block size RxC")
    b.add_argument("--mode", choices=("sum", "avg"), default="sum")

    led = sub.add_parser("led", parents=[common], help="comparator / AND-gate LED matrix")
    led.add_argument("--vref", type=float, required=True, help="comparator reference [V]")

    tr = sub.add_parser("transient", parents=[common], help="pulsed-LED response of one pixel")
    tr.add_argument("--amplitude", type=float, default=REFERENCE_LUX, help="pulse height [lux]")
    tr.add_argument("--baseline", type=float, default=0.0, help="illuminance between pulses [lux]")
    tr.add_argument("--period", type=float, default=1e-3)
    tr.add_argument("--duty", type=float, default=0.5)
    tr.add_argument("--dt", type=float, help="time step (default tau/50 at the pulse level)")
    tr.add_argument("--tend", type=float, help="end time (default 10 periods)")
    tr.add_argument("--pixel", type=_pixel, default=(0, 0))

    sw = sub.add_parser("sweep", parents=[common], help="Monte Carlo mismatch trials")
    sw.add_argument("--trials", type=int, default=100)
    sw.add_argument("--sigma", type=float, help="override sigma_rel of every device (default 0.01 "
                                                "when the config leaves mismatch off)")
    return p


def load_config(args) -> PanelConfig:
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise OutputError(f"cannot read config {args.config}: {exc.strerror or exc}") from exc
        cfg = config_mod.parse_config(text)
    else:
        cfg = PanelConfig()
    seed = args.seed
    if seed is None and os.environ.get("FPDSIM_SEED"):
        try:
            seed = int(os.environ["FPDSIM_SEED"])
        except ValueError:
            raise ConfigError("FPDSIM_SEED must be an integer", key="FPDSIM_SEED") from None
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    return cfg


def load_scene(args, cfg: PanelConfig) -> Scene:
    if args.scene is not None:
        return fileio.load_scene(args.scene, args.lux_max, (cfg.rows, cfg.cols))
    return Scene.uniform(cfg.rows, cfg.cols, args.lux)


def _emit(args, text: str) -> None:
    if args.out is None:
        sys.stdout.write(text)
    else:
        fileio.atomic_write(args.out, text)


def _is_csv(args) -> bool:
    return args.out is not None and args.out.suffix.lower() == ".csv"


def cmd_dc(args, cfg):
    panel = build_panel(cfg)
    r, c = args.pixel
    if not (0 <= r < cfg.rows and 0 <= c < cfg.cols):
        raise DomainError(f"pixel {r},{c} outside {cfg.rows}x{cfg.cols} panel")
    chain = panel.chain(r, c)
    ip = args.current if args.current is not None else photocurrent(cfg.photodiode, args.lux)
    s = solve_pixel_chain(chain, ip, cfg.solver)
    vals = (ip, s.i_line, s.i_row, s.v_line, s.v_row)
    _emit(args, "i_photo,i_line,i_row,v_line,v_row\n" + ",".join(fileio._fmt(v) for v in vals) + "\n")


def cmd_frame(args, cfg):
    panel = build_panel(cfg)
    frame, _ = scan_frame(panel, load_scene(args, cfg))
    _emit(args, fileio.frame_csv(frame) if _is_csv(args) else fileio.frame_pgm(frame))


def cmd_bin(args, cfg):
    panel = build_panel(cfg)
    pattern = BinPattern.blocks(cfg.rows, cfg.cols, *args.block)
    read = binned_read if args.mode == "sum" else resolution_reduce
    frame = read(panel, load_scene(args, cfg), pattern)
    _emit(args, fileio.frame_csv(frame) if _is_csv(args) else fileio.frame_pgm(frame))


def cmd_led(args, cfg):
    panel = build_panel(cfg)
    _emit(args, fileio.led_csv(led_test(panel, load_scene(args, cfg), args.vref)))


def cmd_transient(args, cfg):
    panel = build_panel(cfg)
    r, c = args.pixel
    if not (0 <= r < cfg.rows and 0 <= c < cfg.cols):
        raise DomainError(f"pixel {r},{c} outside {cfg.rows}x{cfg.cols} panel")
    stim = Stimulus("pulse", args.amplitude, args.period, args.duty, args.baseline)
    trace = pulsed_response(panel.chain(r, c), stim, args.dt, args.tend, cfg.solver)
    _emit(args, fileio.trace_csv(trace))


def _with_sigma(cfg: PanelConfig, sigma: float) -> PanelConfig:
    text = config_mod.print_config(cfg)
    values = config_mod.parse_values(text)
    values["nmos"]["sigma_rel"] = sigma
    values["pmos"]["sigma_rel"] = sigma
    return config_mod.config_from_values(values)


def cmd_sweep(args, cfg):
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    sigma = args.sigma
    if sigma is None:
        current = cfg.chain.line_mirror.reference.sigma_rel
        sigma = current if current > 0 else 0.01
    cfg = _with_sigma(cfg, sigma)
    scene = load_scene(args, cfg)
    lines = ["trial,seed,mean_i_line,std_i_line,min_i_line,max_i_line,rel_spread"]
    # Trials run in index order; each has its own derived seed.
    for k in range(args.trials):
        seed = derive_seed(cfg.seed, k)
        currents = pixel_currents(build_panel(replace(cfg, seed=seed)), scene)
        mean = float(np.mean(currents))
        lo, hi = float(currents.min()), float(currents.max())
        spread = (hi - lo) / mean if mean > 0 else 0.0
        vals = (mean, float(np.std(currents)), lo, hi, spread)
        lines.append(f"{k},{seed}," + ",".join(fileio._fmt(v) for v in vals))
    _emit(args, "\n".join(lines) + "\n")


COMMANDS = {
    "dc": cmd_dc,
    "frame": cmd_frame,
    "bin": cmd_bin,
    "led": cmd_led,
    "transient": cmd_transient,
    "sweep": cmd_sweep,
}


def cli_dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args)
        COMMANDS[args.command](args, cfg)
    except FpdSimError as exc:
        print(f"fpdsim: error[{exc.kind}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    return EXIT_OK


def main():
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
