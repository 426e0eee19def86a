"""``vanguard`` command line: one subcommand per characterization campaign.

The data file (CSV) goes to ``--out`` or stdout; a JSON summary goes to
``--summary`` or, when ``--out`` is given, to stdout.

Exit status: 0 success, 2 campaign error, 3 backend error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..errors import BackendUnavailable, PortUnavailable, Timeout, VanguardError
from . import campaigns
from .backends import open_backend
from .config import load_config

EXIT_OK = 0
EXIT_CAMPAIGN = 2
EXIT_BACKEND = 3

log = logging.getLogger("vanguard")


def _int(text: str) -> int:
    return int(text, 0)


def _channel(text: str) -> tuple[int, int]:
    dac, ch = text.split(":")
    return int(dac), int(ch)


def _channels(text: str) -> list[tuple[int, int]]:
    return [_channel(t) for t in text.split(",") if t]


def _codes(text: str) -> list[int]:
    return [int(t, 16) for t in text.split(",") if t]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--backend", choices=("sim", "serial"), default="sim")
    common.add_argument("--port", help="serial device for --backend serial")
    common.add_argument("--baud", type=int, help="override the configured baud rate")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", type=Path, help="key = value configuration file")
    common.add_argument("--out", type=Path, help="data file (default: stdout)")
    common.add_argument("--summary", type=Path, help="JSON summary file")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="vanguard", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", parents=[common], help="output voltage vs. code on sampled channels")
    p.add_argument("--channels", type=_channels, help="dac:ch list, default one per bank per DAC")
    p.add_argument("--codes", type=_codes, default=list(campaigns.DEFAULT_SWEEP_CODES),
                   help="hex code list")
    p.add_argument("--window", type=int, help="samples per record")

    p = sub.add_parser("staircase", parents=[common], help="consecutive-code increments and offset")
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--dacs", default="0,1")
    p.add_argument("--code-lo", type=lambda t: int(t, 16), default=0x7FFF)
    p.add_argument("--code-hi", type=lambda t: int(t, 16), default=0x8005)
    p.add_argument("--window", type=int)

    p = sub.add_parser("psd", parents=[common], help="output noise spectrum")
    p.add_argument("--channel", type=_channel, default=(0, 0))
    p.add_argument("--rbw", type=float, default=10.0)
    p.add_argument("--fs", type=float, default=20_000.0, help="probe sample rate, Hz")
    p.add_argument("--segments", type=int, default=4096)
    p.add_argument("--code", type=lambda t: int(t, 16))
    p.add_argument("--band-lo", type=float, default=2.0)
    p.add_argument("--band-hi", type=float)
    p.add_argument("--ground", action="store_true", help="measure the ground reference")

    p = sub.add_parser("transient", parents=[common], help="full-range step and slew rate")
    p.add_argument("--channel", type=_channel, default=(0, 0))
    p.add_argument("--code-from", type=lambda t: int(t, 16), default=0x0000)
    p.add_argument("--code-to", type=lambda t: int(t, 16), default=0xFFFF)
    p.add_argument("--dt", type=float, default=1e-8)
    p.add_argument("--duration", type=float, default=30e-6)
    p.add_argument("--monitor", type=_channel, help="adjacent channel held at +1 V")

    p = sub.add_parser("noise-budget", parents=[common], help="Johnson noise table")
    p.add_argument("--resistance", type=float, action="append", help="ohms; repeatable")
    p.add_argument("--temperature", type=float, default=300.0)
    p.add_argument("--bandwidth", type=float, default=1000.0)

    p = sub.add_parser("throughput", parents=[common], help="update-rate table vs. filter")
    p.add_argument("--link", action="append", help="SCLK[:individual|streaming[:K]][:gapN]")
    p.add_argument("--filter-hz", type=float)
    return parser


def _emit(args, data: str, summary: dict) -> None:
    if args.out is not None:
        args.out.write_text(data)
    else:
        sys.stdout.write(data)
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    if args.summary is not None:
        args.summary.write_text(text)
    elif args.out is not None:
        sys.stdout.write(text)


def _run(args) -> None:
    config = load_config(args.config)
    if args.baud:
        config.baud = args.baud

    if args.command == "noise-budget":
        rows = campaigns.run_noise_budget(args.resistance or [1.0], args.temperature, args.bandwidth)
        _emit(args, campaigns.noise_csv(rows),
              {"schema": "vanguard.noise-budget.v1", "rows": len(rows)})
        return
    if args.command == "throughput":
        cases = [campaigns.LinkCase.parse(t) for t in (args.link or campaigns.DEFAULT_LINK_CASES)]
        cutoff = args.filter_hz or config.analog[0].rc_cutoff_hz
        rows = campaigns.run_throughput(cases, cutoff)
        _emit(args, campaigns.throughput_csv(rows), {
            "schema": "vanguard.throughput.v1",
            "filter_cutoff_hz": cutoff,
            "bottlenecks": sorted({r.bottleneck for r in rows}),
        })
        return

    backend = open_backend(args.backend, config, port=args.port, seed=args.seed)
    try:
        if args.command == "sweep":
            records = campaigns.run_sweep(backend, args.channels, args.codes, args.window)
            summary = campaigns.sweep_summary(records)
            data = campaigns.records_csv(records)
        elif args.command == "staircase":
            dacs = [int(d) for d in args.dacs.split(",")]
            result = campaigns.run_staircase(backend, args.channel, args.code_lo, args.code_hi,
                                             dacs, args.window)
            summary, data = result.summary(), result.to_csv()
        elif args.command == "psd":
            spec = campaigns.run_psd(backend, *args.channel, rbw=args.rbw, fs=args.fs,
                                     segments=args.segments, code=args.code,
                                     band=(args.band_lo, args.band_hi), ground=args.ground)
            summary = campaigns.psd_summary(spec, args.rbw)
            data = spec.to_csv() if spec is not None else "f_hz,psd_v2hz\n"
        elif args.command == "transient":
            result = campaigns.run_transient(backend, *args.channel, code_from=args.code_from,
                                             code_to=args.code_to, dt=args.dt,
                                             duration=args.duration, monitor=args.monitor)
            summary = result.summary()
            data = result.waveform.to_csv() if result.waveform is not None else "t_s,volts\n"
        else:  # pragma: no cover - argparse restricts choices
            raise ValueError(args.command)
        summary["backend"] = args.backend
        summary["seed"] = args.seed
        if not backend.measures:
            summary["stimulus"] = backend.stimulus
        _emit(args, data, summary)
    finally:
        backend.close()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _run(args)
    except (BackendUnavailable, PortUnavailable, Timeout) as exc:
        log.error("backend error: %s", exc)
        return EXIT_BACKEND
    except (VanguardError, ValueError) as exc:
        log.error("campaign error: %s", exc)
        return EXIT_CAMPAIGN
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
