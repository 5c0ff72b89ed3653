"""``irs-bench``: run the latency, scalability and fault experiments from the shell.

Exit codes: 0 success, 2 configuration error, 3 safety violation.
"""

from __future__ import annotations

import argparse
import os
import random
import sys
from pathlib import Path

from .. import crypto
from ..consensus import DivergenceError, FaultMode, FaultProfile
from ..core import ConfigError, Protocol
from ..netsim.links import PRESET_NAMES
from .csvio import summary_text, write_csv
from .experiments import SWEEP_DELAYS_US, ExperimentConfig, run_fault_scenario, run_latency_experiment, run_scalability_experiment

OUT_ENV = "IRS_BENCH_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_SAFETY = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="file of key=value lines mirroring these flags (flags win)")
    p.add_argument("--protocol", default=None, help="hotstuff, hybrid or both (default both)")
    p.add_argument("--preset", default=None, help=f"link preset: {', '.join(PRESET_NAMES)}")
    p.add_argument("--payload", type=int, default=None, help="payload bytes per transaction")
    p.add_argument("--batch", type=int, default=None, help="transactions per block")
    p.add_argument("--clients", type=int, default=None)
    p.add_argument("--delay-us", type=float, default=None, dest="delay_us")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--views", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--clock", choices=["virtual", "wall"], default=None)
    p.add_argument("--costs", choices=["reference", "calibrated", "zero"], default=None, help="crypto cost model for the virtual clock")
    p.add_argument("--out", default=None, help=f"output directory (or ${OUT_ENV})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="irs-bench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    lat = sub.add_parser("latency", help="minimal-load latency (one tx per block)")
    _common(lat)
    sc = sub.add_parser("scalability", help="throughput-latency curve over a delay sweep")
    _common(sc)
    sc.add_argument("--requests", type=int, default=None, help="requests per client per delay point")
    sc.add_argument("--window", type=int, default=None, help="max outstanding requests per client")
    fl = sub.add_parser("faults", help="safety scenarios with one faulty replica")
    _common(fl)
    fl.add_argument("--profile", default="all", help="correct, crash, silent, equivocate, delay[:ms] or all")
    fl.add_argument("--faulty", type=int, default=None, help="faulty replica id (default: random per run)")
    fl.add_argument("--activation", type=int, default=None, help="view the fault activates (default: random)")
    fl.add_argument("--runs", type=int, default=None, help="seeded runs per protocol and profile")
    cal = sub.add_parser("calibrate", help="measure sign/verify/hash cost on this host")
    cal.add_argument("--samples", type=int, default=1000)
    return parser


_CONFIG_KEYS = {
    "protocol": str, "preset": str, "payload": int, "batch": int, "clients": int, "delay_us": float,
    "reps": int, "views": int, "seed": int, "clock": str, "costs": str, "out": str,
    "requests": int, "window": int, "profile": str, "faulty": int, "activation": int, "runs": int,
}


def _apply_config_file(args: argparse.Namespace) -> None:
    if not getattr(args, "config", None):
        return
    with open(args.config) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (s.strip() for s in line.partition("="))
            key = key.replace("-", "_")
            if not sep or key not in _CONFIG_KEYS:
                raise ConfigError(f"{args.config}:{lineno}: unknown or malformed entry {raw.strip()!r}")
            if getattr(args, key, None) is None:
                try:
                    setattr(args, key, _CONFIG_KEYS[key](value))
                except ValueError:
                    raise ConfigError(f"{args.config}:{lineno}: bad value for {key}") from None


def _protocols(value: str | None) -> list[Protocol]:
    if value in (None, "both"):
        return [Protocol.HOTSTUFF, Protocol.HYBRID]
    return [Protocol.parse(value)]


def _costs(name: str | None) -> crypto.CryptoCosts:
    if name in (None, "reference"):
        return crypto.REFERENCE_COSTS
    if name == "zero":
        return crypto.ZERO_COSTS
    return crypto.calibrate()


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "bench-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _or(value, default):
    return default if value is None else value


def _experiment(args, protocol: Protocol, **defaults) -> ExperimentConfig:
    return ExperimentConfig(
        protocol=protocol,
        preset=_or(args.preset, "10BASE-T1"),
        payload_bytes=_or(args.payload, defaults.get("payload", 8)),
        batch_size=_or(args.batch, defaults.get("batch", 1)),
        n_clients=_or(args.clients, defaults.get("clients", 1)),
        inter_request_delay_us=_or(args.delay_us, 0.0),
        repetitions=_or(args.reps, 10),
        views_per_repetition=_or(args.views, 30),
        seed=_or(args.seed, 0),
        clock_mode=_or(args.clock, "virtual"),
        requests_per_client=_or(getattr(args, "requests", None), 2000),
        window=_or(getattr(args, "window", None), 200),
        costs=_costs(args.costs),
    )


def cmd_latency(args) -> int:
    out = _out_dir(args)
    for protocol in _protocols(args.protocol):
        cfg = _experiment(args, protocol)
        summary = run_latency_experiment(cfg)
        path = write_csv(summary.samples, out / f"latency_{protocol.value}_{cfg.preset}_{cfg.payload_bytes}B.csv")
        print(f"{summary_text(summary)} -> {path}")
    return EXIT_OK


def cmd_scalability(args) -> int:
    out = _out_dir(args)
    for protocol in _protocols(args.protocol):
        cfg = _experiment(args, protocol, payload=0, batch=400, clients=2)
        delays = (args.delay_us,) if args.delay_us is not None else SWEEP_DELAYS_US
        curve = run_scalability_experiment(cfg, delays)
        path = write_csv(curve, out / f"scalability_{protocol.value}_{cfg.preset}.csv")
        for offered, s in curve:
            print(
                f"{protocol.value} {cfg.preset} delay={s.delay_us:g}us offered={offered:.0f}/s "
                f"throughput={s.throughput_kops_s:.3f} Kops/s mean={s.mean_latency_ms:.2f} ms p95={s.p95_latency_ms:.2f} ms"
            )
        print(f"-> {path}")
    return EXIT_OK


def cmd_faults(args) -> int:
    names = ["crash", "silent", "equivocate", "delay"] if args.profile == "all" else [args.profile]
    runs = _or(args.runs, 1)
    views = _or(args.views, 30)
    seed0 = _or(args.seed, 0)
    for protocol in _protocols(args.protocol):
        for name in names:
            try:
                base = FaultProfile.parse(name)
            except ValueError:
                raise ConfigError(f"unknown fault profile {name!r}; expected one of {[m.value for m in FaultMode]}") from None
            for run in range(runs):
                rng = random.Random(f"{seed0}:{run}:{name}:{protocol.value}")
                n = 4 if protocol is Protocol.HOTSTUFF else 3
                faulty = args.faulty if args.faulty is not None else rng.randrange(n)
                activation = args.activation if args.activation is not None else rng.randrange(1, views)
                profile = FaultProfile(base.mode, activation, base.delay)
                report = run_fault_scenario(
                    protocol, profile, faulty_replica=faulty, views=views, seed=seed0 + run,
                    preset=_or(args.preset, "100BASE-T1"), costs=_costs(args.costs),
                )
                print(
                    f"{report.protocol} {report.profile} replica={report.faulty_replica} from view {report.activation_view} "
                    f"seed={report.seed}: views={report.views_reached} height={report.committed_height} "
                    f"accepted={report.accepted} safe={report.safe}"
                )
    return EXIT_OK


def cmd_calibrate(args) -> int:
    costs = crypto.calibrate(samples=args.samples, refresh=True)
    print(f"sign_cost={costs.sign * 1e6:.2f} us verify_cost={costs.verify * 1e6:.2f} us hash_cost_per_kb={costs.hash_per_kb * 1e6:.3f} us")
    return EXIT_OK


COMMANDS = {"latency": cmd_latency, "scalability": cmd_scalability, "faults": cmd_faults, "calibrate": cmd_calibrate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config_file(args)
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"irs-bench: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"irs-bench: SAFETY VIOLATION: {exc}", file=sys.stderr)
        return EXIT_SAFETY
    except OSError as exc:
        print(f"irs-bench: I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
