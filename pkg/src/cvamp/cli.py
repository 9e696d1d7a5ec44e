"""Command-line entry point: ``cvamp {scenario,sweep,table,converge}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure or an
unconverged result, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

from cvamp import __version__
from cvamp.channels import CHANNEL_PRESETS, channel_preset
from cvamp.errors import ConfigError, NumericalError
from cvamp.scenario import (
    ScenarioConfig,
    SweepSpec,
    emit,
    figure_sweep,
    run_many,
    run_scenario,
    run_sweep,
    table_configs,
)
from cvamp.states import NT_CONVENTIONS

log = logging.getLogger("cvamp")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _load_json(path):
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _common(p):
    p.add_argument("--config", help="JSON file with the run configuration")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--cutoff", type=int, help="fixed Fock cutoff per mode (default: 20, escalating if needed)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--channel", choices=sorted(CHANNEL_PRESETS))
    p.add_argument("--nt-convention", choices=NT_CONVENTIONS, default="excess",
                   help="meaning of the channel noise N_T (default: excess)")
    p.add_argument("--noise-model", choices=("gaussian", "ancilla"))
    p.add_argument("--delta-prime", type=float, help="ancilla noise strength (default: same as delta)")
    p.add_argument("--no-convergence", action="store_true", help="skip the refined recomputation")
    p.add_argument("--timestamp", help="timestamp string recorded in JSON metadata")


def _scenario_args(p):
    p.add_argument("--R", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--m-add", type=int)
    p.add_argument("--n-sub", type=int)
    p.add_argument("--kind-a", choices=("hom", "het", "homodyne", "heterodyne"))
    p.add_argument("--kind-b", choices=("hom", "het", "homodyne", "heterodyne"))
    p.add_argument("--reconciliation", choices=("direct", "reverse", "both", "none"))
    p.add_argument("--placement", choices=("after", "before"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvamp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scenario", help="run a single scenario")
    _common(p)
    _scenario_args(p)

    p = sub.add_parser("converge", help="run a scenario and fail unless it is converged")
    _common(p)
    _scenario_args(p)

    p = sub.add_parser("sweep", help="(R, delta) surfaces; defaults to the three-amplifier figure set")
    _common(p)
    p.add_argument("--steps", type=int, default=13, help="points per axis for the default sweep")
    p.add_argument("--kind-a", choices=("hom", "het", "homodyne", "heterodyne"), default="homodyne")
    p.add_argument("--kind-b", choices=("hom", "het", "homodyne", "heterodyne"), default="homodyne")

    p = sub.add_parser("table", help="amplifier comparison over the four channel presets")
    _common(p)
    p.add_argument("--R", type=float, default=0.3)
    return parser


def _overrides(args) -> dict:
    out = {}
    if args.cutoff is not None:
        out["cutoff"] = args.cutoff
    if args.noise_model is not None:
        out["noise_model"] = args.noise_model
    if args.delta_prime is not None:
        out["delta_prime"] = args.delta_prime
    if args.no_convergence:
        out["check_convergence"] = False
    return out


def _scenario_config(args) -> ScenarioConfig:
    data = _load_json(args.config) if args.config else {}
    cfg = ScenarioConfig.from_dict({**data, "n_t_convention": data.get("n_t_convention", args.nt_convention)})
    kw = _overrides(args)
    for name in ("R", "kind_a", "kind_b", "reconciliation", "placement"):
        if getattr(args, name) is not None:
            kw[name] = getattr(args, name)
    if args.channel:
        kw["channel"] = channel_preset(args.channel, args.nt_convention)
    amp = {k: getattr(args, k) for k in ("delta", "m_add", "n_sub") if getattr(args, k) is not None}
    if amp:
        kw["amplifier"] = dataclasses.replace(cfg.amplifier, **amp)
    try:
        return dataclasses.replace(cfg, **kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _sweep_spec(args) -> SweepSpec:
    kw = _overrides(args)
    if args.channel:
        kw["channel"] = channel_preset(args.channel, args.nt_convention)
    if args.config:
        spec = SweepSpec.from_dict(_load_json(args.config))
        return dataclasses.replace(spec, base=dataclasses.replace(spec.base, **kw))
    return figure_sweep(args.kind_a, args.kind_b, steps=args.steps, **kw)


def _run(args) -> int:
    if args.command in ("scenario", "converge"):
        cfg = _scenario_config(args)
        if args.command == "converge":
            cfg = dataclasses.replace(cfg, check_convergence=True)
        reports = [run_scenario(cfg)]
    elif args.command == "sweep":
        reports = run_sweep(_sweep_spec(args), args.workers)
    else:
        kw = _overrides(args)
        if args.config:
            kw = {**_load_json(args.config), **kw}
        channels = (args.channel,) if args.channel else None
        reports = run_many(table_configs(args.R, channels, args.nt_convention, **kw), args.workers)

    text = emit(reports, args.format, args.out, args.timestamp)
    if args.out is None:
        sys.stdout.write(text)
    if args.command == "converge":
        for k, v in reports[0].convergence.get("deltas", {}).items():
            print(f"{k}: {v:.3g}", file=sys.stderr)
    bad = [r for r in reports if r.converged in ("unconverged", "error")]
    if bad:
        log.error("%d of %d runs unconverged or failed", len(bad), len(reports))
        return EXIT_NUMERIC
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
