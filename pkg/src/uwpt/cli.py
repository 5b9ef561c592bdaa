"""Command-line interface.

Subcommands::

    uwpt validate SCENARIO [--seed N]
    uwpt run SCENARIO --out DIR [--seed N] [--strict]
    uwpt link-calc TECH key=value ...
    uwpt sweep TECH key=value ... --variable NAME --start A --stop B --steps N [--log|--linear]
    uwpt ledger-verify LEDGER

Exit codes: 0 success, 1 domain or verification failure, 2 I/O or schema failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from uwpt import linkmodels as lm
from uwpt.engine import CouplingMap
from uwpt.errors import SchemaError, SimulationFault, UwptError
from uwpt.ledger import parse_ledger, verify_ledger
from uwpt.output import write_run
from uwpt.scenario import ScenarioError, load_scenario

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_SCHEMA = 2

log = logging.getLogger("uwpt")

_GEOMETRY_KEYS = {"distance", "incidence", "irradiance", "los"}
_CHAIN_KEYS = {"eta_tr", "eta_rc"}
_COUPLING_KEYS = {"d_ref", "k_ref", "exponent", "cutoff"}
_DEG_KEYS = {"half_angle_deg", "fov_width_deg", "incidence_deg", "irradiance_deg"}


class LinkSpec:
    """Technology parameters, geometry and efficiency chain parsed from key=value pairs."""

    def __init__(self, tech: str, pairs):
        if tech not in lm.TECHNOLOGIES:
            raise SchemaError(f"unknown technology {tech!r}; choose from {', '.join(lm.TECHNOLOGIES)}")
        self.tech = tech
        values = {}
        for item in pairs:
            key, sep, raw = item.partition("=")
            if not sep or not key:
                raise SchemaError(f"expected key=value, got {item!r}")
            if key == "topology":
                values[key] = raw
                continue
            try:
                values[key] = float(raw)
            except ValueError:
                raise SchemaError(f"{key}: {raw!r} is not a number") from None
        for key in list(values):
            if key in _DEG_KEYS:
                values[key[: -len("_deg")]] = math.radians(values.pop(key))
        self.values = values

    def _take(self, keys):
        return {k: self.values[k] for k in keys if k in self.values}

    def geometry(self, distance=None) -> lm.LinkGeometry:
        g = self._take(_GEOMETRY_KEYS)
        return lm.LinkGeometry(
            distance=g.get("distance", 1.0) if distance is None else distance,
            incidence_angle=g.get("incidence", 0.0),
            irradiance_angle=g.get("irradiance", 0.0),
            los_clear=bool(g.get("los", 1.0)),
        )

    def params(self, distance=None, override=None):
        values = dict(self.values)
        if override:
            values.update(override)
        tech_values = {
            k: v for k, v in values.items() if k not in _GEOMETRY_KEYS | _CHAIN_KEYS | _COUPLING_KEYS
        }
        cmap = None
        if any(k in values for k in _COUPLING_KEYS):
            if self.tech not in lm.NEAR_FIELD_TECHNOLOGIES:
                raise SchemaError("coupling-map keys apply only to iwpt and cwpt")
            cmap = CouplingMap(
                values.get("d_ref", 1.0),
                values.get("k_ref", 1.0),
                values.get("exponent", 3.0),
                values.get("cutoff", math.inf),
            )
        try:
            if self.tech == "iwpt" and "k" in tech_values:
                params = lm.IwptParams.from_factors(**tech_values)
            else:
                params = lm.params_type(self.tech)(**tech_values)
        except TypeError as exc:
            raise SchemaError(f"{self.tech} parameters: {exc}") from None
        if cmap is not None:
            d = values.get("distance", 1.0) if distance is None else distance
            params = params.with_coupling(cmap.k(d))
        return params

    def chain(self, eta_env) -> lm.EfficiencyChain:
        return lm.EfficiencyChain(
            self.values.get("eta_tr", 0.9), eta_env, self.values.get("eta_rc", 0.9)
        )


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def cmd_link_calc(args) -> int:
    spec = LinkSpec(args.technology, args.params)
    params = spec.params()
    geom = spec.geometry()
    ev = lm.evaluate_link(params, geom)
    if ev.clamped:
        what = "far-field assumption violated" if spec.tech == "rf" else "gain exceeds unity"
        print(f"warning: {what}; raw value {_fmt(ev.raw)} clamped to 1", file=sys.stderr)
    print(f"eta_env {_fmt(ev.eta_env)}")
    print(f"eta_wpt {_fmt(lm.end_to_end_efficiency(spec.chain(ev.eta_env)))}")
    if spec.tech == "laser":
        print(f"received_flux {_fmt(lm.laser_received_flux(params, geom))}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.steps < 2:
        raise lm.DomainError("steps must be at least 2")
    if args.log:
        if args.start <= 0 or args.stop <= 0:
            raise lm.DomainError("log spacing needs a strictly positive range")
        grid = np.geomspace(args.start, args.stop, args.steps)
    else:
        grid = np.linspace(args.start, args.stop, args.steps)
    spec = LinkSpec(args.technology, args.params)
    lines = ["variable,eta_env"]
    for x in grid:
        x = float(x)
        if args.variable == "distance":
            params, geom = spec.params(distance=x), spec.geometry(distance=x)
        elif args.variable in ("incidence", "irradiance"):
            spec.values[args.variable] = x
            params, geom = spec.params(), spec.geometry()
        else:
            params, geom = spec.params(override={args.variable: x}), spec.geometry()
        lines.append(f"{x!r},{lm.link_env_efficiency(params, geom)!r}")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def _report(exc: ScenarioError) -> int:
    for v in exc.violations:
        print(str(v))
    return EXIT_SCHEMA if exc.schema else EXIT_DOMAIN


def cmd_validate(args) -> int:
    try:
        sc = load_scenario(Path(args.scenario), seed=args.seed)
    except ScenarioError as exc:
        return _report(exc)
    print(f"valid: {sc.name} ({len(sc.agents)} agents, {len(sc.orders)} orders, {sc.n_ticks} ticks)")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        sc = load_scenario(Path(args.scenario), seed=args.seed)
    except ScenarioError as exc:
        return _report(exc)
    sim = sc.build(strict=args.strict)
    code = EXIT_OK
    try:
        sim.run(sc.n_ticks)
    except SimulationFault as exc:
        print(f"fault: {exc}", file=sys.stderr)
        code = EXIT_DOMAIN
    try:
        summary = write_run(sim, sc, args.out)
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    t = summary["totals"]
    print(
        f"{sc.name}: {sim.tick} ticks, delivered {_fmt(t['delivered_wh'])} Wh, "
        f"losses {_fmt(t['losses_wh'])} Wh, faults {t['fault_count']}"
    )
    return code


def cmd_ledger_verify(args) -> int:
    try:
        text = Path(args.ledger).read_text(encoding="utf-8")
        records = parse_ledger(text)
    except (OSError, UnicodeDecodeError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    if verify_ledger(records):
        print(f"ok: {len(records)} records")
        return EXIT_OK
    print("ledger verification failed")
    return EXIT_DOMAIN


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uwpt", description="Universal wireless power transfer simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("scenario")
    v.add_argument("--seed", type=int, default=None)
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="simulate a scenario and write metrics, ledger and summary")
    r.add_argument("scenario")
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--strict", action="store_true", help="abort at the first invariant fault")
    r.set_defaults(func=cmd_run)

    lc = sub.add_parser("link-calc", help="evaluate one link")
    lc.add_argument("technology", choices=lm.TECHNOLOGIES)
    lc.add_argument("params", nargs="*", metavar="key=value")
    lc.set_defaults(func=cmd_link_calc)

    sw = sub.add_parser("sweep", help="tabulate eta_env over one variable")
    sw.add_argument("technology", choices=lm.TECHNOLOGIES)
    sw.add_argument("params", nargs="*", metavar="key=value")
    sw.add_argument("--variable", required=True)
    sw.add_argument("--start", type=float, required=True)
    sw.add_argument("--stop", type=float, required=True)
    sw.add_argument("--steps", type=int, required=True)
    spacing = sw.add_mutually_exclusive_group()
    spacing.add_argument("--log", action="store_true")
    spacing.add_argument("--linear", action="store_true")
    sw.set_defaults(func=cmd_sweep)

    lv = sub.add_parser("ledger-verify", help="check a ledger.jsonl hash chain")
    lv.add_argument("ledger")
    lv.set_defaults(func=cmd_ledger_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except UwptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
