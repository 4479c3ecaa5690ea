"""Command-line front end.

    twophase <subcommand> <scenario-file> [--out DIR] [--vary KEY a:b:step]
             [--n N] [--dt DT]

Subcommands: ``simulate`` (evolve + CSV export), ``spectrum``
(eigensolve + closed forms + probe), ``criteria`` (hypothesis verdict),
``report`` (full pipeline), ``sweep`` (repeat the spectrum stage over a
range of one scalar key, emitting a CSV).  Flags override file values.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
``TWOPHASE_THREADS`` caps sweep parallelism.
"""

from __future__ import annotations

import argparse
import copy
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from .errors import ConfigurationError, NumericalError, TwophaseError
from .report import compute_spectrum, write_sweep_csv
from .report import run as run_pipeline
from .scenario import parse_scenario, scenario_from_dict

_STAGES = {
    "simulate": ("simulate",),
    "spectrum": ("criteria", "spectrum"),
    "criteria": ("criteria",),
    "report": ("criteria", "spectrum", "simulate"),
}


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twophase", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "spectrum", "criteria", "report", "sweep"):
        sp = sub.add_parser(name)
        sp.add_argument("scenario", help="scenario file (JSON)")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--n", type=int, default=None,
                        help="override the cell count")
        sp.add_argument("--dt", type=float, default=None,
                        help="override the time step")
        if name == "sweep":
            sp.add_argument("--vary", nargs=2, required=True,
                            metavar=("KEY", "RANGE"),
                            help="dot-path key and a:b:step range")
    return p


def _apply_overrides(doc: dict, args) -> dict:
    doc = copy.deepcopy(doc)
    if args.n is not None:
        doc.setdefault("domain", {})["n"] = args.n
    if args.dt is not None:
        doc.setdefault("run", {})["dt"] = args.dt
    return doc


def _set_path(doc: dict, key: str, value: float):
    parts = key.split(".")
    node = doc
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            node[part] = node.get(part, {}) if isinstance(node.get(part), dict) else {}
        node = node[part]
    node[parts[-1]] = value


def _parse_range(text: str) -> list:
    try:
        a, b, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise ConfigurationError(f"range must be a:b:step, got {text!r}")
    if step <= 0 or b < a:
        raise ConfigurationError(f"range must be increasing, got {text!r}")
    vals = []
    k = 0
    while True:
        v = a + k * step
        if v > b + 1e-9 * step:
            break
        vals.append(v)
        k += 1
    return vals


def _sweep_point(doc: dict, key: str, value: float):
    local = copy.deepcopy(doc)
    _set_path(local, key, value)
    scn = scenario_from_dict(local)
    sp = compute_spectrum(scn)
    return (value, sp.s_A, sp.lambda_star, sp.eps_bar, sp.gap)


def _cmd_sweep(args) -> int:
    scn = parse_scenario(args.scenario)     # validates the base file
    doc = _apply_overrides(scn.raw, args)
    key, rng = args.vary
    values = _parse_range(rng)
    workers = int(os.environ.get("TWOPHASE_THREADS", "0")) or min(
        len(values), os.cpu_count() or 1)
    rows = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for row in pool.map(lambda v: _sweep_point(doc, key, v), values):
            rows.append(row)
    out_dir = args.out or scn.out_dir or "."
    path = os.path.join(out_dir, f"{scn.name}_sweep.csv")
    write_sweep_csv(path, key, rows)
    print(path)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "sweep":
            return _cmd_sweep(args)
        scn_doc = parse_scenario(args.scenario).raw
        scn = scenario_from_dict(_apply_overrides(scn_doc, args))
        rep = run_pipeline(scn, out_dir=args.out,
                           stages=_STAGES[args.command])
        print(os.path.join(args.out or scn.out_dir or ".",
                           f"{scn.name}_report.json"))
        return 0
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except TwophaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
