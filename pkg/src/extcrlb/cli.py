"""Command-line entry point: ``extcrlb {run,list,validate}``.

Errors are reported on stderr as one JSON object and a nonzero exit code:
2 for configuration problems, 1 when some scenario failed during a run.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from .config import RunConfig, catalog, catalog_text, load_config, scenario_scenes

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _fail(kind: str, details, code: int) -> int:
    print(json.dumps({"status": "error", "kind": kind, "details": details}, sort_keys=True), file=sys.stderr)
    return code


def _validation_details(err: ValidationError):
    return [{"field": ".".join(str(p) for p in e["loc"]), "message": e["msg"]} for e in err.errors()]


def _resolve(target: str) -> tuple[RunConfig, str, list | None, Path | None]:
    """A config path, ``catalog`` or a catalog scenario name."""
    path = Path(target)
    if path.is_file():
        cfg, digest = load_config(path)
        return cfg, digest, None, path.parent
    text = catalog_text()
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    cfg = catalog()
    if target == "catalog":
        return cfg, digest, None, None
    if target in {s.name for s in cfg.scenario}:
        return cfg, digest, [target], None
    raise FileNotFoundError(f"{target!r} is neither a config file nor a catalog scenario")


def _check_scenes(cfg: RunConfig, only, base_dir):
    problems = []
    for sc in cfg.scenario:
        if only and sc.name not in only:
            continue
        try:
            scenario_scenes(sc, base_dir)
        except (ValueError, OSError) as exc:
            problems.append({"field": f"scenario.{sc.name}", "message": str(exc)})
    return problems


def _load(target, only_extra):
    cfg, digest, only, base_dir = _resolve(target)
    if only_extra:
        names = {s.name for s in cfg.scenario}
        unknown = sorted(set(only_extra) - names)
        if unknown:
            raise FileNotFoundError(f"unknown scenario(s): {', '.join(unknown)}")
        only = list(only_extra)
    return cfg, digest, only, base_dir


def cmd_list(args) -> int:
    for sc in catalog().scenario:
        print(f"{sc.name:<22} {sc.description}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        cfg, _, only, base_dir = _load(args.config, args.only)
    except ValidationError as err:
        return _fail("validation", _validation_details(err), EXIT_CONFIG)
    except (OSError, ValueError) as err:
        return _fail("config", [{"field": "", "message": str(err)}], EXIT_CONFIG)
    problems = _check_scenes(cfg, only, base_dir)
    if problems:
        return _fail("scene", problems, EXIT_CONFIG)
    n = len(only) if only else len(cfg.scenario)
    print(f"ok: {n} scenario(s) valid")
    return EXIT_OK


def cmd_run(args) -> int:
    from .runner import run

    try:
        cfg, digest, only, base_dir = _load(args.config, args.only)
    except ValidationError as err:
        return _fail("validation", _validation_details(err), EXIT_CONFIG)
    except (OSError, ValueError) as err:
        return _fail("config", [{"field": "", "message": str(err)}], EXIT_CONFIG)
    problems = _check_scenes(cfg, only, base_dir)
    if problems:
        return _fail("scene", problems, EXIT_CONFIG)
    out = Path(args.out or cfg.out or "results")
    outcomes = run(cfg, out, digest, args.seed, args.threads, args.trials, only, base_dir)
    failed = [{"scenario": o.name, "error": o.error} for o in outcomes if o.error]
    if failed:
        return _fail("partial-run", failed, EXIT_FAILED)
    for o in outcomes:
        for f in o.files:
            print(f)
    print(out / "manifest.json")
    return EXIT_OK


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="extcrlb", description="Delay/stretch CRLBs for extended targets.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("list", help="show the bundled scenario catalog").set_defaults(func=cmd_list)

    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config", help="TOML file, 'catalog', or a catalog scenario name")
    v.add_argument("--only", action="append", metavar="NAME", help="restrict to a scenario (repeatable)")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="run scenarios and write CSVs plus manifest.json")
    r.add_argument("config", help="TOML file, 'catalog', or a catalog scenario name")
    r.add_argument("--out", help="output directory (default: config 'out' or ./results)")
    r.add_argument("--seed", type=_seed, help="override every scenario seed")
    r.add_argument("--threads", type=_positive_int, default=1, help="Monte Carlo worker threads")
    r.add_argument("--trials", type=_positive_int, help="override Monte Carlo trial counts")
    r.add_argument("--only", action="append", metavar="NAME", help="restrict to a scenario (repeatable)")
    r.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
