"""Command line entry point: ``curvspec <command> --config FILE``."""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

from .commands import EXIT_CONFIG, EXIT_OK, EXIT_RESIDUAL, _csv, run_command, write_outputs
from .config import COMMANDS, ConfigError, load_config
from .types import CurvspecError

DEFAULT_OUT = "curvspec-out"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="curvspec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS + ("verify-all",):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, required=name != "verify-all", help="TOML run configuration")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--tier", choices=("strict", "mesh"), help="override tolerance.tier")
        p.add_argument("--threads", type=int, default=1, help="parallel scenarios for verify-all")
        p.add_argument("--seed", type=int, help="override verify.seed")
        if name == "verify":
            p.add_argument("--checks", help="comma-separated subset of verify.checks")
        if name == "verify-all":
            p.add_argument("--scenarios", type=Path, help="directory of scenario files (default: shipped set)")
    return parser


def output_dir(args_out, cfg) -> Path:
    """``--out``, then ``$CURVSPEC_OUT/<name>``, then ``output.dir``, then ``curvspec-out/<name>``."""
    if args_out is not None:
        return Path(args_out)
    env = os.environ.get("CURVSPEC_OUT")
    if env:
        return Path(env) / cfg.name
    if cfg["output"]["dir"]:
        return cfg.base_dir / cfg["output"]["dir"]
    return Path(DEFAULT_OUT) / cfg.name


def _apply_overrides(cfg, tier=None, seed=None, checks=None):
    if tier is not None:
        cfg["tolerance"]["tier"] = tier
    if seed is not None:
        cfg["verify"]["seed"] = seed
    if checks is not None:
        cfg["verify"]["checks"] = [c.strip() for c in checks.split(",") if c.strip()]
    return cfg


def shipped_scenarios() -> list[Path]:
    root = resources.files("curvspec") / "scenarios"
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".toml"))


def _run_scenario(path: Path, out_root: Path, tier, seed) -> tuple:
    try:
        cfg = _apply_overrides(load_config(path), tier, seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = run_command(cfg)
        write_outputs(result, out_root / cfg.name, cfg)
        code = result.exit_code
        expected = cfg[""]["expect_exit"]
        name, command = cfg.name, cfg[""]["command"]
    except CurvspecError as exc:
        print(f"{path.name}: {exc}", file=sys.stderr)
        name, command, code, expected = path.stem, "", EXIT_CONFIG, None
    return name, command, code, expected


def verify_all(args) -> int:
    paths = sorted(args.scenarios.glob("*.toml")) if args.scenarios else shipped_scenarios()
    if not paths:
        print("no scenario files found", file=sys.stderr)
        return EXIT_CONFIG
    out_root = args.out or Path(os.environ.get("CURVSPEC_OUT") or DEFAULT_OUT)
    jobs = [(p, out_root, args.tier, args.seed) for p in paths]
    if args.threads > 1:
        with ProcessPoolExecutor(args.threads) as pool:
            results = list(pool.map(_run_scenario, *zip(*jobs)))
    else:
        results = [_run_scenario(*j) for j in jobs]
    rows = []
    for name, command, code, expected in results:
        ok = expected is not None and code == expected
        rows.append((name, command, code, "" if expected is None else expected, ok))
        print(f"{'PASS' if ok else 'FAIL'} {name}: exit {code} (expected {expected})")
    out_root.mkdir(parents=True, exist_ok=True)
    (out_root / "verify_all.csv").write_text(_csv(["scenario", "command", "exit_code", "expected", "passed"], rows))
    return EXIT_OK if all(r[-1] for r in rows) else EXIT_RESIDUAL


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(f"curvspec: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("curvspec: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "verify-all":
        return verify_all(args)
    try:
        cfg = _apply_overrides(load_config(args.config), args.tier, args.seed, getattr(args, "checks", None))
        result = run_command(cfg, args.command)
    except CurvspecError as exc:
        print(f"curvspec: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = write_outputs(result, output_dir(args.out, cfg), cfg)
    print(f"{args.command} {cfg.name}: exit {result.exit_code}; outputs in {out}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
