"""Command-line entry point of the benchmark harness."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bench import BenchConfig, ConfigError, run_benchmark, write_report

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

# flag name -> (BenchConfig field, parser)
_KEYS = {
    "k": ("k", int),
    "kappa": ("kappa", float),
    "n-max": ("n_max", int),
    "eta2": ("eta2", float),
    "l-hf": ("l_hf", int),
    "degree": ("m", int),
    "aca-eps": ("aca_eps", float),
    "no-zero-diagonal": ("zero_diagonal", None),
    "seed": ("seed", int),
    "sample-rows": ("sample_rows", int),
    "points": ("points_file", str),
    "output": ("output", str),
    "format": ("format", str),
}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; keys are flag names without the leading dashes.

    Blank lines and ``#`` comments are ignored; underscores and dashes in
    keys are interchangeable.
    """
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for num, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{num}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("_", "-")
        if key not in _KEYS:
            raise ConfigError(f"{path}:{num}: unknown key {key!r}")
        field, conv = _KEYS[key]
        try:
            values[field] = (not _parse_bool(value)) if conv is None else conv(value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{num}: bad value for {key}: {value!r}") from exc
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dirfmm",
        description="Directional Helmholtz matvec benchmark on the uniform grid test problem.",
    )
    p.add_argument("--k", type=int, help="grid exponent, N = 8**k points")
    p.add_argument("--kappa", type=float, help="wave number (default 0.1 * 2**k)")
    p.add_argument("--n-max", type=int, help="maximal leaf size (default 512)")
    p.add_argument("--eta2", type=float, help="admissibility parameter (default 5)")
    p.add_argument("--l-hf", type=int, help="highest high-frequency level (default k - 4)")
    p.add_argument("--degree", type=int, help="interpolation degree m (default 4)")
    p.add_argument("--aca-eps", type=float,
                   help="ACA tolerance for coupling matrices (default 1e-6, 0 disables)")
    p.add_argument("--no-zero-diagonal", action="store_true", default=None,
                   help="keep the diagonal entries (the singular ones raise)")
    p.add_argument("--seed", type=int, help="seed of the test vector and row sample (default 0)")
    p.add_argument("--sample-rows", type=int, help="rows checked against direct evaluation (default 1024)")
    p.add_argument("--points", help="text file with one 'x y z' point per line instead of the grid")
    p.add_argument("--output", help="report file (default: standard output)")
    p.add_argument("--format", choices=("json", "csv"), help="report format (default json)")
    p.add_argument("--config", help="flat key=value file with the same keys as the flags")
    return p


def config_from_args(args: argparse.Namespace) -> BenchConfig:
    values = read_config_file(args.config) if args.config else {}
    for flag, (field, conv) in _KEYS.items():
        given = getattr(args, flag.replace("-", "_"))
        if given is None:
            continue
        values[field] = False if conv is None else given
    if values.get("aca_eps") == 0:
        values["aca_eps"] = None
    return BenchConfig(**values)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = config_from_args(args).resolved()
    except ConfigError as exc:
        print(f"dirfmm: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run_benchmark(cfg)
        text = write_report(report, cfg.output, cfg.format)
    except Exception as exc:  # noqa: BLE001 - every failure maps to one exit code
        print(f"dirfmm: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if not cfg.output:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
