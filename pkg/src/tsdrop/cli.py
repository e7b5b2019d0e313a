"""Command-line front end.

    sim run|compare|verify|sweep --config CONFIG.json --out DIR [--set key=value ...]

Exit codes: 0 success, 2 config error, 3 divergence, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from tsdrop.config import ConfigError, SimConfig, apply_overrides, config_from_dict, parse_config, rule_from_json
from tsdrop.harness import METRICS, check_comparable, compare, run, verify_generalization_error
from tsdrop.output import atomic_write_text, fmt, to_json, trajectory_csv
from tsdrop.svg import trajectory_charts

log = logging.getLogger("tsdrop")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4

SECTIONS = ("compare", "verify", "sweep")
SWEEP_ALIASES = {"p": "rule.dropout.p", "eta": "eta"}

__all__ = ["main", "parse_config", "CliInvocation"]


@dataclass
class CliInvocation:
    subcommand: str
    config_path: Path
    out_dir: Path
    overrides: list[str] = field(default_factory=list)

    def load(self) -> dict:
        try:
            text = self.config_path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError("--config", f"cannot read {self.config_path}: {exc.strerror}") from None
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<json>", f"malformed JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        return apply_overrides(raw, self.overrides, SECTIONS)


def _prepare_out(out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)


def write_run(out_dir: Path, config: SimConfig, records, summary) -> None:
    _prepare_out(out_dir)
    atomic_write_text(out_dir / "trajectory.csv", trajectory_csv(records))
    body = {"config": config.to_dict(), **summary.to_dict()}
    atomic_write_text(out_dir / "summary.json", to_json(body))
    for name, text in trajectory_charts(records).items():
        atomic_write_text(out_dir / name, text)


def run_command(inv: CliInvocation) -> int:
    raw = inv.load()
    config = config_from_dict(raw)
    records, summary = run(config)
    write_run(inv.out_dir, config, records, summary)
    if summary.diverged:
        log.error("run diverged at step %s", summary.diverged_step)
        return EXIT_DIVERGED
    return EXIT_OK


def _split_section(raw: dict, name: str) -> tuple[dict, dict]:
    raw = dict(raw)
    section = raw.pop(name, None)
    if not isinstance(section, dict):
        raise ConfigError(name, f"missing '{name}' section object")
    return raw, section


def compare_command(inv: CliInvocation) -> int:
    raw, section = _split_section(inv.load(), "compare")
    unknown = set(section) - {"rule", "seeds"}
    if unknown:
        raise ConfigError(f"compare.{sorted(unknown)[0]}", "unknown key")
    if "rule" not in section:
        raise ConfigError("compare.rule", "missing variant rule")
    base = config_from_dict(raw)
    variant = base.with_(rule=rule_from_json(section["rule"]))
    if variant.rule == base.rule:
        raise ConfigError("compare.rule", "variant rule is identical to the base rule")
    seeds = section.get("seeds", [0, 1, 2])
    if not (isinstance(seeds, list) and all(isinstance(s, int) and not isinstance(s, bool) for s in seeds)):
        raise ConfigError("compare.seeds", "expected a list of integers")
    check_comparable(base, variant)
    report = compare(base, variant, seeds)
    _prepare_out(inv.out_dir)
    cols = ["seed"] + [f"{side}_{m}" for m in METRICS for side in ("base", "variant", "diff")]
    lines = [",".join(cols)]
    for row in report.rows:
        vals = [str(row.seed)]
        for m in METRICS:
            for side in (row.base, row.variant, row.diff):
                vals.append("" if side[m] is None else fmt(side[m]))
        lines.append(",".join(vals))
    atomic_write_text(inv.out_dir / "compare.csv", "\n".join(lines) + "\n")
    body = {"base": base.to_dict(), "variant_rule": section["rule"], "seeds": seeds,
            **report.to_dict()}
    atomic_write_text(inv.out_dir / "compare.json", to_json(body))
    if any(r.base["diverged"] or r.variant["diverged"] for r in report.rows):
        return EXIT_DIVERGED
    return EXIT_OK


VERIFY_KEYS = {"trials": 50, "max_M": 4, "max_K": 4, "samples": 200_000, "seed": 0, "N": 400,
               "perfect": False}


def verify_command(inv: CliInvocation) -> int:
    raw, section = _split_section(inv.load(), "verify")
    if raw:
        raise ConfigError(sorted(raw)[0], "unknown key for verify")
    unknown = set(section) - set(VERIFY_KEYS)
    if unknown:
        raise ConfigError(f"verify.{sorted(unknown)[0]}", "unknown key")
    params = {**VERIFY_KEYS, **section}
    for key in ("trials", "max_M", "max_K", "samples", "N"):
        if not isinstance(params[key], int) or isinstance(params[key], bool) or params[key] < 1:
            raise ConfigError(f"verify.{key}", "expected a positive integer")
    if params["samples"] < 2:
        raise ConfigError("verify.samples", "need at least 2 samples")
    report = verify_generalization_error(params["trials"], params["max_M"], params["max_K"],
                                         params["samples"], params["seed"], N=params["N"],
                                         perfect=bool(params["perfect"]))
    _prepare_out(inv.out_dir)
    lines = ["trial,M,K,analytic,mc_mean,mc_stderr,z,passed"]
    for t in report.trials:
        lines.append(",".join([str(t.index), str(t.M), str(t.K), fmt(t.analytic), fmt(t.mc_mean),
                               fmt(t.mc_stderr), fmt(t.z), str(int(t.passed))]))
    atomic_write_text(inv.out_dir / "verify.csv", "\n".join(lines) + "\n")
    atomic_write_text(inv.out_dir / "verify.json", to_json({"params": params, **report.to_dict()}))
    log.info("eps_g verification: %d/%d trials within %g std-errors",
             report.pass_count, len(report.trials), report.threshold)
    return EXIT_OK


def sweep_command(inv: CliInvocation) -> int:
    raw, section = _split_section(inv.load(), "sweep")
    unknown = set(section) - {"key", "values"}
    if unknown:
        raise ConfigError(f"sweep.{sorted(unknown)[0]}", "unknown key")
    key = section.get("key")
    values = section.get("values")
    if not isinstance(key, str):
        raise ConfigError("sweep.key", "expected a config key such as 'p' or 'eta'")
    if not isinstance(values, list) or not values:
        raise ConfigError("sweep.values", "expected a non-empty list")
    path = SWEEP_ALIASES.get(key, key)
    configs = [config_from_dict(apply_overrides(raw, [f"{path}={json.dumps(v)}"])) for v in values]
    _prepare_out(inv.out_dir)
    index = ["index,key,value,dir,final_mse_window,final_eg_analytic,diverged"]
    status = EXIT_OK
    for k, (value, config) in enumerate(zip(values, configs)):
        sub = f"{k:03d}_{key}={value}"
        records, summary = run(config)
        write_run(inv.out_dir / sub, config, records, summary)
        fr = summary.final_record
        index.append(",".join([str(k), key, json.dumps(value), sub, fmt(fr.mse_window),
                               fmt(fr.eg_analytic), str(int(summary.diverged))]))
        if summary.diverged:
            status = EXIT_DIVERGED
    atomic_write_text(inv.out_dir / "index.csv", "\n".join(index) + "\n")
    return status


COMMANDS = {"run": run_command, "compare": compare_command, "verify": verify_command,
            "sweep": sweep_command}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sim", description="Teacher-student online learning simulator.")
    parser.add_argument("subcommand", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, type=Path, help="JSON config file")
    parser.add_argument("--out", required=True, type=Path, help="output directory")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (dotted path, JSON value); repeatable")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    inv = CliInvocation(args.subcommand, args.config, args.out, args.overrides)
    try:
        return COMMANDS[inv.subcommand](inv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
