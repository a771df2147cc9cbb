"""Command-line entry point: ``gpfollow {run,sweep,validate,tune}``.

Config arguments accept a file path or the stem of a shipped config
(``circle``, ``table1``, ...). Log verbosity comes from ``GPFOLLOW_LOG_LEVEL``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, expand_sweep, load_sweep, load_yaml
from .harness import (
    lyapunov_increases,
    max_error,
    rmse,
    run_scenario,
    run_sweep,
    tune_guidance,
    violations,
    write_outputs,
)

CONFIG_DIR = Path(__file__).parent / "configs"
log = logging.getLogger("gpfollow")


def resolve_config(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    shipped = CONFIG_DIR / f"{name}.yaml"
    if shipped.exists():
        return shipped
    raise FileNotFoundError(f"no config file {name!r} and no shipped config of that name")


def _experiment(args) -> ExperimentConfig:
    data = load_yaml(resolve_config(args.config))
    if args.seed is not None:
        data["seed"] = args.seed
    if args.wind_seed is not None:
        data.setdefault("wind", {})["seed"] = args.wind_seed
    if args.out is not None:
        data["output_dir"] = args.out
    return ExperimentConfig.from_dict(data)


def cmd_run(args) -> int:
    cfg = _experiment(args)
    lg = run_scenario(cfg)
    viol = violations(lg, cfg) if len(lg) else {"aborted": 1}
    if cfg.output_dir:
        csv_path, json_path = write_outputs(lg, cfg, cfg.output_dir)
        print(f"wrote {csv_path} and {json_path}")
    if len(lg):
        print(f"{cfg.name}: rmse={rmse(lg):.5f} m  max={max_error(lg):.5f} m  steps={len(lg)}  hash={cfg.config_hash()}")
    if lg.error:
        print(f"aborted: {lg.error}", file=sys.stderr)
    bad = {k: v for k, v in viol.items() if v}
    if bad:
        print(f"invariant violations: {bad}", file=sys.stderr)
        return 1
    return 0


def cmd_sweep(args) -> int:
    spec = load_sweep(resolve_config(args.config))
    items = expand_sweep(spec)
    if args.seeds is not None:
        items = [it for it in items if it.config.wind.seed < args.seeds]
    log.info("sweep with %d scenarios", len(items))
    report, _ = run_sweep(items, workers=args.workers)
    print(report.format_table())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
        print(f"wrote {out / 'report.json'}")
    if report.violations:
        print(f"{report.violations} invariant violations", file=sys.stderr)
        return 1
    return 0


def cmd_validate(args) -> int:
    cfg = _experiment(args)
    first = run_scenario(cfg)
    second = run_scenario(cfg)
    checks = {
        "complete": first.complete,
        "replay_identical": first.identical(second),
        "config_hash": first.meta["config_hash"] == cfg.config_hash(),
        "time_grid": bool(len(first) < 2 or np.allclose(np.diff(first["t"]), cfg.dt, rtol=0, atol=1e-12)),
    }
    checks.update({k: v == 0 for k, v in violations(first, cfg).items()})
    inc, cand = lyapunov_increases(first)
    checks["lyapunov_monitor"] = inc == 0
    for name, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(f"lyapunov candidates={cand} increases={inc}")
    return 0 if all(checks.values()) else 1


def cmd_tune(args) -> int:
    data = load_yaml(resolve_config(args.config))
    base = ExperimentConfig.from_dict(data)
    grid = [round(0.1 * i, 1) for i in range(1, 11)]
    for law in ("carrot", "nlgl"):
        best, table = tune_guidance(base, law, grid)
        for d, err in table:
            print(f"{law} d={d:.1f} rmse={err:.5f}")
        print(f"{law}: best d={best}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gpfollow", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def single(p):
        p.add_argument("config", help="experiment YAML path or shipped config name")
        p.add_argument("--seed", type=int, help="measurement-noise seed override")
        p.add_argument("--wind-seed", type=int, help="wind seed override")
        p.add_argument("--out", help="output directory for CSV/JSON")

    single(sub.add_parser("run", help="simulate one scenario"))
    single(sub.add_parser("validate", help="replay a scenario and check invariants"))
    sw = sub.add_parser("sweep", help="run a table sweep")
    sw.add_argument("config", help="sweep YAML path or shipped config name")
    sw.add_argument("--out", help="directory for report.json")
    sw.add_argument("--workers", type=int, default=1)
    sw.add_argument("--seeds", type=int, help="only wind seeds below this value")
    tu = sub.add_parser("tune", help="grid-search the guidance distances")
    tu.add_argument("config", nargs="?", default="tune_guidance")
    return ap


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("GPFOLLOW_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "sweep": cmd_sweep, "validate": cmd_validate, "tune": cmd_tune}[args.command]
    try:
        return handler(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
