"""Command-line entry point.

    safe-imm {simulate,track,ablate,bench} --config PATH [--seed N] [--override key=value ...]

Outputs go to ``output_dir`` from the config, or ``$SAFE_IMM_OUTPUT_DIR`` when set.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import SCHEMA_VERSION, ConfigError, RunConfig, load_config
from .runner import (RunResult, bench_imm, bench_scaling, bench_tracker, run_ablation,
                     run_tracking, summarize)
from .sim import generate_measurements, generate_truth, write_measurements_csv, write_truth_csv

OUTPUT_ENV = "SAFE_IMM_OUTPUT_DIR"
EXIT_CONFIG = 2
EXIT_RUNTIME = 1
BENCH_IMM_STEPS = 20000
BENCH_TRACK_COUNTS = (1, 10, 25, 50, 100)
BENCH_SCALING_STEPS = 200


def _output_dir(cfg: RunConfig) -> Path:
    out = Path(os.environ.get(OUTPUT_ENV) or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _record(kind: str, cfg: RunConfig, body: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "package_version": __version__,
        "tracker": cfg.tracker,
        "likelihood": cfg.likelihood,
        "tpm": "adaptive" if cfg.tpm.enabled else "fixed",
        "noise_profile": {"sigma_pos": cfg.scenario.noise_profile.sigma_pos,
                          "sigma_vel": cfg.scenario.noise_profile.sigma_vel},
        **body,
    }


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{x:.9g}" if isinstance(x, float) else x for x in r])


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    seed = cfg.seeds[0]
    sc = cfg.with_seed(seed).scenario
    truth = generate_truth(sc)
    frames = generate_measurements(truth, sc)
    write_truth_csv(out / "truth.csv", truth)
    write_measurements_csv(out / "measurements.csv", frames)
    n_det = sum(len(f.z) for f in frames)
    print(f"simulate: seed={seed} steps={sc.n_steps} targets={len(truth)} detections={n_det} -> {out}")
    return 0


def _gate_header(result: RunResult, n_models: int):
    return (["step", "time", "track_id", "target_id"] + [f"w{j}" for j in range(n_models)]
            + ["winner", "fired", "bound", "actual_drift", "prob_margin", "loglik_margin"])


def cmd_track(cfg: RunConfig, out: Path) -> int:
    results = []
    n_models = len(cfg.tracker_params().models)
    multi = len(cfg.seeds) > 1
    for seed in cfg.seeds:
        res = run_tracking(cfg.with_seed(seed), record_rows=True)
        results.append(res)
        tag = f"_seed{seed}" if multi else ""
        _write_rows(out / f"tracks{tag}.csv", RunResult.TRACK_HEADER, res.track_rows)
        _write_rows(out / f"gate_series{tag}.csv", _gate_header(res, n_models), res.gate_rows)
        _write_json(out / f"metrics{tag}.json", _record("track", cfg, res.metrics_record()))
        g = res.metrics_record()["gate"]
        rm = " ".join(f"T{i}=({x:.3f},{y:.3f})" for i, (x, y) in res.rmse_xy.items())
        print(f"track: seed={seed} rmse_xy {rm} ospa={res.ospa_mean:.4f} "
              f"fired={g['fired_steps']} compliance={100 * g['compliance']:.1f}%")
    if multi:
        _write_json(out / "summary.json", _record("track_summary", cfg, summarize(results)))
    return 0


def cmd_ablate(cfg: RunConfig, out: Path) -> int:
    table = run_ablation(cfg)
    _write_json(out / "ablation.json", _record("ablation", cfg, {"cells": table}))
    print(f"{'cell':48s} {'ospa':>8s} {'max_excursion':>14s} {'compliance':>10s}")
    for name, s in table.items():
        print(f"{name:48s} {s['ospa']['mean']:8.4f} {s['max_bound_excursion']:14.3f} "
              f"{100 * s['gate']['compliance']:9.1f}%")
    return 0


def cmd_bench(cfg: RunConfig, out: Path) -> int:
    imm = bench_imm(BENCH_IMM_STEPS)
    trk = bench_tracker(cfg.with_seed(cfg.seeds[0]))
    scaling = bench_scaling(BENCH_TRACK_COUNTS, BENCH_SCALING_STEPS)
    frame_period = 0.1
    report = _record("bench", cfg, {
        "imm_only": imm,
        "tracker": trk,
        "scaling": scaling,
        "realtime_margin": trk["frames_per_s"] * frame_period,
        "host": {"python": platform.python_version(), "machine": platform.machine(),
                 "numpy": np.__version__},
    })
    _write_json(out / "bench.json", report)
    print(f"bench: imm_only={imm['steps_per_s']:.0f} steps/s (p50 {imm['latency_p50_us']:.1f} us, "
          f"p99 {imm['latency_p99_us']:.1f} us); tracker={trk['frames_per_s']:.0f} frames/s; "
          f"{report['realtime_margin']:.0f}x the 10 Hz frame rate")
    return 0


COMMANDS = {"simulate": cmd_simulate, "track": cmd_track, "ablate": cmd_ablate, "bench": cmd_bench}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="safe-imm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--seed", type=int, help="run this single seed instead of the config's list")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted config key, e.g. scenario.clutter_rate=2 (repeatable)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.override)
        if args.seed is not None:
            cfg.seeds = [args.seed]
        out = _output_dir(cfg)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
