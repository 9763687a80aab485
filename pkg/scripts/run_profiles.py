"""Multi-seed RMSE / OSPA / gate-compliance table for the noise profiles.

    python scripts/run_profiles.py [--seeds 50] [--workers 4] [--out results/profiles.json]
"""
import argparse
import json
from pathlib import Path

from safe_imm.config import load_config
from safe_imm.runner import run_campaign, summarize

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--profiles", nargs="+", default=["profile1", "profile2", "high_noise"])
    ap.add_argument("--out", type=Path, default=Path("results/profiles.json"))
    args = ap.parse_args()

    report = {}
    for name in args.profiles:
        for tracker in ("safe_imm", "imm_mixture_only"):
            cfg = load_config(CONFIGS / f"{name}.yaml", [f"tracker={tracker}"])
            s = summarize(run_campaign(cfg, range(args.seeds), args.workers))
            report[f"{name}/{tracker}"] = s
            rm = " ".join(f"T{k}=({x:.3f},{y:.3f})" for k, (x, y) in s["rmse_xy"].items())
            print(f"{name:10s} {tracker:17s} ospa={s['ospa']['mean']:.4f} {rm} "
                  f"compliance={100 * s['gate']['compliance']:.1f}%")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(report, indent=2) + "\n")


if __name__ == "__main__":
    main()
