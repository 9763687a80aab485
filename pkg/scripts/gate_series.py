"""Per-step mode weights, gate bound and gate firings for one seed.

Writes a CSV with one row per (step, track); plot with any tool. With
matplotlib installed, ``--plot`` also saves a PNG next to it.

    python scripts/gate_series.py configs/t2_stress.yaml --seed 0 [--plot]
"""
import argparse
import csv
from pathlib import Path

from safe_imm.config import load_config
from safe_imm.runner import run_tracking


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config", type=Path)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("results/gate_series.csv"))
    ap.add_argument("--plot", action="store_true")
    args = ap.parse_args()

    cfg = load_config(args.config).with_seed(args.seed)
    res = run_tracking(cfg, record_rows=True)
    n_models = len(cfg.tracker_params().models)
    header = (["step", "time", "track_id", "target_id"] + [f"w{j}" for j in range(n_models)]
              + ["winner", "fired", "bound", "actual_drift", "prob_margin", "loglik_margin"])
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(res.gate_rows)
    print(f"{len(res.gate_rows)} rows -> {args.out}; fired {res.fired_steps} steps, "
          f"compliance {100 * res.compliance:.1f}%")

    if args.plot:
        import matplotlib.pyplot as plt  # optional, not a package dependency

        rows = [r for r in res.gate_rows if r[3] not in (None, "")]
        fig, axes = plt.subplots(2, 1, sharex=True, figsize=(8, 5))
        for tgt in sorted({r[3] for r in rows}):
            sel = [r for r in rows if r[3] == tgt]
            t = [r[1] for r in sel]
            axes[0].plot(t, [r[4 + n_models - 1] for r in sel], label=f"T{tgt} w_CA")
            axes[1].plot(t, [r[6 + n_models] for r in sel], label=f"T{tgt} bound")
        axes[1].axhline(cfg.gate.epsilon, ls="--", c="k")
        axes[0].legend()
        axes[1].legend()
        axes[1].set_xlabel("time [s]")
        fig.savefig(args.out.with_suffix(".png"), dpi=120)


if __name__ == "__main__":
    main()
