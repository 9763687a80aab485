"""Gate x likelihood x TPM ablation with paired seeds, plus paired win counts.

    python scripts/ablation.py configs/t2_stress.yaml [--seeds 50]
"""
import argparse
import json
from pathlib import Path

import numpy as np

from safe_imm.config import load_config
from safe_imm.runner import run_ablation


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config", type=Path)
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    table = run_ablation(load_config(args.config), range(args.seeds), args.workers)
    for name, s in table.items():
        print(f"{name:48s} ospa={s['ospa']['mean']:.4f} max_excursion={s['max_bound_excursion']:.3f}")

    for lik in ("gaussian", "student_t"):
        for tpm in ("fixed", "adaptive"):
            on = np.array(table[f"gate=on,lik={lik},tpm={tpm}"]["per_seed_ospa"])
            off = np.array(table[f"gate=off,lik={lik},tpm={tpm}"]["per_seed_ospa"])
            print(f"gate-on wins [{lik}, {tpm}]: {(off > on).sum()}/{len(on)}")
    for tpm in ("fixed", "adaptive"):
        g = np.array(table[f"gate=on,lik=gaussian,tpm={tpm}"]["per_seed_max_drift"])
        t = np.array(table[f"gate=on,lik=student_t,tpm={tpm}"]["per_seed_max_drift"])
        print(f"Gaussian excursion > Student-t [{tpm}]: {(g > t).sum()}/{len(g)}")

    out = args.out or Path("results") / f"ablation_{args.config.stem}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(table, indent=2) + "\n")


if __name__ == "__main__":
    main()
