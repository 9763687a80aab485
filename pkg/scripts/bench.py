"""Throughput and per-frame cost versus number of live tracks.

    python scripts/bench.py [--steps 20000]
"""
import argparse
import json

from safe_imm.runner import bench_imm, bench_scaling, bench_tracker


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=20000)
    ap.add_argument("--tracks", type=int, nargs="+", default=[1, 10, 25, 50, 100])
    args = ap.parse_args()
    imm = bench_imm(args.steps)
    trk = bench_tracker()
    sc = bench_scaling(args.tracks)
    print(json.dumps({"imm_only": imm, "tracker": trk, "scaling": sc}, indent=2))


if __name__ == "__main__":
    main()
