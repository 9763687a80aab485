"""Experiment harness: single runs, Monte Carlo campaigns, ablations, benchmarks."""
from __future__ import annotations

import copy
import dataclasses
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .association import TrackerState, tracker_step
from .config import RunConfig
from .imm import ImmConfig, default_bank, imm_step
from .metrics import TrackMatcher, ospa, rmse
from .sim import generate_measurements, generate_truth


@dataclass
class RunResult:
    seed: int
    target_ids: list
    # per-target (K, 3) estimated positions of the bound track, NaN in gaps
    estimates: dict
    truth: dict
    rmse_xy: dict
    ospa_mean: float
    ospa_loc: float
    ospa_card: float
    per_target_ospa: dict
    fired_steps: int
    gated_steps: int
    compliant_fired: int
    max_drift: float
    max_drift_fired: float
    id_switches: dict
    track_rows: list = field(default_factory=list)
    gate_rows: list = field(default_factory=list)

    TRACK_HEADER = ("step", "time", "track_id", "target_id", "px", "py", "pz", "vx", "vy", "vz", "ax", "ay", "az")

    @property
    def compliance(self) -> float:
        return 1.0 if self.fired_steps == 0 else self.compliant_fired / self.fired_steps

    def metrics_record(self) -> dict:
        return {
            "seed": self.seed,
            "rmse_xy": {str(k): list(v) for k, v in self.rmse_xy.items()},
            "ospa": {"mean": self.ospa_mean, "loc": self.ospa_loc, "card": self.ospa_card},
            "per_target_ospa": {str(k): v for k, v in self.per_target_ospa.items()},
            "gate": {
                "gated_steps": self.gated_steps,
                "fired_steps": self.fired_steps,
                "compliant_fired_steps": self.compliant_fired,
                "compliance": self.compliance,
                "max_drift": self.max_drift,
                "max_drift_fired": self.max_drift_fired,
            },
            "id_switches": {str(k): v for k, v in self.id_switches.items()},
        }


def run_tracking(cfg: RunConfig, record_rows: bool = False) -> RunResult:
    """Simulate one scenario (seeded by ``cfg.scenario.seed``) and track it end to end."""
    sc = cfg.scenario
    truth = generate_truth(sc)
    frames = generate_measurements(truth, sc)
    params = cfg.tracker_params()
    R = sc.R
    eps = params.imm.gate.epsilon
    state = TrackerState()
    matcher = TrackMatcher(cfg.metrics.match_radius)
    ids = [t.target_id for t in truth]
    n = sc.n_steps
    est = {i: np.full((n, 3), np.nan) for i in ids}
    ospa_vals = np.zeros((n, 3))
    per_target = {i: [] for i in ids}
    fired = gated = compliant = 0
    max_drift = max_drift_fired = 0.0
    track_rows, gate_rows = [], []
    c, p = cfg.metrics.ospa_c, cfg.metrics.ospa_p

    for k, frame in enumerate(frames):
        state, confirmed = tracker_step(state, frame.z, sc.dt, R, params)
        for tr in state.tracks:
            d = tr.decision
            if d is None:
                continue
            gated += 1
            if d.fired:
                fired += 1
                compliant += d.actual_drift <= eps
                max_drift_fired = max(max_drift_fired, d.actual_drift)
            if tr.status.name == "CONFIRMED":
                max_drift = max(max_drift, d.actual_drift)
        positions = {t.id: t.output.mean[:3] for t in confirmed}
        truth_pos = {t.target_id: t.positions[k] for t in truth}
        match = matcher.match(truth_pos, positions)
        for tgt, tid in match.items():
            if tid is not None:
                est[tgt][k] = positions[tid]
            per_target[tgt].append(
                ospa(truth_pos[tgt][None, :], positions[tid][None, :] if tid is not None else np.zeros((0, 3)), c, p).total
            )
        X = np.array([truth_pos[i] for i in ids])
        Y = np.array(list(positions.values())).reshape(-1, 3)
        r = ospa(X, Y, c, p)
        ospa_vals[k] = (r.total, r.loc, r.card)
        if record_rows:
            target_of = {tid: tgt for tgt, tid in match.items() if tid is not None}
            for t in confirmed:
                d = t.decision
                tgt = target_of.get(t.id, "")
                track_rows.append([k, round(frame.time, 6), t.id, tgt] + t.output.mean.tolist())
                if d is not None:
                    gate_rows.append([k, round(frame.time, 6), t.id, tgt, *t.bank.weights.tolist(), d.winner_idx,
                                      int(d.fired), d.bound, d.actual_drift, d.margin, d.loglik_margin])

    rmse_xy = {}
    truth_by_id = {t.target_id: t for t in truth}
    for i in ids:
        tp = truth_by_id[i].positions
        rmse_xy[i] = (rmse(tp, est[i], axis=0).value, rmse(tp, est[i], axis=1).value)
    return RunResult(
        seed=sc.seed,
        target_ids=ids,
        estimates=est,
        truth={i: truth_by_id[i].positions for i in ids},
        rmse_xy=rmse_xy,
        ospa_mean=float(ospa_vals[:, 0].mean()),
        ospa_loc=float(ospa_vals[:, 1].mean()),
        ospa_card=float(ospa_vals[:, 2].mean()),
        per_target_ospa={i: float(np.mean(v)) for i, v in per_target.items()},
        fired_steps=fired,
        gated_steps=gated,
        compliant_fired=compliant,
        max_drift=max_drift,
        max_drift_fired=max_drift_fired,
        id_switches=dict(matcher.switches),
        track_rows=track_rows,
        gate_rows=gate_rows,
    )


def _run_seed(args):
    cfg, seed = args
    return run_tracking(cfg.with_seed(seed))


def run_campaign(cfg: RunConfig, seeds: Optional[Sequence[int]] = None, workers: Optional[int] = None) -> list[RunResult]:
    """Run ``cfg`` over several seeds, optionally in a process pool."""
    seeds = list(cfg.seeds if seeds is None else seeds)
    workers = cfg.workers if workers is None else workers
    jobs = [(cfg, s) for s in seeds]
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_seed, jobs))
    return [_run_seed(j) for j in jobs]


def summarize(results: Sequence[RunResult]) -> dict:
    ids = results[0].target_ids
    rm = {i: np.nanmean([r.rmse_xy[i] for r in results], axis=0).tolist() for i in ids}
    fired = sum(r.fired_steps for r in results)
    compliant = sum(r.compliant_fired for r in results)
    return {
        "n_runs": len(results),
        "rmse_xy": {str(i): rm[i] for i in ids},
        "ospa": {
            "mean": float(np.mean([r.ospa_mean for r in results])),
            "loc": float(np.mean([r.ospa_loc for r in results])),
            "card": float(np.mean([r.ospa_card for r in results])),
        },
        "gate": {
            "fired_steps": fired,
            "compliant_fired_steps": compliant,
            "compliance": 1.0 if fired == 0 else compliant / fired,
            "max_drift": float(max(r.max_drift for r in results)),
        },
    }


ABLATION_GATES = (True, False)
ABLATION_LIKELIHOODS = ("gaussian", "student_t")
ABLATION_TPMS = (False, True)


def ablation_cells(cfg: RunConfig):
    for gate_on in ABLATION_GATES:
        for lik in ABLATION_LIKELIHOODS:
            for adaptive in ABLATION_TPMS:
                cell = copy.deepcopy(cfg)
                cell.tracker = "safe_imm" if gate_on else "imm_mixture_only"
                cell.likelihood = lik
                cell.tpm = dataclasses.replace(cell.tpm, enabled=adaptive)
                name = f"gate={'on' if gate_on else 'off'},lik={lik},tpm={'adaptive' if adaptive else 'fixed'}"
                yield name, cell


def run_ablation(cfg: RunConfig, seeds: Optional[Sequence[int]] = None, workers: Optional[int] = None) -> dict:
    """Cross product gate x likelihood x TPM over shared (paired) seeds."""
    seeds = list(cfg.seeds if seeds is None else seeds)
    table = {}
    for name, cell in ablation_cells(cfg):
        res = run_campaign(cell, seeds, workers)
        summary = summarize(res)
        summary["seeds"] = seeds
        summary["per_seed_ospa"] = [r.ospa_mean for r in res]
        summary["per_seed_max_drift"] = [r.max_drift for r in res]
        summary["max_bound_excursion"] = float(max(r.max_drift for r in res))
        table[name] = summary
    return table


def bench_imm(n_steps: int = 20000, seed: int = 0) -> dict:
    """Single-track IMM-only throughput and per-step latency percentiles."""
    rng = np.random.default_rng(seed)
    R = 4.0 * np.eye(3)
    cfg = ImmConfig(likelihood="student_t")
    bank = default_bank(np.zeros(6), np.diag([4.0] * 3 + [100.0] * 3))
    zs = np.column_stack([0.8 * np.arange(n_steps) * 0.1, np.zeros(n_steps), np.zeros(n_steps)])
    zs += rng.normal(0.0, 2.0, size=zs.shape)
    for z in zs[:200]:  # warm-up (JIT, caches)
        bank, _, _ = imm_step(bank, z, R, 0.1, cfg)
    lat = np.empty(n_steps)
    t_all = time.perf_counter()
    for i, z in enumerate(zs):
        t0 = time.perf_counter()
        bank, _, _ = imm_step(bank, z, R, 0.1, cfg)
        lat[i] = time.perf_counter() - t0
    elapsed = time.perf_counter() - t_all
    return {
        "steps": n_steps,
        "steps_per_s": n_steps / elapsed,
        "latency_p50_us": float(np.percentile(lat, 50) * 1e6),
        "latency_p99_us": float(np.percentile(lat, 99) * 1e6),
    }


def bench_tracker(cfg: Optional[RunConfig] = None, repeats: int = 3) -> dict:
    """End-to-end frames/s of the GNN tracker on the default three-target scenario."""
    cfg = cfg or RunConfig()
    sc = cfg.scenario
    truth = generate_truth(sc)
    frames = generate_measurements(truth, sc)
    params = cfg.tracker_params()
    R = sc.R
    state = TrackerState()
    for f in frames[:20]:
        state, _ = tracker_step(state, f.z, sc.dt, R, params)
    lat = []
    t_all = time.perf_counter()
    for _ in range(repeats):
        state = TrackerState()
        for f in frames:
            t0 = time.perf_counter()
            state, _ = tracker_step(state, f.z, sc.dt, R, params)
            lat.append(time.perf_counter() - t0)
    elapsed = time.perf_counter() - t_all
    lat = np.array(lat)
    return {
        "frames": int(lat.size),
        "frames_per_s": lat.size / elapsed,
        "latency_p50_us": float(np.percentile(lat, 50) * 1e6),
        "latency_p99_us": float(np.percentile(lat, 99) * 1e6),
    }


def bench_scaling(track_counts: Sequence[int] = (1, 10, 25, 50, 100), n_steps: int = 200) -> dict:
    """IMM-only cost per frame when stepping ``n`` independent tracks."""
    R = 4.0 * np.eye(3)
    cfg = ImmConfig(likelihood="student_t")
    rng = np.random.default_rng(1)
    out = {}
    for n in track_counts:
        banks = [default_bank(np.zeros(6), np.diag([4.0] * 3 + [100.0] * 3)) for _ in range(n)]
        zs = rng.normal(0.0, 2.0, size=(n_steps, n, 3))
        t0 = time.perf_counter()
        for k in range(n_steps):
            for i in range(n):
                banks[i], _, _ = imm_step(banks[i], zs[k, i], R, 0.1, cfg)
        out[int(n)] = (time.perf_counter() - t0) / n_steps
    counts = np.array(list(out), dtype=float)
    times = np.array(list(out.values()))
    slope, intercept = np.polyfit(counts, times, 1)
    pred = slope * counts + intercept
    r2 = 1.0 - np.sum((times - pred) ** 2) / np.sum((times - times.mean()) ** 2) if len(counts) > 2 else 1.0
    return {"seconds_per_frame": {str(k): v for k, v in out.items()},
            "slope_s_per_track": float(slope), "linear_r2": float(r2)}
