"""Three-target maneuvering scenario generator and measurement synthesis.

Truth is 9-dimensional per target, ``[p(3), v(3), a(3)]`` in the grouped
layout, with ``a`` the acceleration in force over the step that starts at
that sample. Motion stays in the xy-plane.

The noise profile is a ``(sigma_pos, sigma_vel)`` pair. ``sigma_pos`` is the
per-axis measurement noise. ``sigma_vel`` perturbs the *truth*: a
piecewise-linear velocity offset with knots every ``jitter_period`` seconds,
knot values drawn from ``N(0, sigma_vel^2)`` on x and y (the first knot is
zero so every target starts on its nominal state).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

CLUTTER = -1


@dataclass
class NoiseProfile:
    sigma_pos: float = 2.0
    sigma_vel: float = 0.01


PROFILES = {
    "profile1": NoiseProfile(2.0, 0.01),
    "profile2": NoiseProfile(0.01, 2.0),
    "high_noise": NoiseProfile(0.30, 8.0),
}


@dataclass
class Segment:
    """Body-frame acceleration held over ``[t0, t1)``.

    ``longitudinal`` acts along the velocity; ``lateral`` turns the velocity
    at constant speed (positive = counter-clockwise). At most one may be
    non-zero.
    """

    t0: float
    t1: float
    longitudinal: float = 0.0
    lateral: float = 0.0

    def __post_init__(self):
        if self.t1 <= self.t0:
            raise ValueError("segment must have t1 > t0")
        if self.longitudinal and self.lateral:
            raise ValueError("a segment is either longitudinal or lateral, not both")


@dataclass
class TargetSpec:
    id: int
    position: tuple = (0.0, 0.0, 0.0)
    velocity: tuple = (8.0, 0.0, 0.0)
    segments: list = field(default_factory=list)


def default_targets() -> list[TargetSpec]:
    """T1 straight CV, T2 a 90 degree turn at 3 m/s^2, T3 +-6 m/s^2 bursts."""
    t2_speed = 3.0 / (math.pi / 2 / 3.0)  # 90 degrees in 3 s at 3 m/s^2 lateral
    return [
        TargetSpec(1, (-100.0, 60.0, 0.0), (8.0, 0.0, 0.0)),
        TargetSpec(2, (-100.0, 0.0, 0.0), (t2_speed, 0.0, 0.0), [Segment(10.0, 13.0, lateral=3.0)]),
        TargetSpec(
            3,
            (-100.0, -60.0, 0.0),
            (8.0, 0.0, 0.0),
            [Segment(8.0, 10.0, longitudinal=6.0), Segment(20.0, 22.0, longitudinal=-6.0)],
        ),
    ]


@dataclass
class ScenarioConfig:
    dt: float = 0.1
    duration: float = 30.0
    targets: list = field(default_factory=default_targets)
    noise_profile: NoiseProfile = field(default_factory=NoiseProfile)
    clutter_rate: float = 0.0
    jamming: bool = False
    detection_prob: float = 1.0
    seed: int = 0
    jitter_period: float = 1.0
    jam_fraction: float = 0.05
    jam_scale: float = 10.0
    region_margin: float = 20.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        steps = self.duration / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError("duration must be an integer number of steps")
        if not 0.0 < self.detection_prob <= 1.0:
            raise ValueError("detection_prob must lie in (0, 1]")
        if self.clutter_rate < 0:
            raise ValueError("clutter_rate must be non-negative")
        if self.jitter_period <= 0:
            raise ValueError("jitter_period must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def R(self) -> np.ndarray:
        return self.noise_profile.sigma_pos**2 * np.eye(3)


@dataclass
class TruthTrajectory:
    target_id: int
    times: np.ndarray
    states: np.ndarray  # (K, 9)

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, 0:3]

    @property
    def velocities(self) -> np.ndarray:
        return self.states[:, 3:6]

    @property
    def accelerations(self) -> np.ndarray:
        return self.states[:, 6:9]


@dataclass
class MeasurementFrame:
    step: int
    time: float
    z: np.ndarray  # (K, 3)
    source: np.ndarray  # (K,) target id or CLUTTER


def _rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    truth_ss, meas_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(truth_ss), np.random.default_rng(meas_ss)


def _active(segments: Sequence[Segment], t: float, eps: float) -> Optional[Segment]:
    for s in segments:
        if s.t0 - eps <= t < s.t1 - eps:
            return s
    return None


def _nominal(spec: TargetSpec, n: int, dt: float) -> np.ndarray:
    out = np.zeros((n, 9))
    p = np.array(spec.position, dtype=float)
    v = np.array(spec.velocity, dtype=float)
    eps = 1e-9 * dt
    for k in range(n):
        t = k * dt
        seg = _active(spec.segments, t, eps)
        speed = math.hypot(v[0], v[1])
        a = np.zeros(3)
        out[k, 0:3] = p
        out[k, 3:6] = v
        if seg is not None and seg.lateral and speed > 0:
            w = seg.lateral / speed
            a[0], a[1] = -w * v[1], w * v[0]
            out[k, 6:9] = a
            c, s = math.cos(w * dt), math.sin(w * dt)
            vx, vy = v[0], v[1]
            p = p + np.array([(vx * s - vy * (1 - c)) / w, (vy * s + vx * (1 - c)) / w, v[2] * dt])
            v = np.array([vx * c - vy * s, vx * s + vy * c, v[2]])
        else:
            if seg is not None and seg.longitudinal and speed > 0:
                a = seg.longitudinal * v / np.linalg.norm(v)
            out[k, 6:9] = a
            p = p + v * dt + 0.5 * a * dt * dt
            v = v + a * dt
    return out


def _velocity_jitter(sigma: float, n: int, dt: float, period: float, rng: np.random.Generator) -> np.ndarray:
    """Piecewise-linear xy velocity offset integrated exactly; returns ``(n, 9)`` offsets."""
    out = np.zeros((n, 9))
    if sigma <= 0:
        return out
    steps_per_knot = max(1, int(round(period / dt)))
    n_knots = (n - 1) // steps_per_knot + 2
    knots = np.zeros((n_knots, 3))
    knots[1:, :2] = rng.normal(0.0, sigma, size=(n_knots - 1, 2))
    slope = np.diff(knots, axis=0) / (steps_per_knot * dt)
    p = np.zeros(3)
    for k in range(n):
        seg = k // steps_per_knot
        frac = (k - seg * steps_per_knot) * dt
        v = knots[seg] + slope[seg] * frac
        a = slope[seg]
        out[k, 0:3] = p
        out[k, 3:6] = v
        out[k, 6:9] = a
        p = p + v * dt + 0.5 * a * dt * dt
    return out


def generate_truth(cfg: ScenarioConfig) -> list[TruthTrajectory]:
    """Deterministic truth for every target in ``cfg`` (seeded velocity jitter included)."""
    n = cfg.n_steps
    times = np.arange(n) * cfg.dt
    rng, _ = _rngs(cfg.seed)
    out = []
    for spec in cfg.targets:
        states = _nominal(spec, n, cfg.dt)
        states += _velocity_jitter(cfg.noise_profile.sigma_vel, n, cfg.dt, cfg.jitter_period, rng)
        out.append(TruthTrajectory(spec.id, times, states))
    return out


def surveillance_region(truth: Sequence[TruthTrajectory], margin: float) -> tuple[np.ndarray, np.ndarray]:
    pts = np.vstack([t.positions for t in truth])
    return pts.min(axis=0) - margin, pts.max(axis=0) + margin


def generate_measurements(truth: Sequence[TruthTrajectory], cfg: ScenarioConfig) -> list[MeasurementFrame]:
    """Per-step detection sets: noisy target positions plus Poisson clutter."""
    _, rng = _rngs(cfg.seed)
    sigma = cfg.noise_profile.sigma_pos
    lo, hi = surveillance_region(truth, cfg.region_margin)
    frames = []
    for k in range(cfg.n_steps):
        zs, src = [], []
        for tr in truth:
            detected = rng.random() < cfg.detection_prob
            noise = rng.normal(0.0, 1.0, size=3)
            jammed = cfg.jamming and rng.random() < cfg.jam_fraction
            if not detected:
                continue
            scale = sigma * (cfg.jam_scale if jammed else 1.0)
            zs.append(tr.positions[k] + scale * noise)
            src.append(tr.target_id)
        n_clutter = rng.poisson(cfg.clutter_rate) if cfg.clutter_rate > 0 else 0
        for _ in range(n_clutter):
            zs.append(rng.uniform(lo, hi))
            src.append(CLUTTER)
        z = np.array(zs, dtype=float).reshape(-1, 3)
        frames.append(MeasurementFrame(k, k * cfg.dt, z, np.array(src, dtype=np.int64)))
    return frames


def write_truth_csv(path, truth: Sequence[TruthTrajectory]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "time", "target_id", "px", "py", "pz", "vx", "vy", "vz", "ax", "ay", "az"])
        for tr in truth:
            for k, (t, s) in enumerate(zip(tr.times, tr.states)):
                w.writerow([k, f"{t:.6f}", tr.target_id] + [f"{x:.9g}" for x in s])


def write_measurements_csv(path, frames: Sequence[MeasurementFrame]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "time", "source", "px", "py", "pz"])
        for f in frames:
            for z, s in zip(f.z, f.source):
                label = "clutter" if s == CLUTTER else int(s)
                w.writerow([f.step, f"{f.time:.6f}", label] + [f"{x:.9g}" for x in z])


def read_measurements_csv(path) -> list[MeasurementFrame]:
    rows: dict[int, list] = {}
    times: dict[int, float] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            k = int(r["step"])
            times[k] = float(r["time"])
            src = CLUTTER if r["source"] == "clutter" else int(r["source"])
            rows.setdefault(k, []).append((src, float(r["px"]), float(r["py"]), float(r["pz"])))
    frames = []
    for k in sorted(times):
        data = rows[k]
        frames.append(MeasurementFrame(k, times[k], np.array([d[1:] for d in data]).reshape(-1, 3),
                                       np.array([d[0] for d in data], dtype=np.int64)))
    return frames
