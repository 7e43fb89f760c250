"""Scenario orchestration, metrics and result files.

Results are written as a CSV of per-iteration rows plus a JSON summary next
to it (``<stem>.summary.json``) holding per-run RMSE, totals and the config.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .dpf import (
    DistributedFilter, ExchangePolicy, GlobalReduction, PEState, make_backend,
)
from .resample import FilterDivergence, WeightedEnsemble
from .statemodel import I0, DynamicsParams, ObservationParams
from .synth import Scene, SceneSpec, Trajectory, generate_scene

CSV_HEADER = ("run_id", "iteration", "pe_eff", "pe_eff_frac", "err_px",
              "exchanged", "messages", "bytes")

MODES = ("tracking", "info_sharing")
ALGORITHMS = ("rna", "arna", "sir_independent")


@dataclass
class ScenarioConfig:
    mode: str = "tracking"
    algorithm: str = "arna"
    ratio: float = 0.1  # exchange ratio for algorithm="rna"
    m: int = 24
    n_p: int = 40
    frames: int = 50
    snr: float = 2.0
    width: int = 512
    height: int = 512
    seed: int = 0
    replicates: int = 1
    cutoff: float = 0.99
    backend: str = "sequential"
    # filter model
    sigma_pos: float = 0.02
    sigma_vel: float = 0.005
    sigma_i: float = 0.1
    sigma_psf: float = 1.5
    background: float = 10.0
    roi_radius: int = 5
    # ground truth
    speed: float = 1.0
    truth_sigma_pos: float = 0.02
    truth_sigma_vel: float = 0.005
    truth_sigma_i: float = 0.0
    noise_free: bool = False
    # initialization
    jitter: bool = True
    v_max: float = 2.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.m < 1 or self.n_p < 1:
            raise ValueError("m and n_p must be >= 1")
        if not 0.0 <= self.ratio <= 0.5:
            raise ValueError("ratio must lie in [0, 0.5]")
        if self.frames < 2:
            raise ValueError("need at least 2 frames (one to initialize, one to filter)")
        if self.replicates < 0:
            raise ValueError("replicates must be >= 0")

    @property
    def label(self) -> str:
        if self.algorithm == "rna":
            return f"rna{round(100 * self.ratio)}"
        return self.algorithm

    def dynamics(self) -> DynamicsParams:
        return DynamicsParams(self.sigma_pos, self.sigma_vel, self.sigma_i)

    def observation(self) -> ObservationParams:
        return ObservationParams(self.sigma_psf, self.background, self.roi_radius,
                                 self.width, self.height)

    def scene_spec(self) -> SceneSpec:
        return SceneSpec(self.frames, self.width, self.height, self.snr, self.speed,
                         DynamicsParams(self.truth_sigma_pos, self.truth_sigma_vel,
                                        self.truth_sigma_i),
                         self.sigma_psf, self.background, self.roi_radius, self.noise_free)

    def policy(self) -> ExchangePolicy:
        if self.algorithm == "arna":
            return ExchangePolicy("adaptive", cutoff=self.cutoff)
        ratio = self.ratio if self.algorithm == "rna" else 0.0
        return ExchangePolicy("fixed", fixed_ratio=ratio, cutoff=self.cutoff)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class IterationRow:
    run_id: str
    iteration: int
    pe_eff: float
    pe_eff_frac: float
    err_px: float
    exchanged: int
    messages: int
    bytes: int

    def as_tuple(self):
        return tuple(getattr(self, k) for k in CSV_HEADER)


@dataclass
class RunRecord:
    run_id: str
    seed: int
    rows: list[IterationRow] = field(default_factory=list)
    estimates: list = field(default_factory=list)
    rmse: float = float("nan")
    total_exchanged: int = 0
    total_messages: int = 0
    total_bytes: int = 0
    wall_time: float = 0.0
    diverged: bool = False
    reset_pes: int = 0
    config: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"run_id": self.run_id, "seed": self.seed, "iterations": len(self.rows),
                "rmse": self.rmse, "total_exchanged": self.total_exchanged,
                "total_messages": self.total_messages, "total_bytes": self.total_bytes,
                "wall_time": self.wall_time, "diverged": self.diverged,
                "reset_pes": self.reset_pes}


def seed_streams(seed: int, m: int):
    """Per-PE generators and the coordinator generator for one replicate."""
    pe = [np.random.default_rng(s) for s in np.random.SeedSequence([seed, 1]).spawn(m)]
    return pe, np.random.default_rng(np.random.SeedSequence([seed, 2]))


def _at_truth(truth, n, dyn: DynamicsParams, rng, jitter: bool):
    states = np.tile(np.asarray(truth, dtype=float), (n, 1))
    if jitter:
        states += rng.standard_normal(states.shape) * dyn.sigmas
        np.maximum(states[:, I0], 0.0, out=states[:, I0])
    return states


def _make_pes(all_states, rngs, m, n_p):
    log_w = -math.log(m * n_p)
    return [PEState(i, WeightedEnsemble(s, np.full(n_p, log_w),
                                        ids=np.arange(i * n_p, (i + 1) * n_p)), rngs[i])
            for i, s in enumerate(all_states)]


def init_tracking(cfg: ScenarioConfig, scene: Scene, rngs) -> list[PEState]:
    """Every particle on every PE at the frame-0 truth, optionally jittered."""
    truth = scene.trajectory.states[0]
    dyn = cfg.dynamics()
    states = [_at_truth(truth, cfg.n_p, dyn, rngs[i], cfg.jitter) for i in range(cfg.m)]
    return _make_pes(states, rngs, cfg.m, cfg.n_p)


def init_info_sharing(cfg: ScenarioConfig, scene: Scene, rngs) -> list[PEState]:
    """PE 0 at the truth, every other PE uniform over the state box."""
    truth = scene.trajectory.states[0]
    dyn = cfg.dynamics()
    states = [_at_truth(truth, cfg.n_p, dyn, rngs[0], cfg.jitter)]
    lo = np.array([0.0, 0.0, -cfg.v_max, -cfg.v_max, 0.0])
    hi = np.array([scene.width, scene.height, cfg.v_max, cfg.v_max, 2.0 * truth[I0]])
    for i in range(1, cfg.m):
        states.append(rngs[i].uniform(lo, hi, size=(cfg.n_p, 5)))
    return _make_pes(states, rngs, cfg.m, cfg.n_p)


def initial_reduction(cfg: ScenarioConfig, scene: Scene) -> GlobalReduction:
    eff = cfg.m if cfg.mode == "tracking" else 1.0
    return GlobalReduction.initial(cfg.m, eff, scene.trajectory.states[0])


def rmse(estimates, truth) -> float:
    """Root mean squared 2-D position error over frames."""
    est = np.asarray(estimates, dtype=float)
    ref = truth.states if isinstance(truth, Trajectory) else np.asarray(truth, dtype=float)
    if est.ndim == 1:
        est = est[None]
    if ref.ndim == 1:
        ref = ref[None]
    if len(est) != len(ref):
        raise ValueError(f"{len(est)} estimates vs {len(ref)} truth states")
    d = est[:, :2] - ref[:, :2]
    return float(np.sqrt(np.mean(np.sum(d * d, axis=1))))


def build_filter(cfg: ScenarioConfig, scene: Scene, seed: int, backend=None) -> DistributedFilter:
    rngs, coord = seed_streams(seed, cfg.m)
    init = init_tracking if cfg.mode == "tracking" else init_info_sharing
    pes = init(cfg, scene, rngs)
    return DistributedFilter(pes, cfg.dynamics(), cfg.observation(), cfg.policy(),
                             initial_reduction(cfg, scene), coord,
                             backend if backend is not None else make_backend(cfg.backend))


def run_replicate(cfg: ScenarioConfig, scene: Scene, seed: int, backend=None,
                  on_iteration=None) -> RunRecord:
    """Filter frames 1..K-1 of ``scene``; frame 0 seeds the initialization."""
    rec = RunRecord(f"{cfg.mode}-{cfg.label}-s{seed}", seed, config=asdict(cfg))
    filt = build_filter(cfg, scene, seed, backend)
    truth = scene.trajectory.states
    t0 = time.perf_counter()
    try:
        for k in range(1, len(scene.frames)):
            before = filt.counters.snapshot()
            red = filt.step(scene.frames[k])
            est = red.global_estimate
            rec.estimates.append(est)
            rec.reset_pes += sum(pe.diverged for pe in filt.pes)
            rec.rows.append(IterationRow(
                rec.run_id, k, red.pe_eff, red.pe_eff / cfg.m,
                float(np.hypot(*(est[:2] - truth[k, :2]))),
                filt.counters.particles - before.particles,
                filt.counters.messages - before.messages,
                filt.counters.bytes - before.bytes))
            if on_iteration is not None:
                on_iteration(filt, rec)
    except FilterDivergence:
        rec.diverged = True
    finally:
        if backend is None:
            filt.backend.close()
    rec.wall_time = time.perf_counter() - t0
    if rec.estimates:
        rec.rmse = rmse(rec.estimates, truth[1:len(rec.estimates) + 1])
    rec.total_exchanged = filt.counters.particles
    rec.total_messages = filt.counters.messages
    rec.total_bytes = filt.counters.bytes
    return rec


class SceneCache:
    """Scenes keyed by (scene spec, seed) so algorithm arms see identical data."""

    def __init__(self):
        self._scenes = {}

    def get(self, spec: SceneSpec, seed: int) -> Scene:
        key = (spec, seed)
        if key not in self._scenes:
            self._scenes[key] = generate_scene(spec, seed)
        return self._scenes[key]


def run_scenario(cfg: ScenarioConfig, scenes: SceneCache | None = None,
                 scene: Scene | None = None, on_iteration=None) -> list[RunRecord]:
    """One :class:`RunRecord` per replicate seed ``cfg.seed + r``.

    ``on_iteration(filter, record)`` is called after every filter step.
    """
    scenes = scenes or SceneCache()
    records = []
    for r in range(cfg.replicates):
        seed = cfg.seed + r
        sc = scene if scene is not None else scenes.get(cfg.scene_spec(), seed)
        records.append(run_replicate(cfg, sc, seed, on_iteration=on_iteration))
    return records


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_results(records: list[RunRecord], path) -> tuple[Path, Path]:
    """Write ``path`` (CSV rows) and ``<stem>.summary.json``; returns both paths."""
    if not records:
        raise ValueError("no records to write")
    path = Path(path)
    summary_path = path.with_name(path.stem + ".summary.json")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for rec in records:
                for row in rec.rows:
                    w.writerow([_fmt(v) for v in row.as_tuple()])
        with open(summary_path, "w") as fh:
            json.dump({"runs": [r.summary() for r in records],
                       "config": records[0].config}, fh, indent=2)
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path, summary_path


_PARSERS = {"run_id": str, "iteration": int, "pe_eff": float, "pe_eff_frac": float,
            "err_px": float, "exchanged": int, "messages": int, "bytes": int}


def read_results(path) -> list[IterationRow]:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [IterationRow(*(_PARSERS[k](v) for k, v in zip(CSV_HEADER, line)))
                for line in reader]


def group_runs(rows: list[IterationRow]) -> dict[str, list[IterationRow]]:
    runs: dict[str, list[IterationRow]] = {}
    for row in rows:
        runs.setdefault(row.run_id, []).append(row)
    return runs


def frac_at(records: list[RunRecord], iteration: int) -> np.ndarray:
    """pe_eff/M of every record at the given iteration index."""
    out = []
    for rec in records:
        hit = [r.pe_eff_frac for r in rec.rows if r.iteration == iteration]
        out.append(hit[0] if hit else np.nan)
    return np.array(out)
