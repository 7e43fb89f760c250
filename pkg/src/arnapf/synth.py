"""Synthetic single-spot image sequences with known ground truth.

Scene container (``.npz``, written by :func:`save_scene`)::

    format      int     container version, currently 1
    width       int     frame width in pixels
    height      int     frame height in pixels
    snr         float   target signal-to-noise ratio
    seed        int     seed the scene was generated from (-1 if unknown)
    trajectory  (K, 5)  float64 ground-truth states (x, y, vx, vy, i0)
    frames      (K, H, W) float64 photon counts, frames[k, v, u]
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .statemodel import (
    I0, VX, VY, X, Y, DynamicsParams, Frame, ObservationParams, StateVector,
    propagate,
)

SCENE_FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray  # (K, 5)

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        if s.ndim != 2 or s.shape[1] != 5 or len(s) < 1:
            raise ValueError("trajectory must be a non-empty (K, 5) array")
        object.__setattr__(self, "states", s)

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, k) -> StateVector:
        return StateVector.from_array(self.states[k])


@dataclass(eq=False)
class Scene:
    trajectory: Trajectory
    frames: list[Frame]
    snr: float
    seed: int = -1

    def __post_init__(self):
        if len(self.frames) != len(self.trajectory):
            raise ValueError("one frame per trajectory state required")
        shapes = {f.pixels.shape for f in self.frames}
        if len(shapes) != 1:
            raise ValueError("all frames must share one shape")

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height


def snr_to_intensity(snr: float, background: float) -> float:
    """Peak intensity giving ``snr = i0 / sqrt(i0 + background)``."""
    if snr <= 0:
        raise ValueError("snr must be > 0")
    s2 = snr * snr
    return 0.5 * (s2 + math.sqrt(s2 * s2 + 4.0 * s2 * background))


def _reflect(pos, vel, lo, hi):
    if hi <= lo:
        return min(max(pos, lo), hi), vel
    # mirror until inside; a single step never overshoots by more than the span
    # in practice, but loop for safety with large noise
    for _ in range(64):
        if pos < lo:
            pos, vel = 2 * lo - pos, abs(vel)
        elif pos > hi:
            pos, vel = 2 * hi - pos, -abs(vel)
        else:
            break
    return min(max(pos, lo), hi), vel


def generate_trajectory(k: int, init: StateVector, p: DynamicsParams,
                        bounds: tuple[int, int], rng: np.random.Generator,
                        margin: float = 4.5) -> Trajectory:
    """Nearly-constant-velocity trajectory kept inside ``[margin, dim - margin]``.

    A position that would leave the box is mirrored back and the matching
    velocity component flips sign.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    width, height = bounds
    s0 = init.array
    if not (margin <= s0[X] <= width - margin and margin <= s0[Y] <= height - margin):
        raise ValueError("initial state must lie inside the bounds")
    out = np.empty((k, 5))
    out[0] = s0
    for t in range(1, k):
        s = propagate(out[t - 1], p, rng)
        s[X], s[VX] = _reflect(s[X], s[VX], margin, width - margin)
        s[Y], s[VY] = _reflect(s[Y], s[VY], margin, height - margin)
        out[t] = s
    return Trajectory(out)


def mean_frame(truth, o: ObservationParams) -> np.ndarray:
    """Expected counts of every pixel; the Gaussian factorizes over rows and columns."""
    s = np.asarray(truth, dtype=float)
    two_s2 = 2.0 * o.sigma_psf ** 2
    gx = np.exp(-(np.arange(o.width) - s[X]) ** 2 / two_s2)
    gy = np.exp(-(np.arange(o.height) - s[Y]) ** 2 / two_s2)
    return o.background + s[I0] * np.outer(gy, gx)


def render_frame(truth, o: ObservationParams, rng: np.random.Generator | None,
                 noise_free: bool = False) -> Frame:
    """Poisson-noisy image of one spot; ``noise_free`` returns the mean image."""
    lam = mean_frame(truth.array if isinstance(truth, StateVector) else truth, o)
    if noise_free:
        return Frame(lam)
    return Frame(rng.poisson(lam).astype(float))


@dataclass(frozen=True)
class SceneSpec:
    """Everything that determines a scene besides its seed."""

    frames: int = 50
    width: int = 512
    height: int = 512
    snr: float = 2.0
    speed: float = 1.0  # initial speed, pixels/frame
    truth_dynamics: DynamicsParams = DynamicsParams(0.02, 0.005, 0.0)
    sigma_psf: float = 1.5
    background: float = 10.0
    roi_radius: int = 5
    noise_free: bool = False

    def observation(self) -> ObservationParams:
        return ObservationParams(self.sigma_psf, self.background, self.roi_radius,
                                 self.width, self.height)


def generate_scene(spec: SceneSpec, seed: int) -> Scene:
    """Random start inside the central half of the frame, random heading."""
    o = spec.observation()
    ss = np.random.SeedSequence([seed, 0])
    traj_rng, pix_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    i0 = snr_to_intensity(spec.snr, spec.background)
    x0 = traj_rng.uniform(0.25 * spec.width, 0.75 * spec.width)
    y0 = traj_rng.uniform(0.25 * spec.height, 0.75 * spec.height)
    heading = traj_rng.uniform(0.0, 2 * math.pi)
    init = StateVector(x0, y0, spec.speed * math.cos(heading),
                       spec.speed * math.sin(heading), i0)
    traj = generate_trajectory(spec.frames, init, spec.truth_dynamics,
                               (spec.width, spec.height), traj_rng,
                               margin=3 * spec.sigma_psf)
    frames = [render_frame(s, o, pix_rng, spec.noise_free) for s in traj.states]
    return Scene(traj, frames, spec.snr, seed)


def save_scene(scene: Scene, path) -> Path:
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            np.savez_compressed(
                fh, format=SCENE_FORMAT_VERSION, width=scene.width, height=scene.height,
                snr=scene.snr, seed=scene.seed, trajectory=scene.trajectory.states,
                frames=np.stack([f.pixels for f in scene.frames]))
    except OSError as exc:
        raise OSError(f"cannot write scene to {path}: {exc}") from exc
    return path


def load_scene(path) -> Scene:
    path = Path(path)
    with np.load(path) as data:
        version = int(data["format"])
        if version != SCENE_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported scene format {version}")
        frames = [Frame(f) for f in data["frames"]]
        dims = int(data["width"]), int(data["height"])
        scene = Scene(Trajectory(data["trajectory"]), frames, float(data["snr"]),
                      int(data["seed"]))
    if (scene.width, scene.height) != dims:
        raise ValueError(f"{path}: frame dims disagree with header")
    return scene
