"""Object state, nearly-constant-velocity dynamics and the Gaussian-spot
Poisson observation model.

States are handled as float arrays whose last axis holds the five
components ``(x, y, vx, vy, i0)``, so every function here works on a single
state of shape ``(5,)`` as well as on an ensemble of shape ``(N, 5)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy

X, Y, VX, VY, I0 = range(5)
STATE_DIM = 5

# Keeps ln(lambda) finite when background == 0 and the spot contributes nothing.
_MIN_RATE = np.finfo(float).tiny

# Nats subtracted from the all-background ROI value for a state whose window
# misses the frame completely.
OUTSIDE_PENALTY = 50.0


@dataclass(frozen=True)
class StateVector:
    x: float
    y: float
    vx: float
    vy: float
    i0: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ValueError("state position must be finite")
        if self.i0 < 0:
            raise ValueError(f"i0 must be >= 0, got {self.i0}")

    @property
    def array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.vx, self.vy, self.i0], dtype=float)

    @classmethod
    def from_array(cls, a) -> "StateVector":
        a = np.asarray(a, dtype=float)
        if a.shape != (STATE_DIM,):
            raise ValueError(f"expected shape (5,), got {a.shape}")
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class DynamicsParams:
    """Process-noise standard deviations of the nearly-constant-velocity model."""

    sigma_pos: float = 0.5
    sigma_vel: float = 0.2
    sigma_i: float = 2.0
    dt: float = 1.0

    def __post_init__(self):
        if min(self.sigma_pos, self.sigma_vel, self.sigma_i) < 0:
            raise ValueError("noise standard deviations must be >= 0")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([self.sigma_pos, self.sigma_pos, self.sigma_vel,
                         self.sigma_vel, self.sigma_i])


@dataclass(frozen=True)
class ObservationParams:
    sigma_psf: float = 1.5
    background: float = 10.0
    roi_radius: int = 5
    width: int = 512
    height: int = 512

    def __post_init__(self):
        if self.sigma_psf <= 0:
            raise ValueError("sigma_psf must be > 0")
        if self.background < 0:
            raise ValueError("background must be >= 0")
        if self.roi_radius < 3 * self.sigma_psf:
            raise ValueError("roi_radius must be >= 3 * sigma_psf")
        if self.width < 1 or self.height < 1:
            raise ValueError("frame dimensions must be positive")


@dataclass(frozen=True, eq=False)
class Frame:
    """One image. ``pixels[v, u]`` is the count at column ``u``, row ``v``."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=float)
        if p.ndim != 2:
            raise ValueError("pixels must be a 2-D grid")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("pixel counts must be finite and >= 0")
        object.__setattr__(self, "pixels", p)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def propagate(states, p: DynamicsParams, rng: np.random.Generator) -> np.ndarray:
    """Advance one or many states by one time step with additive Gaussian noise.

    Noise is always drawn (even for zero sigmas) so that the stream position
    after the call depends only on the number of states.
    """
    s = np.asarray(states, dtype=float)
    noise = rng.standard_normal(s.shape) * p.sigmas
    out = s + noise
    out[..., X] += s[..., VX] * p.dt
    out[..., Y] += s[..., VY] * p.dt
    np.maximum(out[..., I0], 0.0, out=out[..., I0])
    return out


def expected_intensity(state, o: ObservationParams, u, v):
    """Mean photon count at pixel ``(u, v)`` for a spot described by ``state``."""
    s = np.asarray(state, dtype=float)
    d2 = (np.asarray(u, dtype=float) - s[..., X]) ** 2 + (np.asarray(v, dtype=float) - s[..., Y]) ** 2
    return o.background + s[..., I0] * np.exp(-d2 / (2.0 * o.sigma_psf ** 2))


def _roi(states: np.ndarray, frame: Frame, o: ObservationParams):
    """Gather the clipped ROI of every state.

    Returns counts, expected rates and validity mask, each ``(N, 2r+1, 2r+1)``
    indexed ``[n, row, col]``.
    """
    r = int(o.roi_radius)
    offs = np.arange(-r, r + 1)
    cx = np.floor(states[:, X] + 0.5)
    cy = np.floor(states[:, Y] + 0.5)
    # huge or non-finite coordinates just produce an empty window
    cx = np.clip(np.nan_to_num(cx, nan=-10 * r), -10 * r, frame.width + 10 * r)
    cy = np.clip(np.nan_to_num(cy, nan=-10 * r), -10 * r, frame.height + 10 * r)
    u = cx[:, None].astype(np.int64) + offs
    v = cy[:, None].astype(np.int64) + offs
    ok_u = (u >= 0) & (u < frame.width)
    ok_v = (v >= 0) & (v < frame.height)
    mask = ok_v[:, :, None] & ok_u[:, None, :]
    z = frame.pixels[np.clip(v, 0, frame.height - 1)[:, :, None],
                     np.clip(u, 0, frame.width - 1)[:, None, :]]
    two_s2 = 2.0 * o.sigma_psf ** 2
    gx = np.exp(-(u - states[:, X:X + 1]) ** 2 / two_s2)
    gy = np.exp(-(v - states[:, Y:Y + 1]) ** 2 / two_s2)
    lam = o.background + states[:, I0, None, None] * gy[:, :, None] * gx[:, None, :]
    return z, np.maximum(lam, _MIN_RATE), mask


def _poisson_terms(z, lam):
    return xlogy(z, lam) - lam - gammaln(z + 1.0)


def outside_floor(o: ObservationParams) -> float:
    """Log-likelihood assigned to a state whose ROI misses the frame."""
    b = max(o.background, _MIN_RATE)
    n = (2 * int(o.roi_radius) + 1) ** 2
    return float(n * _poisson_terms(o.background, b) - OUTSIDE_PENALTY)


def log_likelihood(states, frame: Frame, o: ObservationParams):
    """Poisson log-likelihood of the frame inside the ROI around each state.

    Sums ``z ln(lam) - lam - ln Gamma(z+1)`` over the square window of
    half-width ``roi_radius`` centred on the rounded position, clipped to the
    frame. Returns a float for a single state, an ``(N,)`` array otherwise.
    """
    s = np.asarray(states, dtype=float)
    single = s.ndim == 1
    s = np.atleast_2d(s)
    z, lam, mask = _roi(s, frame, o)
    ll = np.where(mask, _poisson_terms(z, lam), 0.0).sum(axis=(1, 2))
    ll = np.where(mask.any(axis=(1, 2)), ll, outside_floor(o))
    return float(ll[0]) if single else ll


def log_likelihood_ratio(states, frame: Frame, o: ObservationParams):
    """Log-likelihood of the whole frame relative to the background-only model.

    Equal to the full-frame Poisson log-likelihood up to a constant that does
    not depend on the state, so particles whose windows cover different pixels
    are compared on the same data. This is the weight update used by the
    filters. A state whose window misses the frame gets ``-OUTSIDE_PENALTY``.
    """
    s = np.asarray(states, dtype=float)
    single = s.ndim == 1
    s = np.atleast_2d(s)
    z, lam, mask = _roi(s, frame, o)
    bg = max(o.background, _MIN_RATE)
    terms = xlogy(z, lam) - xlogy(z, bg) - (lam - bg)
    ll = np.where(mask, terms, 0.0).sum(axis=(1, 2))
    ll = np.where(mask.any(axis=(1, 2)), ll, -OUTSIDE_PENALTY)
    return float(ll[0]) if single else ll
