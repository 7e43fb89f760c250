"""Distributed SIR over M processing elements (PEs): RNA and adaptive ARNA.

One iteration, as seen by PE ``m``:

1. agree on the ring and the exchange count ``n_ex`` (ARNA: fresh random ring,
   ``n_ex`` from the previous iteration's PE_eff),
2. send ``n_ex`` random particles to the ring successor, receive as many from
   the predecessor,
3. divide the carried weights by the previous global weight ``W_{k-1}``,
   propagate, reweight, form the local estimate and the local weight sum
   ``W_k^(m)``, resample locally and give every particle weight ``W_k^(m)``,
4. report estimate and weight sum to the coordinator, which reduces and
   broadcasts the :class:`GlobalReduction`.

Weight sums travel as logarithms; :func:`master_reduce` is the linear-domain
reduction and :func:`reduce_log` wraps it with a max shift.
"""
from __future__ import annotations

import math
import queue
import threading
from dataclasses import dataclass, field, replace

import numpy as np

from .resample import (
    FilterDivergence, WeightedEnsemble, estimate, normalize, systematic_resample,
    weight_update,
)
from .statemodel import DynamicsParams, Frame, ObservationParams, propagate
from .topology import RingPermutation, identity_ring, randomize_ring

# five state doubles + weight double + int32 owner id
PARTICLE_BYTES = 6 * 8 + 4

# absorbs representation error in ratio * n_p before flooring
_FLOOR_EPS = 1e-9


@dataclass(eq=False)
class PEState:
    id: int
    ensemble: WeightedEnsemble
    rng: np.random.Generator
    log_weight_sum: float = 0.0
    local_estimate: np.ndarray | None = None
    diverged: bool = False

    @property
    def local_weight_sum(self) -> float:
        return math.exp(self.log_weight_sum)


@dataclass(frozen=True, eq=False)
class GlobalReduction:
    global_estimate: np.ndarray
    log_total_weight: float
    pe_eff: float

    @property
    def total_weight(self) -> float:
        return math.exp(self.log_total_weight)

    @classmethod
    def initial(cls, m: int, pe_eff: float, state=None) -> "GlobalReduction":
        est = np.zeros(5) if state is None else np.asarray(state, dtype=float)
        return cls(est, 0.0, float(pe_eff))


@dataclass(frozen=True)
class ExchangePolicy:
    mode: str = "fixed"  # "fixed" or "adaptive"
    fixed_ratio: float = 0.1
    cutoff: float = 0.99

    def __post_init__(self):
        if self.mode not in ("fixed", "adaptive"):
            raise ValueError(f"unknown exchange mode {self.mode!r}")
        if not 0.0 <= self.fixed_ratio <= 0.5:
            raise ValueError("fixed_ratio must lie in [0, 0.5]")
        if not 0.0 < self.cutoff <= 1.0:
            raise ValueError("cutoff must lie in (0, 1]")

    def count(self, n_p: int, m: int, prev: GlobalReduction) -> int:
        if self.mode == "fixed":
            return fixed_exchange_count(n_p, self.fixed_ratio)
        return adaptive_exchange_count(n_p, prev.pe_eff, m, self.cutoff)


@dataclass
class CommCounters:
    """Payload traffic plus coordinator (reduce/broadcast) message count."""

    messages: int = 0
    particles: int = 0
    bytes: int = 0
    control_messages: int = 0

    def record_exchange(self, m: int, n_ex: int):
        if n_ex > 0:
            self.messages += m
            self.particles += m * n_ex
            self.bytes += m * n_ex * PARTICLE_BYTES
        self.control_messages += 2 * m

    def snapshot(self) -> "CommCounters":
        return replace(self)


def pe_eff(per_pe_weight_sums) -> float:
    """Effective number of PEs, ``(sum W)^2 / sum W^2``."""
    w = np.asarray(per_pe_weight_sums, dtype=float)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weight sums must be finite and >= 0")
    peak = w.max(initial=0.0)
    if peak <= 0:
        raise FilterDivergence("no PE carries any weight")
    w = w / peak
    return float(min(max(w.sum() ** 2 / np.dot(w, w), 1.0), len(w)))


def fixed_exchange_count(n_p: int, ratio: float) -> int:
    return int(math.floor(ratio * n_p + _FLOOR_EPS))


def adaptive_exchange_count(n_p: int, pe_eff: float, m: int, cutoff: float = 0.99) -> int:
    """Particles each PE sends: half of ``n_p`` at PE_eff = 1, none at PE_eff = M."""
    if m <= 1:
        return 0
    if pe_eff / m > cutoff:
        return 0
    pe_eff = min(max(pe_eff, 1.0), m)
    ratio = 0.5 - 0.5 * (pe_eff - 1.0) / (m - 1.0)
    return max(int(math.floor(n_p * ratio + _FLOOR_EPS)), 0)


def select_outgoing(e: WeightedEnsemble, n_ex: int, rng: np.random.Generator):
    """Split off a uniform random ``n_ex``-subset; returns ``(outgoing, remaining)``.

    Both parts keep the original particle order. ``n_ex == 0`` draws nothing
    from ``rng``.
    """
    n = len(e)
    if not 0 <= n_ex <= n:
        raise ValueError(f"cannot send {n_ex} of {n} particles")
    if n_ex == 0:
        return e.take(np.arange(0)), e
    chosen = np.zeros(n, dtype=bool)
    chosen[rng.choice(n, size=n_ex, replace=False)] = True
    return e.take(np.flatnonzero(chosen)), e.take(np.flatnonzero(~chosen))


def exchange_step(pes: list[PEState], ring: RingPermutation, n_ex: int,
                  counters: CommCounters | None = None) -> list[PEState]:
    """Every PE sends ``n_ex`` particles to its successor, receives from its predecessor."""
    if n_ex == 0:
        return pes
    split = [select_outgoing(pe.ensemble, n_ex, pe.rng) for pe in pes]
    for pe in pes:
        _, keep = split[pe.id]
        incoming, _ = split[ring.predecessor(pe.id)]
        pe.ensemble = WeightedEnsemble.concat([keep, incoming])
    return pes


def local_update(pe: PEState, frame: Frame, dyn: DynamicsParams, obs: ObservationParams,
                 log_total_prev: float) -> PEState:
    """Renormalize by ``W_{k-1}``, propagate, reweight, estimate, resample, reset weights."""
    e = pe.ensemble
    e = WeightedEnsemble(e.states, e.log_weights - log_total_prev, e.ids)
    n = len(e)
    if not np.any(np.isfinite(e.log_weights)):
        # zero-mass PE: keep it moving, flat weights, contributes nothing
        states = propagate(e.states, dyn, pe.rng)
        pe.ensemble = WeightedEnsemble(states, np.full(n, -np.inf), e.ids)
        pe.local_estimate = states.mean(axis=0)
        pe.log_weight_sum = -np.inf
        pe.diverged = True
        return pe
    moved, log_w = weight_update(e, frame, dyn, obs, pe.rng)
    local = normalize(moved)
    pe.local_estimate = estimate(local)
    res = systematic_resample(local, pe.rng)
    res.log_weights = np.full(n, log_w)
    pe.ensemble = res
    pe.log_weight_sum = float(log_w)
    pe.diverged = False
    return pe


def master_reduce(local_estimates, local_weight_sums) -> GlobalReduction:
    """Weight-sum-weighted mean of the local estimates, total weight and PE_eff."""
    w = np.asarray(local_weight_sums, dtype=float)
    x = np.asarray(local_estimates, dtype=float).reshape(len(w), -1)
    eff = pe_eff(w)
    total = float(w.sum())
    return GlobalReduction((w / total) @ x, math.log(total), eff)


def reduce_log(local_estimates, log_weight_sums) -> GlobalReduction:
    lw = np.asarray(log_weight_sums, dtype=float)
    shift = lw.max(initial=-np.inf)
    if not np.isfinite(shift):
        raise FilterDivergence("every PE reports zero weight")
    r = master_reduce(local_estimates, np.exp(lw - shift))
    return replace(r, log_total_weight=r.log_total_weight + float(shift))


def _check_sizes(pes, n_p):
    sizes = [len(pe.ensemble) for pe in pes]
    assert all(s == n_p for s in sizes), f"particle count not conserved: {sizes}"


class SequentialBackend:
    """Runs the PEs one after another in id order; the reference semantics."""

    name = "sequential"

    def step(self, pes, ring, n_ex, frame, dyn, obs, prev: GlobalReduction,
             counters: CommCounters | None = None):
        n_p = len(pes[0].ensemble)
        exchange_step(pes, ring, n_ex)
        for pe in pes:
            local_update(pe, frame, dyn, obs, prev.log_total_weight)
        _check_sizes(pes, n_p)
        if counters is not None:
            counters.record_exchange(len(pes), n_ex)
        red = reduce_log([pe.local_estimate for pe in pes], [pe.log_weight_sum for pe in pes])
        return pes, red

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ThreadedBackend:
    """One long-lived worker thread per PE, talking through mailboxes.

    The coordinator posts the iteration's ring and ``n_ex`` to every worker,
    each worker sends its outgoing particles to its successor's mailbox,
    waits for its predecessor's, computes locally and reports back. Collecting
    all M reports is the barrier; the reduction is done in PE id order so the
    result matches :class:`SequentialBackend` bit for bit.
    """

    name = "parallel"

    def __init__(self):
        self._pes = None
        self._threads = []
        self._commands = []
        self._mailboxes = []
        self._reports = queue.Queue()

    def _start(self, pes):
        self.close()
        self._pes = pes
        m = len(pes)
        self._commands = [queue.Queue() for _ in range(m)]
        self._mailboxes = [queue.Queue() for _ in range(m)]
        self._reports = queue.Queue()
        self._threads = [threading.Thread(target=self._worker, args=(pe,), daemon=True,
                                          name=f"pe-{pe.id}") for pe in pes]
        for t in self._threads:
            t.start()

    def _worker(self, pe: PEState):
        while True:
            cmd = self._commands[pe.id].get()
            if cmd is None:
                return
            ring, n_ex, frame, dyn, obs, log_total_prev = cmd
            try:
                out, keep = select_outgoing(pe.ensemble, n_ex, pe.rng)
                if n_ex > 0:
                    self._mailboxes[ring.successor(pe.id)].put(out)
                    incoming = self._mailboxes[pe.id].get()
                    pe.ensemble = WeightedEnsemble.concat([keep, incoming])
                local_update(pe, frame, dyn, obs, log_total_prev)
                self._reports.put((pe.id, None))
            except BaseException as exc:  # forwarded to the coordinator
                self._reports.put((pe.id, exc))

    def step(self, pes, ring, n_ex, frame, dyn, obs, prev: GlobalReduction,
             counters: CommCounters | None = None):
        if self._pes is not pes or len(self._threads) != len(pes):
            self._start(pes)
        n_p = len(pes[0].ensemble)
        cmd = (ring, n_ex, frame, dyn, obs, prev.log_total_weight)
        for q in self._commands:
            q.put(cmd)
        errors = []
        for _ in pes:
            _, exc = self._reports.get()
            if exc is not None:
                errors.append(exc)
        if errors:
            self.close()
            raise errors[0]
        _check_sizes(pes, n_p)
        if counters is not None:
            counters.record_exchange(len(pes), n_ex)
        red = reduce_log([pe.local_estimate for pe in pes], [pe.log_weight_sum for pe in pes])
        return pes, red

    def close(self):
        for q in self._commands:
            q.put(None)
        for t in self._threads:
            t.join(timeout=5)
        self._threads, self._commands, self._pes = [], [], None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def make_backend(name: str):
    if name == "sequential":
        return SequentialBackend()
    if name == "parallel":
        return ThreadedBackend()
    raise ValueError(f"unknown backend {name!r}")


_SEQUENTIAL = SequentialBackend()


def rna_iteration(pes, frame, dyn, obs, fixed_ratio: float, prev: GlobalReduction,
                  counters: CommCounters | None = None, backend=None):
    """Classical RNA on the identity ring with a fixed exchange ratio."""
    n_ex = fixed_exchange_count(len(pes[0].ensemble), fixed_ratio)
    ring = identity_ring(len(pes))
    return (backend or _SEQUENTIAL).step(pes, ring, n_ex, frame, dyn, obs, prev, counters)


def arna_iteration(pes, frame, dyn, obs, cutoff: float, prev: GlobalReduction,
                   coord_rng: np.random.Generator | None = None,
                   ring: RingPermutation | None = None,
                   counters: CommCounters | None = None, backend=None):
    """ARNA: fresh random ring, exchange count from the previous PE_eff.

    ``ring`` overrides the coordinator's draw (used to pin the topology).
    """
    m = len(pes)
    if ring is None:
        ring = randomize_ring(m, coord_rng)
    n_ex = adaptive_exchange_count(len(pes[0].ensemble), prev.pe_eff, m, cutoff)
    return (backend or _SEQUENTIAL).step(pes, ring, n_ex, frame, dyn, obs, prev, counters)


@dataclass(eq=False)
class DistributedFilter:
    """Holds the PEs and coordinator state between iterations."""

    pes: list[PEState]
    dyn: DynamicsParams
    obs: ObservationParams
    policy: ExchangePolicy
    prev: GlobalReduction
    coord_rng: np.random.Generator
    backend: object = field(default_factory=SequentialBackend)
    counters: CommCounters = field(default_factory=CommCounters)
    last_n_ex: int = 0

    @property
    def m(self) -> int:
        return len(self.pes)

    @property
    def n_p(self) -> int:
        return len(self.pes[0].ensemble)

    def step(self, frame: Frame) -> GlobalReduction:
        if self.policy.mode == "adaptive":
            ring = randomize_ring(self.m, self.coord_rng)
        else:
            ring = identity_ring(self.m)
        n_ex = self.policy.count(self.n_p, self.m, self.prev)
        self.pes, red = self.backend.step(self.pes, ring, n_ex, frame, self.dyn, self.obs,
                                          self.prev, self.counters)
        self.prev = red
        self.last_n_ex = n_ex
        return red
