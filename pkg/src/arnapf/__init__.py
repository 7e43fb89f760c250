"""Distributed particle filtering with RNA and adaptive ARNA resampling."""

from .dpf import (
    CommCounters, DistributedFilter, ExchangePolicy, GlobalReduction, PEState,
    SequentialBackend, ThreadedBackend, adaptive_exchange_count, arna_iteration,
    exchange_step, master_reduce, pe_eff, rna_iteration, select_outgoing,
)
from .resample import (
    FilterDivergence, WeightedEnsemble, effective_sample_size, estimate, normalize,
    sir_step, systematic_resample,
)
from .statemodel import (
    DynamicsParams, Frame, ObservationParams, StateVector, expected_intensity,
    log_likelihood, log_likelihood_ratio, propagate,
)
from .topology import RingPermutation, identity_ring, randomize_ring

__version__ = "0.1.0"
