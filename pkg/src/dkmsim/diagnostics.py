"""Convergence diagnostics: residuals, block norms, and rate fits.

Everything here is a pure function of states or of a recorded trace; the
engine calls these to fill trace rows, and tests call them directly to
cross-check the iteration against its averaged rewrite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .blocks import BlockPartition, Float, as_point, as_states
from .errors import DimensionMismatchError, ParameterError
from .operators import OperatorFamily
from .stepsize import PowerLawStepsize


def mean_state(states) -> NDArray[Float]:
    """Agent average x_bar = (1/N) sum_i x_i."""
    return as_states(states).mean(axis=0)


def consensus_residual(states) -> float:
    """max_i ||x_i - x_bar||, the worst agent's distance to the average."""
    states = as_states(states)
    dev = states - states.mean(axis=0)
    return float(np.linalg.norm(dev, axis=1).max())


def fixed_point_residual(family: OperatorFamily, x) -> float:
    """||F(x) - x|| for the global operator F at a single point."""
    x = as_point(x, family.n)
    return float(np.linalg.norm(family.global_displacement(x)))


def distance_to_reference(states, reference) -> float:
    """max_i ||x_i - x_star||."""
    states = as_states(states)
    reference = as_point(reference, states.shape[1])
    return float(np.linalg.norm(states - reference, axis=1).max())


def weighted_block_norm(x, partition: BlockPartition, probabilities) -> float:
    """Block norm sqrt( sum_l ||x_l||^2 / p_l ) for block probabilities p.

    Sandwiched between the plain norm and norm / sqrt(min p): used to
    transfer estimates between the block-sampled and full iterations.
    """
    x = as_point(x, partition.n)
    p = np.asarray(probabilities, dtype=np.float64)
    if p.shape != (partition.m,):
        raise DimensionMismatchError(
            f"got {p.shape[0] if p.ndim == 1 else p.shape} probabilities for {partition.m} blocks"
        )
    if np.any(p <= 0):
        raise ParameterError("block probabilities must be positive")
    total = 0.0
    for l in range(partition.m):
        xl = x[partition.block_slice(l)]
        total += float(xl @ xl) / float(p[l])
    return float(np.sqrt(total))


@dataclass
class TraceRecord:
    """One recorded round.

    fp_residual and dist_to_ref are None when not computed (no reference
    known, for instance); selected_block is None except for block-sampled
    rounds, where it is the block drawn for the k -> k+1 transition.
    max_state_norm tracks max_i ||x_i|| for boundedness checks.
    """

    k: int
    alpha_k: float
    consensus_residual: float
    fp_residual: float | None
    dist_to_ref: float | None
    selected_block: int | None
    max_state_norm: float
    snapshot: NDArray[Float] | None = None


@dataclass
class Trace:
    """Recorded run: metadata plus rows in strictly increasing round order."""

    mode: str
    n_agents: int
    n: int
    block_dims: tuple[int, ...]
    seed: int
    max_rounds: int
    stepsize: PowerLawStepsize
    records: list[TraceRecord] = field(default_factory=list)
    aborted_at: int | None = None
    final_states: NDArray[Float] | None = None

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]

    def last(self) -> TraceRecord:
        if not self.records:
            raise ParameterError("trace has no records")
        return self.records[-1]


def fit_consensus_rate(trace: Trace, stepsize: PowerLawStepsize | None = None, tail_start: int | None = None) -> float:
    """Tail-supremum constant C = max_{k >= tail_start} residual_k / alpha_{k//2}.

    A finite, stable C over a growing tail is evidence that the consensus
    residual decays at the stepsize's lag rate. Defaults: the trace's own
    stepsize, and a tail starting at max_rounds // 10.
    """
    if stepsize is None:
        stepsize = trace.stepsize
    if tail_start is None:
        tail_start = trace.max_rounds // 10
    best = None
    for rec in trace.records:
        if rec.k < tail_start:
            continue
        ratio = rec.consensus_residual / stepsize.alpha_half(rec.k)
        if best is None or ratio > best:
            best = ratio
    if best is None:
        raise ParameterError(
            f"no recorded rounds at or after tail_start = {tail_start} (last record: "
            f"{trace.records[-1].k if trace.records else 'none'})"
        )
    return float(best)
