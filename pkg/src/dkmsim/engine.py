"""Iteration engine: synchronous mixing rounds plus local operator steps.

Three modes share one loop. Full mode applies every agent's whole operator
each round; block-sampled mode updates a single randomly drawn coordinate
block per round (one categorical draw, shared by all agents, broadcast by
the round coordinator); centralized mode iterates the global operator on a
single point and is the N = 1 sanity baseline.

The per-round update for agent i is

    x_hat_i   = sum_j A_k[i, j] x_j          (mixing)
    x_i^{k+1} = x_hat_i + alpha_k d_i        (local step)

where d_i is F_i(x_hat_i) - x_hat_i in full mode, and its drawn block
(zeros elsewhere) in block-sampled mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .blocks import Float, as_point, as_states
from .diagnostics import (
    Trace,
    TraceRecord,
    consensus_residual,
    distance_to_reference,
    fixed_point_residual,
)
from .errors import AssumptionError, DimensionMismatchError, DivergenceError, ParameterError
from .graphs import GraphSchedule, mix, validate_schedule
from .operators import OperatorFamily, check_nonexpansive, estimate_displacement_bound
from .stepsize import PowerLawStepsize, check_stepsize_conditions
from .validation import ValidationReport, Violation, failed, passed

DIVERGENCE_LIMIT = 1e12

MODES = ("dkm", "dbkm", "centralized")


@dataclass(frozen=True)
class BlockSelector:
    """Categorical distribution over blocks for the block-sampled mode."""

    probabilities: tuple[float, ...]

    def __post_init__(self):
        p = tuple(float(v) for v in self.probabilities)
        if len(p) == 0:
            raise ParameterError("selector needs at least one block probability")
        if any(not np.isfinite(v) or v <= 0 for v in p):
            raise ParameterError(f"block probabilities must be positive, got {p}")
        total = float(np.sum(p))
        if abs(total - 1.0) > 1e-12:
            raise ParameterError(f"block probabilities must sum to 1 within 1e-12, got {total!r}")
        object.__setattr__(self, "probabilities", p)
        cum = np.cumsum(p)
        cum[-1] = 1.0  # kill rounding residue so every u in [0,1) lands in range
        object.__setattr__(self, "_cumulative", cum)

    @property
    def num_blocks(self) -> int:
        return len(self.probabilities)

    @classmethod
    def uniform(cls, m: int) -> "BlockSelector":
        return cls(tuple(1.0 / m for _ in range(m)))

    def is_uniform(self, tol: float = 1e-12) -> bool:
        m = self.num_blocks
        return all(abs(p - 1.0 / m) <= tol for p in self.probabilities)


def draw_block(selector: BlockSelector, rng: np.random.Generator) -> int:
    """One categorical draw; inverse-CDF on a single uniform for determinism."""
    u = rng.random()
    return int(np.searchsorted(selector._cumulative, u, side="right"))


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha <= 1.0:
        raise ParameterError(f"stepsize must lie in (0, 1], got {alpha}")
    return alpha


def dkm_step(states, A, family: OperatorFamily, alpha: float) -> NDArray[Float]:
    """One full round: mix, then move every coordinate toward F_i(x_hat_i)."""
    alpha = _check_alpha(alpha)
    xhat = mix(A, states)
    return xhat + alpha * family.displacement_all(xhat)


def dbkm_step(states, A, family: OperatorFamily, alpha: float, block: int) -> NDArray[Float]:
    """One block-sampled round: mix, then update only the drawn block."""
    alpha = _check_alpha(alpha)
    xhat = mix(A, states)
    sl = family.partition.block_slice(block)
    out = xhat.copy()
    out[:, sl] = xhat[:, sl] + alpha * family.displacement_block_all(block, xhat)
    return out


def centralized_km(family: OperatorFamily, x0, stepsize: PowerLawStepsize, rounds: int) -> NDArray[Float]:
    """Single-point iteration x <- x + alpha_k (F(x) - x) on the global operator.

    Returns the whole trajectory, shape (rounds + 1, n).
    """
    x = as_point(x0, family.n)
    if rounds < 0:
        raise ParameterError(f"rounds must be nonnegative, got {rounds}")
    traj = np.empty((rounds + 1, family.n))
    traj[0] = x
    for k in range(rounds):
        alpha = _check_alpha(stepsize.alpha(k))
        x = x + alpha * family.global_displacement(x)
        traj[k + 1] = x
    return traj


@dataclass(frozen=True)
class UniformInit:
    """Draw initial agent states uniformly from [low, high]^n, seeded."""

    low: float = -5.0
    high: float = 5.0

    def __post_init__(self):
        if not (np.isfinite(self.low) and np.isfinite(self.high) and self.low < self.high):
            raise ParameterError(f"need low < high and finite, got [{self.low}, {self.high}]")


@dataclass
class RunConfig:
    """Everything one simulation needs; validated on construction.

    init is either a UniformInit or an explicit (N, n) array. reference, when
    given, fills the trace's dist_to_ref column. record_every = None selects
    the default cadence: every round below 1000, then every ceil(k/1000)-th
    round, and always the final round.
    """

    family: OperatorFamily
    stepsize: PowerLawStepsize
    schedule: GraphSchedule | None = None
    mode: str = "dkm"
    selector: BlockSelector | None = None
    max_rounds: int = 1000
    seed: int = 0
    init: UniformInit | np.ndarray = field(default_factory=UniformInit)
    reference: np.ndarray | None = None
    record_every: int | None = None
    snapshot_every: int | None = None
    divergence_limit: float = DIVERGENCE_LIMIT

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.max_rounds < 1:
            raise ParameterError(f"max_rounds must be >= 1, got {self.max_rounds}")
        if self.mode != "centralized":
            if self.schedule is None:
                raise ParameterError(f"mode {self.mode!r} needs a graph schedule")
            if self.schedule.n_agents != self.family.n_agents:
                raise DimensionMismatchError(
                    f"schedule has {self.schedule.n_agents} agents, family has {self.family.n_agents}"
                )
        if self.mode == "dbkm":
            if self.selector is None:
                raise ParameterError("block-sampled mode needs a BlockSelector")
            if self.selector.num_blocks != self.family.partition.m:
                raise DimensionMismatchError(
                    f"selector has {self.selector.num_blocks} blocks, partition has {self.family.partition.m}"
                )
        if not isinstance(self.init, UniformInit):
            self.init = as_states(self.init, self.family.n_agents, self.family.n).copy()
        if self.reference is not None:
            self.reference = as_point(self.reference, self.family.n)
        if self.record_every is not None and self.record_every < 1:
            raise ParameterError(f"record_every must be >= 1, got {self.record_every}")
        if self.snapshot_every is not None and self.snapshot_every < 1:
            raise ParameterError(f"snapshot_every must be >= 1, got {self.snapshot_every}")
        if not np.isfinite(self.divergence_limit) or self.divergence_limit <= 0:
            raise ParameterError(f"divergence limit must be positive, got {self.divergence_limit}")


def validate_run(config: RunConfig) -> list[ValidationReport]:
    """Deterministic assumption checks: graph trio plus stepsize conditions."""
    reports: list[ValidationReport] = []
    if config.mode != "centralized" and config.schedule is not None:
        reports.extend(validate_schedule(config.schedule))
    reports.append(check_stepsize_conditions(config.stepsize))
    return reports


def validate_full(
    config: RunConfig,
    num_pairs: int = 200,
    num_points: int = 200,
    seed: int = 0,
) -> list[ValidationReport]:
    """All assumption checks: the deterministic ones plus the sampled pair.

    Adds a sampled nonexpansiveness check over every local operator and the
    global average, and an empirical displacement-bound estimate (reported,
    never failed: samples can only ever give a lower bound).
    """
    reports = validate_run(config)
    family = config.family
    violations: list[Violation] = []
    for i, op in enumerate(family.operators):
        rep = check_nonexpansive(op, num_pairs=num_pairs, seed=seed + i)
        if not rep.passed:
            for v in rep.violations[:3]:
                violations.append(Violation(f"operator {i}, {v.where}", v.message, v.value))
    rep = check_nonexpansive(family, num_pairs=num_pairs, seed=seed + family.n_agents)
    if not rep.passed:
        for v in rep.violations[:3]:
            violations.append(Violation(f"global average, {v.where}", v.message, v.value))
    name = "operators: sampled nonexpansiveness"
    if violations:
        reports.append(failed(name, violations))
    else:
        reports.append(passed(name, f"{family.n_agents} locals + global average, {num_pairs} pairs each"))

    bound = estimate_displacement_bound(family, num_points=num_points, seed=seed)
    reports.append(
        passed(
            "operators: displacement bound estimate",
            f"max_i ||F_i(x) - x|| >= {bound:.6g} over {num_points} sampled points",
        )
    )
    return reports


def _default_record(k: int) -> bool:
    return k < 1000 or k % -(-k // 1000) == 0


def initial_states(config: RunConfig, rng: np.random.Generator | None = None) -> NDArray[Float]:
    """The (N, n) state matrix a run starts from.

    Drawing happens first on the run's generator, so calling this with a
    fresh generator seeded by config.seed reproduces exactly what run()
    starts with. Centralized mode gets a single row: a fresh uniform point,
    or the mean of an explicit init matrix.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    family = config.family
    if config.mode == "centralized":
        if isinstance(config.init, UniformInit):
            x0 = rng.uniform(config.init.low, config.init.high, family.n)
        else:
            x0 = config.init.mean(axis=0)
        return x0[None, :].copy()
    if isinstance(config.init, UniformInit):
        return rng.uniform(config.init.low, config.init.high, (family.n_agents, family.n))
    return config.init.copy()


def run(config: RunConfig, validate: bool = True) -> Trace:
    """Execute one simulation and return its trace.

    With validate=True (the default) the deterministic assumption checks run
    first and the first failure raises AssumptionError. Identical config and
    seed give an identical trace, including the drawn block sequence.
    """
    if validate:
        for report in validate_run(config):
            if not report.passed:
                raise AssumptionError(report)

    family = config.family
    rng = np.random.default_rng(config.seed)
    states = initial_states(config, rng)

    trace = Trace(
        mode=config.mode,
        n_agents=family.n_agents,
        n=family.n,
        block_dims=family.partition.dims,
        seed=config.seed,
        max_rounds=config.max_rounds,
        stepsize=config.stepsize,
    )

    def should_record(k: int) -> bool:
        if config.record_every is not None:
            return k % config.record_every == 0
        return _default_record(k)

    def make_record(k: int, block: int | None) -> TraceRecord:
        xbar = states.mean(axis=0)
        snap = None
        if config.snapshot_every is not None and (k % config.snapshot_every == 0 or k == config.max_rounds):
            snap = states.copy()
        return TraceRecord(
            k=k,
            alpha_k=config.stepsize.alpha(k),
            consensus_residual=consensus_residual(states),
            fp_residual=fixed_point_residual(family, xbar),
            dist_to_ref=(
                distance_to_reference(states, config.reference) if config.reference is not None else None
            ),
            selected_block=block,
            max_state_norm=float(np.linalg.norm(states, axis=1).max()),
            snapshot=snap,
        )

    for k in range(config.max_rounds):
        recording = should_record(k)
        block = None
        if config.mode == "dbkm":
            block = draw_block(config.selector, rng)
        if recording:
            trace.records.append(make_record(k, block))
        alpha = config.stepsize.alpha(k)
        if config.mode == "dkm":
            states = dkm_step(states, config.schedule.at(k), family, alpha)
        elif config.mode == "dbkm":
            states = dbkm_step(states, config.schedule.at(k), family, alpha, block)
        else:
            x = states[0]
            states = (x + alpha * family.global_displacement(x))[None, :]
        peak = float(np.max(np.abs(states)))
        if not np.isfinite(peak) or peak > config.divergence_limit:
            trace.aborted_at = k + 1
            raise DivergenceError(k, trace)

    trace.records.append(make_record(config.max_rounds, None))
    trace.final_states = states
    return trace
