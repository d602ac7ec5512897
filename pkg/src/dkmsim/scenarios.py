"""Problem scenarios: operator families wired to schedules, plus oracles.

Three problem shapes are packaged here, each with an independent reference
oracle the simulator never touches:

  * distance minimization  min_x sum_i dist(x, X_i)^2 for convex sets X_i,
    where F_i projects onto X_i and the fixed point of the mean projection
    is the minimizer;
  * distributed smooth minimization  min_x sum_i f_i(x) via gradient-step
    operators F_i = Id - tau grad f_i;
  * network-mean linear equations  R x = r with R = mean R_i, r = mean r_i,
    via affine operators F_i(x) = (I - theta R_i) x + theta r_i.

Presets pin the named configurations the CLI exposes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .blocks import BlockPartition, Float, as_point
from .engine import BlockSelector, RunConfig, UniformInit, initial_states
from .errors import OracleError, ParameterError
from .graphs import GraphSchedule, ring_schedule
from .operators import (
    Affine,
    Ball,
    Box,
    ConvexSet,
    GradientStep,
    Huber,
    Identity,
    OperatorFamily,
    Projection,
    Quadratic,
    SmoothObjective,
)
from .stepsize import PowerLawStepsize


@dataclass
class Scenario:
    """A named runnable problem with its reference solution, when one exists."""

    name: str
    config: RunConfig
    reference: NDArray[Float] | None
    reference_source: str
    expected: tuple[str, ...] = ()


# ---------------------------------------------------------------------------
# oracles (engine-independent reference solutions)


@dataclass(frozen=True)
class LinearSolution:
    """Solution of R x = r with its certificate.

    unique is False when R is numerically rank deficient; consistent is
    False when even the least-squares answer leaves a residual, in which
    case solution is still the minimum-norm least-squares point.
    """

    solution: NDArray[Float]
    residual: float
    unique: bool
    consistent: bool


def oracle_linear_solve(R, r, tol: float = 1e-9) -> LinearSolution:
    """Dense least-squares solve of R x = r with rank and residual flags."""
    R = np.asarray(R, dtype=np.float64)
    r = as_point(r, R.shape[0])
    if R.ndim != 2:
        raise ParameterError(f"matrix must be 2-D, got shape {R.shape}")
    x, _, rank, _ = np.linalg.lstsq(R, r, rcond=None)
    residual = float(np.linalg.norm(R @ x - r))
    unique = rank == R.shape[1]
    consistent = residual <= tol * (1.0 + float(np.linalg.norm(r)))
    return LinearSolution(x, residual, unique, consistent)


def oracle_distance_minimizer(
    sets: list[ConvexSet],
    tol: float = 1e-12,
    max_iters: int = 10_000_000,
) -> NDArray[Float]:
    """Minimizer of sum_i dist(x, X_i)^2 by iterating the mean projection.

    The mean of projections is an averaged operator, so the plain fixed-point
    iteration converges; it stops when successive iterates differ by less
    than tol. This is gradient descent with unit step on the half-mean of
    squared distances, computed without the simulator.
    """
    if len(sets) == 0:
        raise ParameterError("need at least one set")
    n = sets[0].n
    for s in sets:
        if s.n != n:
            raise ParameterError("sets live in different dimensions")
    # start from the mean of the sets' natural centers
    centers = []
    for s in sets:
        if isinstance(s, Box):
            centers.append(0.5 * (s.lower + s.upper))
        else:
            centers.append(s.center)
    x = np.mean(centers, axis=0)
    for _ in range(max_iters):
        nxt = np.mean([s.project(x) for s in sets], axis=0)
        if float(np.linalg.norm(nxt - x)) < tol:
            return nxt
        x = nxt
    raise OracleError(f"mean-projection iteration did not settle within {max_iters} iterations")


def oracle_least_squares_minimizer(objectives: list[Quadratic]) -> tuple[NDArray[Float], bool]:
    """Minimizer of sum_i 0.5 ||A_i x - b_i||^2 from the normal equations."""
    if len(objectives) == 0:
        raise ParameterError("need at least one objective")
    n = objectives[0].n
    M = np.zeros((n, n))
    v = np.zeros(n)
    for f in objectives:
        M += f.matrix.T @ f.matrix
        v += f.matrix.T @ f.target
    sol = oracle_linear_solve(M, v)
    return sol.solution, sol.unique


def oracle_smooth_minimizer(
    objectives: list[SmoothObjective],
    tol: float = 1e-10,
    max_iters: int = 10_000_000,
) -> NDArray[Float]:
    """Minimizer of sum_i f_i by long plain gradient descent.

    Step 1 / sum_i L_i, stopping when the full gradient norm drops below tol.
    Start at the componentwise mean of the objectives' targets.
    """
    if len(objectives) == 0:
        raise ParameterError("need at least one objective")
    n = objectives[0].n
    total_L = sum(f.lipschitz_L for f in objectives)
    step = 1.0 / total_L
    x = np.mean([f.target for f in objectives], axis=0).astype(np.float64)
    if x.shape != (n,):
        x = np.zeros(n)
    for _ in range(max_iters):
        g = np.zeros(n)
        for f in objectives:
            g += f.gradient(x)
        if float(np.linalg.norm(g)) < tol:
            return x
        x = x - step * g
    raise OracleError(f"gradient descent did not reach tolerance {tol} within {max_iters} iterations")


# ---------------------------------------------------------------------------
# set families


def staircase_boxes(n_agents: int) -> list[Box]:
    """N boxes in R^3 marching up a square-root staircase.

    Agent i (1-based in the formula) gets
      [sqrt(i), sqrt(i+1)] x [sin(i pi/2), 1 + sin(i pi/2)]
                           x [sqrt(i) - sqrt(N) + 2, sqrt(i)].
    Consecutive boxes touch in the first coordinate, so the family has a
    unique mean-projection fixed point. The third interval is empty unless
    N >= 4; the Box constructor rejects smaller families.
    """
    N = int(n_agents)
    boxes = []
    for i in range(1, N + 1):
        lower = [math.sqrt(i), math.sin(i * math.pi / 2), math.sqrt(i) - math.sqrt(N) + 2.0]
        upper = [math.sqrt(i + 1), 1.0 + math.sin(i * math.pi / 2), math.sqrt(i)]
        boxes.append(Box(np.array(lower), np.array(upper)))
    return boxes


# ---------------------------------------------------------------------------
# scenario builders


def build_distance_scenario(
    sets: list[ConvexSet],
    schedule: GraphSchedule,
    stepsize: PowerLawStepsize,
    mode: str = "dkm",
    block_dims: tuple[int, ...] | None = None,
    selector: BlockSelector | None = None,
    name: str = "distance",
    compute_reference: bool = True,
    **run_kwargs,
) -> Scenario:
    """Projection family for min_x sum_i dist(x, X_i)^2.

    Block-sampled runs require a uniform selector: the guarantee for
    projection problems only covers equal block probabilities.
    """
    if len(sets) == 0:
        raise ParameterError("need at least one set")
    n = sets[0].n
    partition = BlockPartition(block_dims) if block_dims else BlockPartition.single(n)
    if partition.n != n:
        raise ParameterError(f"block dims {partition.dims} cover {partition.n} coordinates, sets need {n}")
    if mode == "dbkm":
        if selector is None:
            selector = BlockSelector.uniform(partition.m)
        if not selector.is_uniform():
            raise ParameterError(
                "block-coordinate projection runs require uniform block probabilities; "
                f"got {selector.probabilities}"
            )
    family = OperatorFamily([Projection(partition, s) for s in sets])
    reference = oracle_distance_minimizer(sets) if compute_reference else None
    config = RunConfig(
        family=family,
        stepsize=stepsize,
        schedule=schedule,
        mode=mode,
        selector=selector if mode == "dbkm" else None,
        reference=reference,
        **run_kwargs,
    )
    return Scenario(
        name=name,
        config=config,
        reference=reference,
        reference_source="mean-projection fixed-point iteration",
        expected=("consensus", "fixed-point residual", "distance to reference"),
    )


def build_dgd_scenario(
    objectives: list[SmoothObjective],
    tau: float,
    schedule: GraphSchedule,
    stepsize: PowerLawStepsize,
    mode: str = "dkm",
    block_dims: tuple[int, ...] | None = None,
    selector: BlockSelector | None = None,
    name: str = "dgd",
    compute_reference: bool = True,
    **run_kwargs,
) -> Scenario:
    """Gradient-step family for min_x sum_i f_i(x).

    One shared tau; each constructor enforces tau < 2 / L_i, so collectively
    tau < 2 / max_i L_i. The effective per-round gradient step is
    tau * alpha_k (descent, not ascent).
    """
    if len(objectives) == 0:
        raise ParameterError("need at least one objective")
    n = objectives[0].n
    partition = BlockPartition(block_dims) if block_dims else BlockPartition.single(n)
    family = OperatorFamily([GradientStep(partition, f, tau) for f in objectives])
    reference = None
    source = "none"
    if compute_reference:
        if all(isinstance(f, Quadratic) for f in objectives):
            reference, unique = oracle_least_squares_minimizer(objectives)
            source = "normal-equations solve" + ("" if unique else " (minimum-norm; nonunique)")
        else:
            reference = oracle_smooth_minimizer(objectives)
            source = "centralized gradient descent"
    config = RunConfig(
        family=family,
        stepsize=stepsize,
        schedule=schedule,
        mode=mode,
        selector=selector if mode == "dbkm" else None,
        reference=reference,
        **run_kwargs,
    )
    return Scenario(
        name=name,
        config=config,
        reference=reference,
        reference_source=source,
        expected=("consensus", "fixed-point residual", "distance to reference"),
    )


def build_linear_scenario(
    matrices: list,
    offsets: list,
    schedule: GraphSchedule,
    stepsize: PowerLawStepsize,
    theta: float | None = None,
    mode: str = "dkm",
    block_dims: tuple[int, ...] | None = None,
    selector: BlockSelector | None = None,
    name: str = "linear",
    compute_reference: bool = True,
    **run_kwargs,
) -> Scenario:
    """Affine family whose common fixed points solve mean(R_i) x = mean(r_i).

    theta defaults to 2 / max_i lambda_max(R_i), the largest admissible value.
    """
    if len(matrices) == 0 or len(matrices) != len(offsets):
        raise ParameterError("need matching, nonempty matrix and offset lists")
    mats = [np.asarray(R, dtype=np.float64) for R in matrices]
    n = mats[0].shape[0]
    partition = BlockPartition(block_dims) if block_dims else BlockPartition.single(n)
    if theta is None:
        lam_max = max(float(np.linalg.eigvalsh(R)[-1]) for R in mats)
        if lam_max <= 0:
            raise ParameterError("all matrices are zero; pick theta explicitly")
        theta = 2.0 / lam_max
    ops = [Affine(partition, R, r, theta) for R, r in zip(mats, offsets)]
    family = OperatorFamily(ops)
    reference = None
    source = "none"
    if compute_reference:
        R_bar = np.mean(mats, axis=0)
        r_bar = np.mean([as_point(r, n) for r in offsets], axis=0)
        sol = oracle_linear_solve(R_bar, r_bar)
        reference = sol.solution
        source = "dense least-squares solve"
        if not sol.unique:
            source += " (minimum-norm; rank-deficient mean matrix)"
        if not sol.consistent:
            source += " (inconsistent system; least-squares point)"
    config = RunConfig(
        family=family,
        stepsize=stepsize,
        schedule=schedule,
        mode=mode,
        selector=selector if mode == "dbkm" else None,
        reference=reference,
        **run_kwargs,
    )
    return Scenario(
        name=name,
        config=config,
        reference=reference,
        reference_source=source,
        expected=("consensus", "fixed-point residual", "distance to reference"),
    )


def build_consensus_scenario(
    n_agents: int,
    n: int,
    schedule: GraphSchedule,
    stepsize: PowerLawStepsize,
    name: str = "consensus",
    **run_kwargs,
) -> Scenario:
    """Identity operators: pure averaging. Any point is fixed, so the
    reference is the initial mean, which mixing preserves."""
    partition = BlockPartition.single(n)
    family = OperatorFamily([Identity(partition) for _ in range(n_agents)])
    config = RunConfig(family=family, stepsize=stepsize, schedule=schedule, mode="dkm", **run_kwargs)
    reference = initial_states(config).mean(axis=0)
    config.reference = as_point(reference, n)
    return Scenario(
        name=name,
        config=config,
        reference=config.reference,
        reference_source="initial mean (identity operators fix every point)",
        expected=("consensus",),
    )


# ---------------------------------------------------------------------------
# named presets


def random_linear_instance(instance_seed: int, n_agents: int = 5, n: int = 4):
    """Seeded random SPD system: R_i = G_i^T G_i + 0.1 I, r_i standard normal."""
    rng = np.random.default_rng(instance_seed)
    matrices = []
    offsets = []
    for _ in range(n_agents):
        G = rng.standard_normal((n, n))
        matrices.append(G.T @ G + 0.1 * np.eye(n))
        offsets.append(rng.standard_normal(n))
    return matrices, offsets


PRESET_NAMES = ("paper-dkm-6", "paper-dbkm-100", "linear-random", "dgd-quadratic", "dgd-huber")

_PRESET_STEPSIZE = PowerLawStepsize(alpha0=1.0, gamma=0.7, k0=1)


def build_preset(name: str, seed: int | None = None, max_rounds: int | None = None) -> Scenario:
    """Construct one of the named scenarios, optionally overriding seed/rounds."""
    if name == "paper-dkm-6":
        return build_distance_scenario(
            staircase_boxes(6),
            ring_schedule(6, 2, 0.5),
            _PRESET_STEPSIZE,
            mode="dkm",
            name=name,
            max_rounds=20_000 if max_rounds is None else max_rounds,
            seed=0 if seed is None else seed,
            init=UniformInit(-5.0, 5.0),
        )
    if name == "paper-dbkm-100":
        return build_distance_scenario(
            staircase_boxes(100),
            ring_schedule(100, 10, 0.5),
            _PRESET_STEPSIZE,
            mode="dbkm",
            block_dims=(1, 1, 1),
            selector=BlockSelector.uniform(3),
            name=name,
            max_rounds=100_000 if max_rounds is None else max_rounds,
            seed=0 if seed is None else seed,
            init=UniformInit(-5.0, 5.0),
        )
    if name == "linear-random":
        matrices, offsets = random_linear_instance(0)
        return build_linear_scenario(
            matrices,
            offsets,
            ring_schedule(5, 2, 0.5),
            _PRESET_STEPSIZE,
            name=name,
            max_rounds=100_000 if max_rounds is None else max_rounds,
            seed=0 if seed is None else seed,
            init=UniformInit(-5.0, 5.0),
        )
    if name == "dgd-quadratic":
        rng = np.random.default_rng(11)
        objectives = []
        for _ in range(4):
            A = rng.standard_normal((3, 3))
            b = rng.standard_normal(3)
            objectives.append(Quadratic(A, b))
        L = max(f.lipschitz_L for f in objectives)
        return build_dgd_scenario(
            objectives,
            tau=1.0 / L,
            schedule=ring_schedule(4, 2, 0.5),
            stepsize=_PRESET_STEPSIZE,
            name=name,
            max_rounds=20_000 if max_rounds is None else max_rounds,
            seed=0 if seed is None else seed,
            init=UniformInit(-5.0, 5.0),
        )
    if name == "dgd-huber":
        rng = np.random.default_rng(13)
        objectives = [Huber(rng.uniform(-3.0, 3.0, 2), delta=1.0) for _ in range(3)]
        return build_dgd_scenario(
            objectives,
            tau=1.0,
            schedule=ring_schedule(3, 3, 0.5),
            stepsize=_PRESET_STEPSIZE,
            name=name,
            max_rounds=20_000 if max_rounds is None else max_rounds,
            seed=0 if seed is None else seed,
            init=UniformInit(-5.0, 5.0),
        )
    raise ParameterError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
