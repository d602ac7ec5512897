"""Local operator catalog: projections, gradient steps, affine maps, identity.

Each agent holds one local operator F_i mapping R^n to R^n. The global
operator is the agent average F = (1/N) sum_i F_i; when every F_i is
nonexpansive, so is F. The catalog is closed: the four kinds below are the
only ones the engine and the config schema accept.

Operators expose both full evaluation and per-block evaluation against a
shared BlockPartition, plus a displacement form F(x) - x computed without
cancellation where the kind allows it (gradient steps, affine maps). The
iteration engine works exclusively with displacements.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .blocks import BlockPartition, Float, as_point
from .errors import DimensionMismatchError, ParameterError
from .validation import ValidationReport, Violation, failed, passed

SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-10
NONEXPANSIVE_TOL = 1e-12


# ---------------------------------------------------------------------------
# convex sets


@dataclass(frozen=True)
class Box:
    """Axis-aligned box {x : lower <= x <= upper}, coordinatewise."""

    lower: NDArray[Float]
    upper: NDArray[Float]

    def __post_init__(self):
        lo = as_point(self.lower)
        up = as_point(self.upper, lo.shape[0])
        if np.any(lo > up):
            bad = int(np.argmax(lo > up))
            raise ParameterError(
                f"box has lower[{bad}] = {lo[bad]} > upper[{bad}] = {up[bad]}"
            )
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    def project(self, x: NDArray[Float]) -> NDArray[Float]:
        return np.clip(x, self.lower, self.upper)

    def contains(self, x: NDArray[Float], tol: float = 0.0) -> bool:
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))


@dataclass(frozen=True)
class Ball:
    """Euclidean ball {x : ||x - center|| <= radius}."""

    center: NDArray[Float]
    radius: float

    def __post_init__(self):
        c = as_point(self.center)
        r = float(self.radius)
        if not np.isfinite(r) or r <= 0:
            raise ParameterError(f"ball radius must be positive and finite, got {r}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", r)

    @property
    def n(self) -> int:
        return self.center.shape[0]

    def project(self, x: NDArray[Float]) -> NDArray[Float]:
        d = x - self.center
        nrm = float(np.linalg.norm(d))
        if nrm <= self.radius:
            return x.copy()
        return self.center + (self.radius / nrm) * d

    def contains(self, x: NDArray[Float], tol: float = 0.0) -> bool:
        return bool(np.linalg.norm(x - self.center) <= self.radius + tol)


ConvexSet = Box | Ball


# ---------------------------------------------------------------------------
# smooth convex objectives (for gradient-step operators)


@dataclass(frozen=True)
class Quadratic:
    """f(x) = 0.5 ||A x - b||^2 with gradient A^T (A x - b).

    The gradient Lipschitz constant is the largest eigenvalue of A^T A.
    """

    matrix: NDArray[Float]
    target: NDArray[Float]
    lipschitz_L: float = field(init=False)

    def __post_init__(self):
        A = np.asarray(self.matrix, dtype=np.float64)
        if A.ndim != 2:
            raise DimensionMismatchError(f"quadratic matrix must be 2-D, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ParameterError("quadratic matrix has non-finite entries")
        b = as_point(self.target, A.shape[0])
        L = float(np.linalg.eigvalsh(A.T @ A)[-1])
        if L <= 0:
            raise ParameterError("quadratic matrix is zero; gradient step is undefined")
        object.__setattr__(self, "matrix", A)
        object.__setattr__(self, "target", b)
        object.__setattr__(self, "lipschitz_L", L)

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    def value(self, x: NDArray[Float]) -> float:
        r = self.matrix @ x - self.target
        return 0.5 * float(r @ r)

    def gradient(self, x: NDArray[Float]) -> NDArray[Float]:
        return self.matrix.T @ (self.matrix @ x - self.target)


@dataclass(frozen=True)
class Huber:
    """Coordinatewise Huber loss around a target point.

    f(x) = sum_c h_delta(x_c - target_c) with h quadratic inside
    [-delta, delta] and linear outside. The gradient clips x - target
    into that interval, so lipschitz_L = 1 and the gradient norm is
    bounded by delta * sqrt(n) everywhere.
    """

    target: NDArray[Float]
    delta: float = 1.0
    lipschitz_L: float = field(init=False)

    def __post_init__(self):
        t = as_point(self.target)
        d = float(self.delta)
        if not np.isfinite(d) or d <= 0:
            raise ParameterError(f"huber delta must be positive and finite, got {d}")
        object.__setattr__(self, "target", t)
        object.__setattr__(self, "delta", d)
        object.__setattr__(self, "lipschitz_L", 1.0)

    @property
    def n(self) -> int:
        return self.target.shape[0]

    def value(self, x: NDArray[Float]) -> float:
        z = x - self.target
        az = np.abs(z)
        inside = az <= self.delta
        return float(np.sum(np.where(inside, 0.5 * z * z, self.delta * (az - 0.5 * self.delta))))

    def gradient(self, x: NDArray[Float]) -> NDArray[Float]:
        return np.clip(x - self.target, -self.delta, self.delta)


SmoothObjective = Quadratic | Huber


# ---------------------------------------------------------------------------
# local operators


class LocalOperator:
    """One agent's map F_i on R^n with a shared block partition."""

    kind = "abstract"

    def __init__(self, partition: BlockPartition):
        self.partition = partition
        self.n = partition.n

    def evaluate(self, x) -> NDArray[Float]:
        """F_i(x). Validates that x is a finite point of length n."""
        raise NotImplementedError

    def displacement(self, x) -> NDArray[Float]:
        """F_i(x) - x, the quantity the iteration engine consumes."""
        x = as_point(x, self.n)
        return self.evaluate(x) - x

    def evaluate_block(self, l: int, x) -> NDArray[Float]:
        """Block l of F_i(x); agrees bitwise with slicing evaluate(x)."""
        return self.evaluate(x)[self.partition.block_slice(l)]

    def displacement_block(self, l: int, x) -> NDArray[Float]:
        return self.displacement(x)[self.partition.block_slice(l)]

    def __call__(self, x) -> NDArray[Float]:
        return self.evaluate(x)


class Identity(LocalOperator):
    """F(x) = x. Fixed-point residuals are identically zero."""

    kind = "identity"

    def evaluate(self, x) -> NDArray[Float]:
        return as_point(x, self.n).copy()

    def displacement(self, x) -> NDArray[Float]:
        as_point(x, self.n)
        return np.zeros(self.n)

    def evaluate_block(self, l: int, x) -> NDArray[Float]:
        return as_point(x, self.n)[self.partition.block_slice(l)].copy()

    def displacement_block(self, l: int, x) -> NDArray[Float]:
        as_point(x, self.n)
        sl = self.partition.block_slice(l)
        return np.zeros(sl.stop - sl.start)


class Projection(LocalOperator):
    """Exact Euclidean projection onto a box or a ball.

    Projections are firmly nonexpansive, so any agent average of them is
    nonexpansive as well.
    """

    kind = "projection"

    def __init__(self, partition: BlockPartition, target_set: ConvexSet):
        super().__init__(partition)
        if target_set.n != partition.n:
            raise DimensionMismatchError(
                f"set lives in R^{target_set.n} but partition covers {partition.n} coordinates"
            )
        self.target_set = target_set

    def evaluate(self, x) -> NDArray[Float]:
        return self.target_set.project(as_point(x, self.n))

    def evaluate_block(self, l: int, x) -> NDArray[Float]:
        x = as_point(x, self.n)
        sl = self.partition.block_slice(l)
        s = self.target_set
        if isinstance(s, Box):
            # clamp only needs the block's own coordinates
            return np.clip(x[sl], s.lower[sl], s.upper[sl])
        # ball scaling factor depends on the whole vector
        d = x - s.center
        nrm = float(np.linalg.norm(d))
        if nrm <= s.radius:
            return x[sl].copy()
        return s.center[sl] + (s.radius / nrm) * d[sl]

    def displacement_block(self, l: int, x) -> NDArray[Float]:
        x = as_point(x, self.n)
        sl = self.partition.block_slice(l)
        return self.evaluate_block(l, x) - x[sl]


class GradientStep(LocalOperator):
    """F(x) = x - tau * grad f(x) for a smooth convex objective f.

    Nonexpansive iff 0 < tau < 2 / L where L bounds the gradient's
    Lipschitz constant; the constructor enforces the strict bound.
    """

    kind = "gradient_step"

    def __init__(self, partition: BlockPartition, objective: SmoothObjective, tau: float):
        super().__init__(partition)
        if objective.n != partition.n:
            raise DimensionMismatchError(
                f"objective on R^{objective.n} but partition covers {partition.n} coordinates"
            )
        tau = float(tau)
        limit = 2.0 / objective.lipschitz_L
        if not np.isfinite(tau) or not 0.0 < tau < limit:
            raise ParameterError(
                f"gradient step size must satisfy 0 < tau < 2/L = {limit:.6g}, got {tau}"
            )
        self.objective = objective
        self.tau = tau

    def evaluate(self, x) -> NDArray[Float]:
        x = as_point(x, self.n)
        return x + self.displacement(x)

    def displacement(self, x) -> NDArray[Float]:
        # computed as (-tau) * grad, never as F(x) - x, so no cancellation
        x = as_point(x, self.n)
        return -self.tau * self.objective.gradient(x)

    def evaluate_block(self, l: int, x) -> NDArray[Float]:
        return self.evaluate(x)[self.partition.block_slice(l)]

    def displacement_block(self, l: int, x) -> NDArray[Float]:
        return self.displacement(x)[self.partition.block_slice(l)]


class Affine(LocalOperator):
    """F(x) = (I - theta R) x + theta r for symmetric positive semidefinite R.

    Nonexpansive iff 0 < theta <= 2 / lambda_max(R); the constructor checks
    symmetry and the eigenvalue bound. Pass validate=False only to build a
    deliberately invalid instance for exercising the sampled checker.
    """

    kind = "affine"

    def __init__(
        self,
        partition: BlockPartition,
        matrix,
        offset,
        theta: float,
        validate: bool = True,
    ):
        super().__init__(partition)
        R = np.asarray(matrix, dtype=np.float64)
        if R.shape != (self.n, self.n):
            raise DimensionMismatchError(
                f"matrix shape {R.shape} does not match partition dimension {self.n}"
            )
        if not np.all(np.isfinite(R)):
            raise ParameterError("affine matrix has non-finite entries")
        r = as_point(offset, self.n)
        theta = float(theta)
        if validate:
            asym = float(np.max(np.abs(R - R.T)))
            if asym > SYMMETRY_TOL:
                raise ParameterError(f"matrix is not symmetric (max |R - R^T| = {asym:.3g})")
            eigs = np.linalg.eigvalsh(R)
            if eigs[0] < -PSD_TOL:
                raise ParameterError(f"matrix is not positive semidefinite (min eig = {eigs[0]:.3g})")
            lam_max = float(eigs[-1])
            if lam_max > PSD_TOL:
                limit = 2.0 / lam_max
                if not 0.0 < theta <= limit:
                    raise ParameterError(
                        f"theta must satisfy 0 < theta <= 2/lambda_max = {limit:.6g}, got {theta}"
                    )
            elif theta <= 0:
                raise ParameterError(f"theta must be positive, got {theta}")
        self.matrix = R
        self.offset = r
        self.theta = theta

    def evaluate(self, x) -> NDArray[Float]:
        x = as_point(x, self.n)
        return x + self.displacement(x)

    def displacement(self, x) -> NDArray[Float]:
        # theta * (r - R x), algebraically F(x) - x without the cancellation
        x = as_point(x, self.n)
        return self.theta * (self.offset - self.matrix @ x)

    def evaluate_block(self, l: int, x) -> NDArray[Float]:
        return self.evaluate(x)[self.partition.block_slice(l)]

    def displacement_block(self, l: int, x) -> NDArray[Float]:
        return self.displacement(x)[self.partition.block_slice(l)]


# ---------------------------------------------------------------------------
# operator family


class OperatorFamily:
    """The N local operators of one problem, sharing a partition.

    displacement_bound_B, when set, is an empirical bound on
    max_i ||F_i(x) - x|| over the sampled region (see
    estimate_displacement_bound).
    """

    def __init__(self, operators: list[LocalOperator], displacement_bound_B: float | None = None):
        if len(operators) == 0:
            raise ParameterError("a family needs at least one operator")
        part = operators[0].partition
        for i, op in enumerate(operators):
            if op.partition != part:
                raise DimensionMismatchError(
                    f"operator {i} uses partition {op.partition.dims}, expected {part.dims}"
                )
        self.operators = list(operators)
        self.partition = part
        self.n = part.n
        self.n_agents = len(operators)
        self.displacement_bound_B = displacement_bound_B
        self._batch = self._build_batch()

    def _build_batch(self):
        """Stacked parameters for homogeneous families the engine can vectorize."""
        ops = self.operators
        if all(isinstance(op, Projection) and isinstance(op.target_set, Box) for op in ops):
            lower = np.stack([op.target_set.lower for op in ops])
            upper = np.stack([op.target_set.upper for op in ops])
            return ("box", lower, upper)
        if all(isinstance(op, Affine) for op in ops):
            mats = np.stack([op.matrix for op in ops])
            offs = np.stack([op.offset for op in ops])
            thetas = np.array([op.theta for op in ops])[:, None]
            return ("affine", mats, offs, thetas)
        if all(isinstance(op, Identity) for op in ops):
            return ("identity",)
        return None

    # -- batched displacement paths (engine hot loop; shapes validated by caller)

    def displacement_all(self, states: NDArray[Float]) -> NDArray[Float]:
        """Row i is F_i(states[i]) - states[i]. states is (N, n)."""
        if self._batch is not None:
            tag = self._batch[0]
            if tag == "box":
                _, lower, upper = self._batch
                return np.clip(states, lower, upper) - states
            if tag == "affine":
                _, mats, offs, thetas = self._batch
                return thetas * (offs - np.einsum("ijk,ik->ij", mats, states))
            if tag == "identity":
                return np.zeros_like(states)
        out = np.empty_like(states)
        for i, op in enumerate(self.operators):
            out[i] = op.displacement(states[i])
        return out

    def displacement_block_all(self, l: int, states: NDArray[Float]) -> NDArray[Float]:
        """Block l of each agent's displacement; (N, dims[l])."""
        sl = self.partition.block_slice(l)
        if self._batch is not None:
            tag = self._batch[0]
            if tag == "box":
                _, lower, upper = self._batch
                sub = states[:, sl]
                return np.clip(sub, lower[:, sl], upper[:, sl]) - sub
            if tag == "affine":
                _, mats, offs, thetas = self._batch
                rows = np.einsum("ijk,ik->ij", mats[:, sl, :], states)
                return thetas * (offs[:, sl] - rows)
            if tag == "identity":
                return np.zeros((states.shape[0], sl.stop - sl.start))
        out = np.empty((states.shape[0], sl.stop - sl.start))
        for i, op in enumerate(self.operators):
            out[i] = op.displacement_block(l, states[i])
        return out

    def evaluate_all(self, states: NDArray[Float]) -> NDArray[Float]:
        """Row i is F_i(states[i]), via each kind's native arithmetic."""
        if self._batch is not None:
            tag = self._batch[0]
            if tag == "box":
                _, lower, upper = self._batch
                return np.clip(states, lower, upper)
            if tag == "identity":
                return states.copy()
        if self._batch is None:
            out = np.empty_like(states)
            for i, op in enumerate(self.operators):
                out[i] = op.evaluate(states[i])
            return out
        return states + self.displacement_all(states)

    # -- global operator F = (1/N) sum_i F_i

    def global_displacement(self, x) -> NDArray[Float]:
        x = as_point(x, self.n)
        tiled = np.repeat(x[None, :], self.n_agents, axis=0)
        return self.displacement_all(tiled).mean(axis=0)

    def global_evaluate(self, x) -> NDArray[Float]:
        """F(x), the agent average. Nonexpansive whenever every F_i is.

        A one-member family reproduces its local operator exactly.
        """
        x = as_point(x, self.n)
        if self.n_agents == 1:
            return self.operators[0].evaluate(x)
        tiled = np.repeat(x[None, :], self.n_agents, axis=0)
        return self.evaluate_all(tiled).mean(axis=0)

    # alias so the sampled checker accepts a family anywhere an operator fits
    def evaluate(self, x) -> NDArray[Float]:
        return self.global_evaluate(x)


# ---------------------------------------------------------------------------
# sampled checks


def uniform_box_sampler(n: int, low: float = -10.0, high: float = 10.0):
    """Default point sampler: uniform on [low, high]^n."""

    def sample(rng: np.random.Generator) -> NDArray[Float]:
        return rng.uniform(low, high, n)

    return sample


def check_nonexpansive(
    op,
    num_pairs: int = 1000,
    tol: float = NONEXPANSIVE_TOL,
    seed: int = 0,
    sampler=None,
) -> ValidationReport:
    """Sampled nonexpansiveness check on an operator or a family's average.

    Draws num_pairs point pairs and flags every pair with
    ||F(x) - F(y)|| > ||x - y|| * (1 + tol) + tol. Samples can only refute,
    never prove; constructors enforce the analytic bounds.
    """
    if sampler is None:
        sampler = uniform_box_sampler(op.n)
    rng = np.random.default_rng(seed)
    violations = []
    for p in range(num_pairs):
        x = sampler(rng)
        y = sampler(rng)
        lhs = float(np.linalg.norm(op.evaluate(x) - op.evaluate(y)))
        rhs = float(np.linalg.norm(x - y)) * (1.0 + tol) + tol
        if lhs > rhs:
            violations.append(
                Violation(f"pair {p}", f"||F(x)-F(y)|| = {lhs:.12g} exceeds ||x-y|| = {rhs:.12g}")
            )
    name = "operator: sampled nonexpansiveness"
    if violations:
        return failed(name, violations, f"{len(violations)}/{num_pairs} pairs violate")
    return passed(name, f"{num_pairs} pairs within tolerance {tol:g}")


def estimate_displacement_bound(
    family: OperatorFamily,
    num_points: int = 1000,
    seed: int = 0,
    sampler=None,
) -> float:
    """Empirical max_i ||F_i(x) - x|| over sampled points.

    A sampled maximum is a lower bound on the true supremum; it is stored on
    the family as displacement_bound_B and used only for diagnostics.
    """
    if sampler is None:
        sampler = uniform_box_sampler(family.n)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(num_points):
        x = sampler(rng)
        tiled = np.repeat(x[None, :], family.n_agents, axis=0)
        norms = np.linalg.norm(family.displacement_all(tiled), axis=1)
        worst = max(worst, float(norms.max()))
    family.displacement_bound_B = worst
    return worst
