"""Iteration engine: steps, block draws, full runs, and their identities.

The mean-evolution identities are the load-bearing checks: averaging the
per-agent update over a doubly stochastic mixing round must reproduce the
single-point relaxed iteration on the agent-averaged displacement, exactly
to rounding.
"""

import numpy as np
import pytest

from dkmsim import (
    Affine,
    Ball,
    BlockPartition,
    BlockSelector,
    Box,
    GradientStep,
    Huber,
    Identity,
    OperatorFamily,
    PowerLawStepsize,
    Projection,
    Quadratic,
    RunConfig,
    UniformInit,
    centralized_km,
    dbkm_step,
    dkm_step,
    draw_block,
    initial_states,
    mix,
    ring_schedule,
    run,
    staircase_boxes,
    validate_full,
    validate_run,
)
from dkmsim.errors import (
    AssumptionError,
    DimensionMismatchError,
    DivergenceError,
    ParameterError,
)
from dkmsim.graphs import GraphSchedule

from oracles import matrix_power_states

STEP = PowerLawStepsize(1.0, 0.7, 1)


def mixed_family(n_agents=4, seed=0):
    """Heterogeneous family (no batched path) on a 3-block partition of R^4."""
    part = BlockPartition((2, 1, 1))
    rng = np.random.default_rng(seed)
    ops = []
    kinds = [
        lambda: Projection(part, Ball(rng.standard_normal(4), 2.0)),
        lambda: Projection(part, Box(-np.ones(4), rng.uniform(0.5, 2.0, 4))),
        lambda: GradientStep(part, Huber(rng.standard_normal(4), 1.0), tau=1.0),
        lambda: GradientStep(part, Quadratic(rng.standard_normal((4, 4)) * 0.3, rng.standard_normal(4)), tau=0.5),
    ]
    for i in range(n_agents):
        ops.append(kinds[i % len(kinds)]())
    return OperatorFamily(ops)


# ---------------------------------------------------------------------------
# block selector


def test_selector_validation():
    with pytest.raises(ParameterError):
        BlockSelector(())
    with pytest.raises(ParameterError):
        BlockSelector((0.5, -0.5, 1.0))
    with pytest.raises(ParameterError):
        BlockSelector((0.5, 0.6))
    with pytest.raises(ParameterError):
        BlockSelector((0.5, 0.5 + 1e-9))


def test_uniform_selector():
    sel = BlockSelector.uniform(3)
    assert sel.num_blocks == 3
    assert sel.is_uniform()
    assert not BlockSelector((0.9, 0.1)).is_uniform()


def test_single_block_always_drawn():
    sel = BlockSelector((1.0,))
    rng = np.random.default_rng(0)
    assert all(draw_block(sel, rng) == 0 for _ in range(100))


def test_draw_frequencies_uniform_three():
    sel = BlockSelector.uniform(3)
    rng = np.random.default_rng(1)
    draws = np.array([draw_block(sel, rng) for _ in range(30_000)])
    for block in range(3):
        freq = np.mean(draws == block)
        assert abs(freq - 1.0 / 3.0) < 0.02


def test_draw_frequencies_skewed():
    sel = BlockSelector((0.9, 0.1))
    rng = np.random.default_rng(2)
    draws = np.array([draw_block(sel, rng) for _ in range(10_000)])
    assert 0.88 <= np.mean(draws == 0) <= 0.92


def test_draws_are_reproducible():
    sel = BlockSelector((0.2, 0.3, 0.5))
    a = [draw_block(sel, np.random.default_rng(7)) for _ in range(1)]
    b = [draw_block(sel, np.random.default_rng(7)) for _ in range(1)]
    assert a == b
    seq1 = [draw_block(sel, rng) for rng in [np.random.default_rng(9)] for _ in range(20)]
    rng = np.random.default_rng(9)
    seq2 = [draw_block(sel, rng) for _ in range(20)]
    assert seq1 == seq2


# ---------------------------------------------------------------------------
# single steps


def test_dkm_step_identity_family_is_pure_mixing():
    part = BlockPartition.single(2)
    family = OperatorFamily([Identity(part) for _ in range(3)])
    A = np.full((3, 3), 1.0 / 3.0)
    states = np.arange(6.0).reshape(3, 2)
    assert np.array_equal(dkm_step(states, A, family, 0.5), mix(A, states))


def test_dkm_step_hand_traced():
    # two agents averaging to (1,1), both projecting onto [0,1]: already fixed
    part = BlockPartition.single(1)
    box = Box(np.array([0.0]), np.array([1.0]))
    family = OperatorFamily([Projection(part, box), Projection(part, box)])
    A = np.full((2, 2), 0.5)
    states = np.array([[-1.0], [3.0]])
    out = dkm_step(states, A, family, alpha=0.5)
    assert np.allclose(out, [[1.0], [1.0]])


def test_dkm_step_alpha_guard():
    part = BlockPartition.single(1)
    family = OperatorFamily([Identity(part)])
    with pytest.raises(ParameterError):
        dkm_step(np.zeros((1, 1)), np.eye(1), family, alpha=0.0)
    with pytest.raises(ParameterError):
        dkm_step(np.zeros((1, 1)), np.eye(1), family, alpha=1.5)


def test_dbkm_step_single_block_equals_full_step():
    family = OperatorFamily([Projection(BlockPartition.single(3), Ball(np.zeros(3), 1.0)) for _ in range(2)])
    A = np.full((2, 2), 0.5)
    rng = np.random.default_rng(3)
    states = rng.uniform(-4, 4, (2, 3))
    full = dkm_step(states, A, family, 0.7)
    blocked = dbkm_step(states, A, family, 0.7, block=0)
    assert np.array_equal(full, blocked)


def test_dbkm_step_leaves_other_blocks_mixed_only():
    family = mixed_family()
    part = family.partition
    A = ring_schedule(4, 2, 0.5).at(0)
    rng = np.random.default_rng(4)
    states = rng.uniform(-3, 3, (4, 4))
    xhat = mix(A, states)
    full = dkm_step(states, A, family, 0.6)
    for block in range(part.m):
        out = dbkm_step(states, A, family, 0.6, block=block)
        sl = part.block_slice(block)
        # drawn block matches the full update's same block
        assert np.allclose(out[:, sl], full[:, sl], atol=1e-15)
        # every other block carries the mixed value through untouched
        for other in range(part.m):
            if other != block:
                so = part.block_slice(other)
                assert np.array_equal(out[:, so], xhat[:, so])


def test_identity_family_ignores_drawn_block():
    part = BlockPartition((1, 1))
    family = OperatorFamily([Identity(part), Identity(part)])
    A = np.full((2, 2), 0.5)
    states = np.array([[1.0, 2.0], [3.0, 4.0]])
    for block in (0, 1):
        assert np.array_equal(dbkm_step(states, A, family, 0.9, block), mix(A, states))


# ---------------------------------------------------------------------------
# centralized iteration


def test_centralized_identity_stays_put():
    part = BlockPartition.single(2)
    family = OperatorFamily([Identity(part)])
    x0 = np.array([2.0, -3.0])
    traj = centralized_km(family, x0, STEP, 50)
    assert traj.shape == (51, 2)
    assert np.array_equal(traj[-1], x0)


def test_centralized_projection_lands_in_one_full_step():
    part = BlockPartition.single(1)
    family = OperatorFamily([Projection(part, Box(np.array([0.0]), np.array([1.0])))])
    traj = centralized_km(family, np.array([3.0]), PowerLawStepsize(1.0, 0.0, 1), 5)
    assert traj[0, 0] == 3.0
    assert np.all(traj[1:, 0] == 1.0)


def test_centralized_affine_converges_to_solve():
    part = BlockPartition.single(2)
    family = OperatorFamily([Affine(part, 2.0 * np.eye(2), np.array([2.0, 4.0]), theta=0.5)])
    traj = centralized_km(family, np.zeros(2), STEP, 200)
    assert np.linalg.norm(traj[-1] - np.array([1.0, 2.0])) < 1e-6


# ---------------------------------------------------------------------------
# mean-evolution identities


def test_full_mode_mean_evolution_identity():
    family = mixed_family()
    schedule = ring_schedule(4, 2, 0.5)
    rng = np.random.default_rng(5)
    states = rng.uniform(-5, 5, (4, 4))
    for k in range(1000):
        A = schedule.at(k)
        alpha = STEP.alpha(k)
        xhat = mix(A, states)
        states_next = dkm_step(states, A, family, alpha)
        # the agent mean obeys the single-point relaxed update on the mean
        # of local evaluations at the mixed states
        mean_eval = family.evaluate_all(xhat).mean(axis=0)
        predicted = states.mean(axis=0) + alpha * (mean_eval - states.mean(axis=0))
        assert np.allclose(states_next.mean(axis=0), predicted, atol=1e-10)
        states = states_next


def test_block_mode_mean_evolution_identity():
    family = mixed_family()
    part = family.partition
    schedule = ring_schedule(4, 2, 0.5)
    selector = BlockSelector.uniform(part.m)
    rng = np.random.default_rng(6)
    states = rng.uniform(-5, 5, (4, 4))
    for k in range(1000):
        A = schedule.at(k)
        alpha = STEP.alpha(k)
        block = draw_block(selector, rng)
        xhat = mix(A, states)
        states_next = dbkm_step(states, A, family, alpha, block)
        mean_next = states_next.mean(axis=0)
        mean_now = states.mean(axis=0)
        for l in range(part.m):
            sl = part.block_slice(l)
            if l == block:
                disp = family.displacement_block_all(l, xhat).mean(axis=0)
                assert np.allclose(mean_next[sl], mean_now[sl] + alpha * disp, atol=1e-10)
            else:
                # untouched blocks keep the mean exactly (mixing preserves it)
                assert np.allclose(mean_next[sl], mean_now[sl], atol=1e-10)
        states = states_next


def test_identity_family_consensus_matches_matrix_powers():
    part = BlockPartition.single(2)
    family = OperatorFamily([Identity(part) for _ in range(5)])
    schedule = ring_schedule(5, 2, 0.5)
    rng = np.random.default_rng(7)
    states = rng.uniform(-5, 5, (5, 2))
    oracle = matrix_power_states(schedule.matrices, states, 400)
    config = RunConfig(
        family=family,
        stepsize=STEP,
        schedule=schedule,
        mode="dkm",
        max_rounds=400,
        init=states,
    )
    trace = run(config)
    assert np.allclose(trace.final_states, oracle, atol=1e-12)
    residuals = trace.column("consensus_residual")
    assert residuals[-1] < 1e-8
    assert all(b <= a + 1e-15 for a, b in zip(residuals, residuals[1:]))


# ---------------------------------------------------------------------------
# degeneracy identities


def test_single_agent_run_equals_centralized():
    part = BlockPartition.single(3)
    family = OperatorFamily([Projection(part, Box(np.zeros(3), np.ones(3)))])
    schedule = GraphSchedule([np.eye(1)], Q=1, weight_floor=0.5)
    x0 = np.array([[4.0, -3.0, 0.5]])
    config = RunConfig(
        family=family, stepsize=STEP, schedule=schedule, mode="dkm", max_rounds=1000, init=x0, snapshot_every=1
    )
    trace = run(config)
    traj = centralized_km(family, x0[0], STEP, 1000)
    snaps = [rec.snapshot for rec in trace.records if rec.snapshot is not None]
    assert len(snaps) == 1001
    for k, snap in enumerate(snaps):
        assert np.array_equal(snap[0], traj[k]), f"diverged from centralized at round {k}"


def test_single_block_run_equals_full_run():
    family = OperatorFamily([Projection(BlockPartition.single(3), b) for b in staircase_boxes(6)])
    schedule = ring_schedule(6, 2, 0.5)
    kwargs = dict(family=family, stepsize=STEP, schedule=schedule, max_rounds=1000, seed=3)
    full = run(RunConfig(mode="dkm", **kwargs))
    blocked = run(RunConfig(mode="dbkm", selector=BlockSelector((1.0,)), **kwargs))
    assert np.array_equal(full.final_states, blocked.final_states)
    assert full.column("consensus_residual") == blocked.column("consensus_residual")


def test_gradient_step_round_is_a_descent_update():
    # mixing then stepping equals the textbook update x_hat - alpha*(tau*grad),
    # allowing one ulp per coordinate
    rng = np.random.default_rng(8)
    part = BlockPartition.single(3)
    for trial in range(100):
        ops = []
        for _ in range(3):
            if trial % 2:
                obj = Quadratic(rng.standard_normal((4, 3)) * 0.4, rng.standard_normal(4))
            else:
                obj = Huber(rng.standard_normal(3), 1.0)
            ops.append(GradientStep(part, obj, tau=1.0 / obj.lipschitz_L))
        family = OperatorFamily(ops)
        A = ring_schedule(3, 1, 0.5).at(0)
        states = rng.uniform(-5, 5, (3, 3))
        alpha = float(rng.uniform(0.05, 1.0))
        stepped = dkm_step(states, A, family, alpha)
        xhat = mix(A, states)
        for i, op in enumerate(ops):
            dgd = xhat[i] - alpha * (op.tau * op.objective.gradient(xhat[i]))
            gap = np.abs(stepped[i] - dgd)
            tol = np.spacing(np.maximum(np.abs(stepped[i]), np.abs(dgd)))
            assert np.all(gap <= tol)


# ---------------------------------------------------------------------------
# initial states


def test_uniform_init_is_seed_reproducible():
    family = mixed_family()
    schedule = ring_schedule(4, 2, 0.5)
    config = RunConfig(family=family, stepsize=STEP, schedule=schedule, seed=11)
    a = initial_states(config)
    b = initial_states(config)
    assert np.array_equal(a, b)
    assert a.shape == (4, 4)
    assert np.all((a >= -5) & (a <= 5))


def test_explicit_init_is_copied():
    part = BlockPartition.single(1)
    family = OperatorFamily([Identity(part)])
    schedule = GraphSchedule([np.eye(1)], Q=1, weight_floor=0.5)
    x0 = np.array([[2.0]])
    config = RunConfig(family=family, stepsize=STEP, schedule=schedule, init=x0)
    got = initial_states(config)
    got[0, 0] = 99.0
    assert config.init[0, 0] == 2.0


def test_centralized_init_uses_mean_of_explicit_states():
    part = BlockPartition.single(2)
    family = OperatorFamily([Identity(part), Identity(part)])
    config = RunConfig(
        family=family,
        stepsize=STEP,
        mode="centralized",
        init=np.array([[0.0, 2.0], [4.0, 6.0]]),
    )
    assert np.array_equal(initial_states(config), [[2.0, 4.0]])


# ---------------------------------------------------------------------------
# config validation


def test_config_cross_checks():
    family = mixed_family()
    schedule = ring_schedule(4, 2, 0.5)
    with pytest.raises(ParameterError):
        RunConfig(family=family, stepsize=STEP, schedule=schedule, mode="warp")
    with pytest.raises(ParameterError):
        RunConfig(family=family, stepsize=STEP, mode="dkm")  # no schedule
    with pytest.raises(DimensionMismatchError):
        RunConfig(family=family, stepsize=STEP, schedule=ring_schedule(5, 1, 0.5))
    with pytest.raises(ParameterError):
        RunConfig(family=family, stepsize=STEP, schedule=schedule, mode="dbkm")  # no selector
    with pytest.raises(DimensionMismatchError):
        RunConfig(
            family=family,
            stepsize=STEP,
            schedule=schedule,
            mode="dbkm",
            selector=BlockSelector.uniform(2),
        )
    with pytest.raises(DimensionMismatchError):
        RunConfig(family=family, stepsize=STEP, schedule=schedule, init=np.zeros((3, 4)))
    with pytest.raises(ParameterError):
        RunConfig(family=family, stepsize=STEP, schedule=schedule, max_rounds=0)
    with pytest.raises(DimensionMismatchError):
        RunConfig(family=family, stepsize=STEP, schedule=schedule, reference=np.zeros(3))


def test_validate_run_flags_bad_stepsize():
    family = mixed_family()
    schedule = ring_schedule(4, 2, 0.5)
    config = RunConfig(family=family, stepsize=PowerLawStepsize(1.0, 0.4, 1), schedule=schedule)
    reports = validate_run(config)
    assert any(not r.passed for r in reports)
    with pytest.raises(AssumptionError):
        run(config)
    # skipping validation lets the run proceed anyway
    config.max_rounds = 10
    trace = run(config, validate=False)
    assert trace.last().k == 10


def test_validate_full_adds_sampled_checks():
    family = mixed_family()
    schedule = ring_schedule(4, 2, 0.5)
    config = RunConfig(family=family, stepsize=STEP, schedule=schedule)
    reports = validate_full(config, num_pairs=50, num_points=50)
    names = [r.check for r in reports]
    assert any("nonexpansive" in n for n in names)
    assert any("displacement bound" in n for n in names)
    assert all(r.passed for r in reports)
    assert family.displacement_bound_B is not None


def test_validate_full_catches_forced_invalid_operator():
    part = BlockPartition.single(2)
    bad = Affine(part, np.eye(2), np.zeros(2), theta=3.0, validate=False)
    family = OperatorFamily([bad, Identity(part)])
    schedule = ring_schedule(2, 1, 0.5)
    config = RunConfig(family=family, stepsize=STEP, schedule=schedule)
    reports = validate_full(config, num_pairs=100)
    bad_reports = [r for r in reports if not r.passed]
    assert len(bad_reports) == 1
    assert "nonexpansive" in bad_reports[0].check


# ---------------------------------------------------------------------------
# full runs


def test_run_records_every_round_below_thousand():
    family = mixed_family()
    config = RunConfig(family=family, stepsize=STEP, schedule=ring_schedule(4, 2, 0.5), max_rounds=500)
    trace = run(config)
    assert trace.column("k") == list(range(501))
    assert trace.last().k == 500
    assert trace.final_states.shape == (4, 4)
    assert trace.aborted_at is None


def test_run_thins_records_after_thousand():
    family = mixed_family()
    config = RunConfig(family=family, stepsize=STEP, schedule=ring_schedule(4, 2, 0.5), max_rounds=5000)
    trace = run(config)
    ks = trace.column("k")
    assert ks[-1] == 5000
    assert len(ks) < 5001
    assert all(a < b for a, b in zip(ks, ks[1:]))
    # cadence: after round 1000 only every ceil(k/1000)-th round is kept
    for k in ks:
        assert k <= 1000 or k % -(-k // 1000) == 0 or k == 5000


def test_run_record_every_override():
    family = mixed_family()
    config = RunConfig(
        family=family, stepsize=STEP, schedule=ring_schedule(4, 2, 0.5), max_rounds=100, record_every=30
    )
    trace = run(config)
    assert trace.column("k") == [0, 30, 60, 90, 100]


def test_run_snapshot_cadence():
    family = mixed_family()
    config = RunConfig(
        family=family,
        stepsize=STEP,
        schedule=ring_schedule(4, 2, 0.5),
        max_rounds=100,
        snapshot_every=40,
    )
    trace = run(config)
    snap_ks = [rec.k for rec in trace.records if rec.snapshot is not None]
    assert snap_ks == [0, 40, 80, 100]
    assert np.array_equal(trace.records[-1].snapshot, trace.final_states)


def test_run_block_column():
    family = OperatorFamily([Projection(BlockPartition((1, 1, 1)), b) for b in staircase_boxes(6)])
    config = RunConfig(
        family=family,
        stepsize=STEP,
        schedule=ring_schedule(6, 2, 0.5),
        mode="dbkm",
        selector=BlockSelector.uniform(3),
        max_rounds=50,
        seed=5,
    )
    trace = run(config)
    blocks = trace.column("selected_block")
    assert blocks[-1] is None  # final row has no outgoing step
    drawn = [b for b in blocks[:-1]]
    assert all(b in (0, 1, 2) for b in drawn)
    assert len(set(drawn)) > 1


def test_run_reference_column():
    family = mixed_family()
    ref = np.zeros(4)
    config = RunConfig(
        family=family,
        stepsize=STEP,
        schedule=ring_schedule(4, 2, 0.5),
        max_rounds=20,
        reference=ref,
    )
    trace = run(config)
    dists = trace.column("dist_to_ref")
    assert all(d is not None and d >= 0 for d in dists)


def test_run_is_deterministic():
    family = OperatorFamily([Projection(BlockPartition((1, 1, 1)), b) for b in staircase_boxes(6)])
    kwargs = dict(
        family=family,
        stepsize=STEP,
        schedule=ring_schedule(6, 2, 0.5),
        mode="dbkm",
        selector=BlockSelector.uniform(3),
        max_rounds=300,
        seed=21,
    )
    t1 = run(RunConfig(**kwargs))
    t2 = run(RunConfig(**kwargs))
    assert np.array_equal(t1.final_states, t2.final_states)
    assert t1.column("selected_block") == t2.column("selected_block")
    assert t1.column("consensus_residual") == t2.column("consensus_residual")
    t3 = run(RunConfig(**{**kwargs, "seed": 22}))
    assert t3.column("selected_block") != t1.column("selected_block")


def test_run_divergence_aborts_with_partial_trace():
    # force-built expanding affine map: F(x) = 2x, displacement x
    part = BlockPartition.single(1)
    grow = Affine(part, -np.eye(1), np.zeros(1), theta=1.0, validate=False)
    family = OperatorFamily([grow])
    schedule = GraphSchedule([np.eye(1)], Q=1, weight_floor=0.5)
    config = RunConfig(
        family=family,
        stepsize=PowerLawStepsize(1.0, 0.0, 1),
        schedule=schedule,
        max_rounds=1000,
        init=np.array([[1.0]]),
        divergence_limit=1e6,
    )
    with pytest.raises(DivergenceError) as exc:
        run(config, validate=False)
    trace = exc.value.trace
    assert trace.aborted_at == exc.value.last_round + 1
    assert trace.aborted_at < 50  # doubling passes 1e6 after ~20 rounds
    assert len(trace.records) > 0
    assert trace.final_states is None
