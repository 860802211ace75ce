import numpy as np
import pytest
from scipy.optimize import minimize

from lagcomp.controller import (
    CartesianTask,
    Chain,
    EqualityTask,
    PosturalTask,
    TaskSet,
    TrackingController,
    default_chain,
    forward_kinematics,
    jacobian,
    kkt_residual,
    objective,
    solve,
    step_plant,
)
from lagcomp.errors import InfeasibleConstraints, MalformedInput


def two_link(q=(0.0, 0.0), qd_max=(10.0, 10.0)):
    return Chain(np.array([1.0, 1.0]), np.array(q, dtype=float), np.array(qd_max))


def scipy_oracle(tasks, chain):
    """Independent reference solution via SLSQP on the same objective."""

    def f(qd):
        return objective(tasks, chain, qd)

    cons = []
    if tasks.equality is not None:
        a = np.atleast_2d(tasks.equality.jac)
        b = np.atleast_1d(tasks.equality.xd)
        cons.append({"type": "eq", "fun": lambda qd: a @ qd - b})
    bounds = [(-m, m) for m in chain.qd_max]
    res = minimize(
        f,
        np.zeros(chain.n),
        method="SLSQP",
        bounds=bounds,
        constraints=cons,
        options={"ftol": 1e-14, "maxiter": 500},
    )
    return res.x


class TestForwardKinematics:
    def test_straight_chain(self):
        points = forward_kinematics(two_link())
        assert np.allclose(points[-1], [2.0, 0.0])

    def test_upright_first_link(self):
        points = forward_kinematics(two_link(q=(np.pi / 2, 0.0)))
        assert np.allclose(points[-1], [0.0, 2.0], atol=1e-12)

    def test_reach_bounded_by_total_length(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            chain = two_link(q=rng.uniform(-np.pi, np.pi, 2))
            tip = forward_kinematics(chain)[-1]
            assert np.linalg.norm(tip - chain.base) <= 2.0 + 1e-12


class TestJacobian:
    def test_straight_chain_first_column(self):
        jac = jacobian(two_link(), 2)
        assert np.allclose(jac[:, 0], [0.0, 2.0])

    def test_single_link_textbook_form(self):
        chain = Chain(np.array([0.7]), np.array([0.3]), np.array([1.0]))
        jac = jacobian(chain, 1)
        assert np.allclose(jac[:, 0], [-0.7 * np.sin(0.3), 0.7 * np.cos(0.3)])

    def test_distal_columns_zero(self):
        chain = default_chain()
        jac = jacobian(chain, 2)
        assert np.allclose(jac[:, 2:], 0.0)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        h = 1e-6
        for _ in range(100):
            chain = Chain(
                lengths=rng.uniform(0.2, 1.0, 4),
                q=rng.uniform(-np.pi, np.pi, 4),
                qd_max=np.full(4, 1.0),
            )
            point = int(rng.integers(1, 5))
            jac = jacobian(chain, point)
            fd = np.zeros_like(jac)
            for j in range(4):
                dq = np.zeros(4)
                dq[j] = h
                fwd = forward_kinematics(chain.with_q(chain.q + dq))[point]
                bwd = forward_kinematics(chain.with_q(chain.q - dq))[point]
                fd[:, j] = (fwd - bwd) / (2 * h)
            assert np.max(np.abs(jac - fd)) < 1e-5


class TestSolve:
    def test_unconstrained_matches_normal_equations(self):
        chain = two_link(q=(0.3, -0.4))
        jac = jacobian(chain, 2)
        xd = np.array([0.1, -0.2])
        tasks = TaskSet(cartesian=(CartesianTask(2, xd, 1.0),))
        qd = solve(tasks, chain)
        oracle = np.linalg.solve(jac.T @ jac + 1e-9 * np.eye(2), jac.T @ xd)
        assert np.allclose(qd, oracle, atol=1e-8)

    def test_zero_bounds_clamp_everything(self):
        chain = two_link(qd_max=(0.0, 0.0))
        tasks = TaskSet(
            cartesian=(CartesianTask(2, np.array([1.0, 1.0]), 1.0),),
            postural=(PosturalTask((0,), np.array([5.0]), 2.0),),
        )
        assert np.allclose(solve(tasks, chain), 0.0)

    def test_weighted_mean_of_conflicting_postures(self):
        chain = two_link()
        tasks = TaskSet(
            postural=(
                PosturalTask((0,), np.array([0.0]), 1.0),
                PosturalTask((0,), np.array([4.0]), 3.0),
            )
        )
        qd = solve(tasks, chain)
        assert qd[0] == pytest.approx(3.0, abs=1e-6)

    def test_box_constraints_exact(self):
        chain = two_link(qd_max=(0.5, 0.25))
        tasks = TaskSet(postural=(PosturalTask((0, 1), np.array([2.0, -2.0]), 1.0),))
        qd = solve(tasks, chain)
        assert qd[0] == 0.5 and qd[1] == -0.25

    def test_equality_rows_hold(self):
        chain = Chain(
            np.array([0.5, 0.5, 0.5]),
            np.array([0.7, -0.3, 0.4]),
            np.full(3, 2.0),
        )
        eq = EqualityTask(jacobian(chain, 1)[0:1, :], np.array([0.05]))
        tasks = TaskSet(
            cartesian=(CartesianTask(3, np.array([0.2, 0.1]), 1.0),),
            equality=eq,
        )
        qd = solve(tasks, chain)
        assert abs(eq.jac @ qd - eq.xd)[0] < 1e-9

    def test_matches_scipy_on_random_problems(self):
        rng = np.random.default_rng(2)
        for trial in range(30):
            n = int(rng.integers(2, 6))
            chain = Chain(
                lengths=rng.uniform(0.2, 0.8, n),
                q=rng.uniform(-1.5, 1.5, n),
                qd_max=rng.uniform(0.2, 2.0, n),
            )
            tasks = TaskSet(
                cartesian=(
                    CartesianTask(n, rng.normal(0, 0.5, 2), float(rng.uniform(0.5, 2))),
                ),
                postural=(
                    PosturalTask(
                        tuple(range(n)), rng.normal(0, 1, n), float(rng.uniform(0.1, 1))
                    ),
                ),
                equality=(
                    EqualityTask(jacobian(chain, 1)[0:1, :], np.zeros(1))
                    if trial % 2 == 0
                    else None
                ),
            )
            qd = solve(tasks, chain)
            ours = objective(tasks, chain, qd)
            ref = scipy_oracle(tasks, chain)
            theirs = objective(tasks, chain, ref)
            assert ours <= theirs + 1e-7
            assert np.all(np.abs(qd) <= chain.qd_max + 1e-12)

    def test_objective_not_worse_than_baselines(self):
        rng = np.random.default_rng(3)
        chain = Chain(
            lengths=np.array([0.4, 0.4, 0.3]),
            q=rng.uniform(-1, 1, 3),
            qd_max=np.array([0.5, 0.5, 0.5]),
        )
        tasks = TaskSet(cartesian=(CartesianTask(3, np.array([0.3, -0.3]), 1.0),))
        qd = solve(tasks, chain)
        zero = objective(tasks, chain, np.zeros(3))
        jac = jacobian(chain, 3)
        unclamped = np.linalg.lstsq(jac, np.array([0.3, -0.3]), rcond=None)[0]
        clamped = np.clip(unclamped, -chain.qd_max, chain.qd_max)
        assert objective(tasks, chain, qd) <= zero + 1e-12
        assert objective(tasks, chain, qd) <= objective(tasks, chain, clamped) + 1e-12

    def test_weight_scale_invariance(self):
        chain = two_link(q=(0.2, 0.6))
        base = TaskSet(
            cartesian=(CartesianTask(2, np.array([0.1, 0.2]), 1.0),),
            postural=(PosturalTask((1,), np.array([0.3]), 0.5),),
        )
        doubled = TaskSet(
            cartesian=(CartesianTask(2, np.array([0.1, 0.2]), 2.0),),
            postural=(PosturalTask((1,), np.array([0.3]), 1.0),),
        )
        assert np.allclose(solve(base, chain), solve(doubled, chain), atol=1e-7)

    def test_inconsistent_equalities_raise(self):
        chain = two_link()
        jac = jacobian(chain, 2)[0:1, :]
        eq = EqualityTask(np.vstack([jac, jac]), np.array([0.1, 0.2]))
        with pytest.raises(InfeasibleConstraints):
            solve(TaskSet(equality=eq), chain)

    def test_equality_unreachable_inside_box(self):
        chain = two_link(qd_max=(0.01, 0.01))
        eq = EqualityTask(np.array([[1.0, 0.0]]), np.array([5.0]))
        with pytest.raises(InfeasibleConstraints):
            solve(TaskSet(equality=eq), chain)


class TestStepPlant:
    def test_zero_velocity_unchanged(self):
        chain = two_link(q=(0.3, 0.4))
        after = step_plant(chain, np.zeros(2), 0.01)
        assert np.allclose(after.q, chain.q)

    def test_integration_arithmetic(self):
        chain = two_link()
        after = step_plant(chain, np.array([0.1, 0.1]), 0.01)
        assert np.allclose(after.q, [0.001, 0.001])

    def test_dt_positive(self):
        with pytest.raises(MalformedInput):
            step_plant(two_link(), np.zeros(2), 0.0)


class TestClosedLoop:
    def test_circle_tracking_rms(self):
        ctrl = TrackingController()
        center = forward_kinematics(ctrl.chain)[-1]
        radius, period = 0.06, 4.0
        errors = []
        dt = 1.0 / ctrl.rate
        for k in range(int(period / dt)):
            t = k * dt
            angle = 2 * np.pi * t / period
            ref = center + radius * np.array([np.cos(angle) - 1.0, np.sin(angle)])
            ff = (
                radius
                * 2
                * np.pi
                / period
                * np.array([-np.sin(angle), np.cos(angle)])
            )
            ctrl.step(ref, ff)
            errors.append(np.linalg.norm(ctrl.tip() - ref))
        rms = float(np.sqrt(np.mean(np.square(errors))))
        assert rms < 0.005

    def test_kkt_certificate_along_run(self):
        ctrl = TrackingController()
        center = forward_kinematics(ctrl.chain)[-1]
        dt = 1.0 / ctrl.rate
        for k in range(500):
            t = k * dt
            ref = center + 0.05 * np.array([np.sin(t), np.sin(2 * t)])
            tasks = ctrl.task_set(ref)
            qd = solve(tasks, ctrl.chain)
            assert np.all(np.abs(qd) <= ctrl.chain.qd_max)
            if tasks.equality is not None:
                assert np.max(np.abs(tasks.equality.jac @ qd - tasks.equality.xd)) < 1e-9
            assert kkt_residual(tasks, ctrl.chain, qd) < 1e-8
            ctrl.chain = step_plant(ctrl.chain, qd, dt)
