"""Planar velocity-IK controller: a desk-scale analog of a whole-body tracker.

A chain of revolute joints in the plane tracks weighted Cartesian and
postural velocity references by solving, at every control tick, a strictly
convex quadratic program with hard equality rows (highest-priority tasks)
and per-joint velocity box bounds:

    min  sum_i w_i ||J_i qd - xd_i||^2 + sum_j w_j ||qd_j - qd_ref_j||^2 + c^T qd
    s.t. J_eq qd = xd_eq,   |qd| <= qd_max

The solver pins active box bounds, solves the equality KKT system on the
free variables, and swaps variables in or out of the active set until primal
feasibility and multiplier signs agree. Problems here have at most a dozen
variables, so the dense exact route is both fast and certifiable.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, InfeasibleConstraints, MalformedInput

DEFAULT_CONTROL_RATE = 100.0  # Hz
_TIKHONOV = 1e-9  # keeps the Hessian strictly positive definite
_MAX_ACTIVE_SET_ITERS = 200

# task weights for the default chain: end-effector, mid-chain height,
# and postures from proximal (stiffest) to distal (loosest)
WEIGHT_EFFECTOR = 1.0
WEIGHT_MID_HEIGHT = 0.65
WEIGHT_HEAD_POSTURE = 1.0
WEIGHT_TORSO_POSTURE = 0.72
WEIGHT_DISTAL_POSTURE = 0.11


@dataclass(frozen=True)
class Chain:
    """Planar serial chain: link lengths, joint angles, velocity bounds."""

    lengths: np.ndarray
    q: np.ndarray
    qd_max: np.ndarray
    base: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        lengths = np.asarray(self.lengths, dtype=float)
        q = np.asarray(self.q, dtype=float)
        qd_max = np.asarray(self.qd_max, dtype=float)
        if lengths.ndim != 1 or not np.all(lengths > 0):
            raise MalformedInput("link lengths must be positive")
        if q.shape != lengths.shape or qd_max.shape != lengths.shape:
            raise MalformedInput("q and qd_max must match the link count")
        if np.any(qd_max < 0):
            raise MalformedInput("velocity bounds must be >= 0")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qd_max", qd_max)

    @property
    def n(self) -> int:
        return int(self.lengths.shape[0])

    def with_q(self, q: np.ndarray) -> "Chain":
        return replace(self, q=np.asarray(q, dtype=float))


def forward_kinematics(chain: Chain) -> np.ndarray:
    """Positions of the base and every link endpoint, shape (n+1, 2)."""
    angles = np.cumsum(chain.q)
    steps = chain.lengths[:, None] * np.stack(
        [np.cos(angles), np.sin(angles)], axis=1
    )
    points = np.vstack([np.zeros(2), np.cumsum(steps, axis=0)])
    return points + np.asarray(chain.base)


def jacobian(chain: Chain, point: int) -> np.ndarray:
    """Analytic 2 x n Jacobian of link endpoint `point` (1..n).

    Columns of joints distal to the point are zero.
    """
    if not 1 <= point <= chain.n:
        raise MalformedInput(f"point index {point} outside 1..{chain.n}")
    angles = np.cumsum(chain.q)
    jac = np.zeros((2, chain.n))
    for j in range(point):
        seg = np.arange(j, point)
        jac[0, j] = -np.sum(chain.lengths[seg] * np.sin(angles[seg]))
        jac[1, j] = np.sum(chain.lengths[seg] * np.cos(angles[seg]))
    return jac


@dataclass(frozen=True)
class CartesianTask:
    """Track a reference velocity of one link endpoint."""

    point: int
    xd: np.ndarray  # desired endpoint velocity for the participating rows
    weight: float
    rows: tuple[int, ...] = (0, 1)  # which Cartesian rows participate (0=x, 1=y)


@dataclass(frozen=True)
class PosturalTask:
    """Pull selected joints toward reference joint velocities."""

    joints: tuple[int, ...]
    qd_ref: np.ndarray
    weight: float


@dataclass(frozen=True)
class EqualityTask:
    """Hard rows J_eq qd = xd_eq solved exactly."""

    jac: np.ndarray  # (k, n)
    xd: np.ndarray  # (k,)


@dataclass(frozen=True)
class TaskSet:
    cartesian: tuple[CartesianTask, ...] = ()
    postural: tuple[PosturalTask, ...] = ()
    equality: EqualityTask | None = None
    linear_cost: np.ndarray | None = None

    def __post_init__(self):
        for t in list(self.cartesian) + list(self.postural):
            if not t.weight > 0:
                raise ConfigurationError("task weights must be > 0")


def _quadratic_terms(tasks: TaskSet, chain: Chain) -> tuple[np.ndarray, np.ndarray]:
    """Hessian and gradient (of 1/2 qd'H qd + g'qd) for the task objective."""
    n = chain.n
    hess = _TIKHONOV * np.eye(n)
    grad = np.zeros(n)
    for t in tasks.cartesian:
        jac = jacobian(chain, t.point)[list(t.rows), :]
        xd = np.atleast_1d(np.asarray(t.xd, dtype=float))
        hess += t.weight * jac.T @ jac
        grad -= t.weight * jac.T @ xd
    for t in tasks.postural:
        qd_ref = np.atleast_1d(np.asarray(t.qd_ref, dtype=float))
        for r, j in enumerate(t.joints):
            hess[j, j] += t.weight
            grad[j] -= t.weight * qd_ref[r]
    hess *= 2.0
    grad *= 2.0
    if tasks.linear_cost is not None:
        grad += np.asarray(tasks.linear_cost, dtype=float)
    return hess, grad


def objective(tasks: TaskSet, chain: Chain, qd: np.ndarray) -> float:
    """Task objective value at a candidate velocity (Tikhonov term included)."""
    hess, grad = _quadratic_terms(tasks, chain)
    return float(0.5 * qd @ hess @ qd + grad @ qd)


def _check_equality_rows(a_eq: np.ndarray, b_eq: np.ndarray) -> None:
    sv = np.linalg.svd(a_eq, compute_uv=False)
    if sv.size and sv[-1] < 1e-10 * max(1.0, sv[0]):
        residual = a_eq @ np.linalg.lstsq(a_eq, b_eq, rcond=None)[0] - b_eq
        if np.max(np.abs(residual)) > 1e-12:
            raise InfeasibleConstraints("inconsistent equality rows")
        raise InfeasibleConstraints("equality rows are rank deficient")


def _kkt_solve(
    hess: np.ndarray,
    grad: np.ndarray,
    a_eq: np.ndarray | None,
    b_eq: np.ndarray | None,
    fixed: dict[int, float],
    n: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Equality-constrained solve with some variables pinned to their bounds.

    Returns the full primal vector and the equality multipliers.
    """
    free = [i for i in range(n) if i not in fixed]
    pinned = list(fixed)
    pinned_vals = np.array([fixed[i] for i in pinned])
    x = np.zeros(n)
    x[pinned] = pinned_vals
    k = a_eq.shape[0] if a_eq is not None else 0
    if not free:
        return x, np.zeros(k)
    hf = hess[np.ix_(free, free)]
    gf = grad[free] + hess[np.ix_(free, pinned)] @ pinned_vals
    if k:
        af = a_eq[:, free]
        rhs_eq = b_eq - a_eq[:, pinned] @ pinned_vals
        kkt = np.block([[hf, af.T], [af, np.zeros((k, k))]])
        rhs = np.concatenate([-gf, rhs_eq])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            try:
                sol = np.linalg.solve(kkt + 1e-12 * np.eye(kkt.shape[0]), rhs)
            except np.linalg.LinAlgError:
                raise InfeasibleConstraints("singular KKT system") from None
        x[free] = sol[: len(free)]
        nu = sol[len(free):]
    else:
        x[free] = np.linalg.solve(hf, -gf)
        nu = np.zeros(0)
    return x, nu


def solve(tasks: TaskSet, chain: Chain) -> np.ndarray:
    """Joint velocities minimizing the task objective under the constraints.

    Box bounds hold exactly, equality rows to solver precision. Raises
    InfeasibleConstraints when the equality rows contradict each other or
    cannot be met inside the box.
    """
    n = chain.n
    hess, grad = _quadratic_terms(tasks, chain)
    a_eq = b_eq = None
    if tasks.equality is not None:
        a_eq = np.atleast_2d(np.asarray(tasks.equality.jac, dtype=float))
        b_eq = np.atleast_1d(np.asarray(tasks.equality.xd, dtype=float))
        _check_equality_rows(a_eq, b_eq)

    lo, hi = -chain.qd_max, chain.qd_max
    fixed: dict[int, float] = {}
    x = np.zeros(n)
    for _ in range(_MAX_ACTIVE_SET_ITERS):
        x, nu = _kkt_solve(hess, grad, a_eq, b_eq, fixed, n)
        # most violated free variable gets pinned at its bound
        viol = np.maximum(x - hi, lo - x)
        if fixed:
            viol[list(fixed)] = -np.inf
        worst = int(np.argmax(viol))
        if viol[worst] > 1e-12:
            fixed[worst] = hi[worst] if x[worst] > hi[worst] else lo[worst]
            continue
        # pinned variable whose multiplier has the wrong sign gets released
        lagr = hess @ x + grad
        if a_eq is not None:
            lagr = lagr + a_eq.T @ nu
        release = None
        worst_mult = -1e-10
        for i, v in fixed.items():
            # at the upper bound the objective must push upward (lagr <= 0),
            # at the lower bound downward (lagr >= 0)
            mult = -lagr[i] if v == hi[i] else lagr[i]
            if mult < worst_mult:
                worst_mult = mult
                release = i
        if release is None:
            break
        del fixed[release]
    else:
        raise InfeasibleConstraints("active-set iteration did not converge")

    x = np.clip(x, lo, hi)
    if a_eq is not None and a_eq.size:
        violation = float(np.max(np.abs(a_eq @ x - b_eq)))
        if violation > 1e-9:
            raise InfeasibleConstraints(
                f"equality violated by {violation:.2e} (unreachable inside the box)"
            )
    return x


def kkt_residual(tasks: TaskSet, chain: Chain, qd: np.ndarray) -> float:
    """Stationarity residual of a candidate solution (infinity norm).

    Equality multipliers are recovered by least squares on the strictly free
    components; components resting on a box bound only contribute when their
    gradient points away from the bound (wrong multiplier sign).
    """
    hess, grad = _quadratic_terms(tasks, chain)
    lagr = hess @ qd + grad
    lo, hi = -chain.qd_max, chain.qd_max
    at_hi = qd >= hi - 1e-12
    at_lo = qd <= lo + 1e-12
    free = ~(at_hi | at_lo)
    if tasks.equality is not None:
        a_eq = np.atleast_2d(np.asarray(tasks.equality.jac, dtype=float))
        if np.any(free):
            nu = np.linalg.lstsq(a_eq[:, free].T, -lagr[free], rcond=None)[0]
        else:
            nu = np.linalg.lstsq(a_eq.T, -lagr, rcond=None)[0]
        lagr = lagr + a_eq.T @ nu
    res = 0.0
    for i in range(chain.n):
        if at_hi[i] and lagr[i] < 0:
            continue
        if at_lo[i] and lagr[i] > 0:
            continue
        res = max(res, abs(float(lagr[i])))
    return res


def step_plant(chain: Chain, qd: np.ndarray, dt: float) -> Chain:
    """Kinematic integration of the position-controlled plant."""
    if not dt > 0:
        raise MalformedInput(f"dt must be > 0, got {dt}")
    return chain.with_q(chain.q + np.asarray(qd, dtype=float) * dt)


# ----------------------------------------------------------------------
# default desk-scale plant and reference tracking
# ----------------------------------------------------------------------


def default_chain() -> Chain:
    """Four-link chain used by the experiments and the live service.

    A short upright pelvis link (pinned horizontally by the equality row)
    carrying a folded three-link arm, so the useful workspace sits forward
    and above the tip's rest position.
    """
    return Chain(
        lengths=np.array([0.15, 0.35, 0.30, 0.25]),
        q=np.array([np.pi / 2, -0.8, -0.9, -0.7]),
        qd_max=np.full(4, 3.0),
    )


@dataclass
class TrackingController:
    """Position tracker: builds the weighted TaskSet each tick and integrates.

    The tip follows (x, y) position references with velocity feedforward;
    the second link endpoint's height plays the mid-chain height role and is
    held near its initial value; the remaining joints are pulled softly back
    toward the initial posture. The first endpoint's horizontal position is
    pinned by the hard equality row.
    """

    chain: Chain = field(default_factory=default_chain)
    rate: float = DEFAULT_CONTROL_RATE
    kp: float = 80.0
    kp_posture: float = 0.25
    hold_equality: bool = True

    def __post_init__(self):
        points = forward_kinematics(self.chain)
        self._q0 = self.chain.q.copy()
        self._anchor_x = float(points[1, 0])
        self._mid_height = float(points[2, 1])

    def tip(self) -> np.ndarray:
        return forward_kinematics(self.chain)[-1]

    def task_set(
        self,
        tip_ref: np.ndarray,
        tip_ff: np.ndarray | None = None,
        posture_ref: np.ndarray | None = None,
    ) -> TaskSet:
        points = forward_kinematics(self.chain)
        xd = self.kp * (np.asarray(tip_ref, dtype=float) - points[-1])
        if tip_ff is not None:
            xd = xd + np.asarray(tip_ff, dtype=float)
        n = self.chain.n
        cart = (
            CartesianTask(point=n, xd=xd, weight=WEIGHT_EFFECTOR),
            CartesianTask(
                point=2,
                xd=np.array([self.kp_posture * (self._mid_height - points[2, 1])]),
                weight=WEIGHT_MID_HEIGHT,
                rows=(1,),
            ),
        )
        if posture_ref is None:
            posture_ref = self._q0
        qd_post = self.kp_posture * (np.asarray(posture_ref) - self.chain.q)
        postural = (
            PosturalTask((1,), qd_post[1:2], WEIGHT_HEAD_POSTURE),
            PosturalTask((2,), qd_post[2:3], WEIGHT_TORSO_POSTURE),
            PosturalTask((3,), qd_post[3:4], WEIGHT_DISTAL_POSTURE),
        )
        equality = None
        if self.hold_equality:
            equality = EqualityTask(
                jac=jacobian(self.chain, 1)[0:1, :],
                xd=np.array([self.kp * (self._anchor_x - points[1, 0])]),
            )
        return TaskSet(cart, postural, equality)

    def step(
        self, tip_ref: np.ndarray, tip_ff: np.ndarray | None = None
    ) -> np.ndarray:
        """One control tick: solve, integrate, return the applied velocities."""
        tasks = self.task_set(tip_ref, tip_ff)
        qd = solve(tasks, self.chain)
        self.chain = step_plant(self.chain, qd, 1.0 / self.rate)
        return qd
