"""Small dense solvers: a convex QP solver and a damped least-squares pose solver."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .model import RobotModel, kinematics

FEAS_TOL = 1e-8
KKT_TOL = 1e-6
MAX_DIM = 32


class QpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITER = "MaxIter"


@dataclass
class QpProblem:
    """min 1/2 x'Hx + c'x  s.t.  A_eq x = b_eq,  A_in x >= b_in."""

    H: np.ndarray
    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = len(self.c)
        if self.H.shape != (n, n):
            raise ValueError(f"H must be {n}x{n}")
        if np.max(np.abs(self.H - self.H.T), initial=0.0) > 1e-10:
            raise ValueError("H must be symmetric")
        self.A_eq, self.b_eq = self._rows(self.A_eq, self.b_eq, n, "eq")
        self.A_in, self.b_in = self._rows(self.A_in, self.b_in, n, "in")
        if n > MAX_DIM or len(self.b_eq) + len(self.b_in) > MAX_DIM:
            raise ValueError(f"problem exceeds the {MAX_DIM}-variable / {MAX_DIM}-row dense limit")

    @staticmethod
    def _rows(A, b, n, name):
        if A is None:
            return np.zeros((0, n)), np.zeros(0)
        A = np.asarray(A, dtype=float).reshape(-1, n)
        b = np.asarray(b, dtype=float).ravel()
        if len(b) != len(A):
            raise ValueError(f"A_{name} and b_{name} disagree in row count")
        return A, b

    @property
    def n(self) -> int:
        return len(self.c)

    def objective(self, x) -> float:
        return float(0.5 * x @ self.H @ x + self.c @ x)


@dataclass
class QpSolution:
    x: np.ndarray
    status: QpStatus
    kkt_residual: float
    lam_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lam_in: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def kkt_residual(prob: QpProblem, x, lam_eq, lam_in) -> float:
    stat = prob.H @ x + prob.c - prob.A_eq.T @ lam_eq - prob.A_in.T @ lam_in
    slack = prob.A_in @ x - prob.b_in
    terms = [
        np.max(np.abs(stat), initial=0.0),
        np.max(np.abs(prob.A_eq @ x - prob.b_eq), initial=0.0),
        np.max(-slack, initial=0.0),
        np.max(-lam_in, initial=0.0),
        np.max(np.abs(lam_in * slack), initial=0.0),
    ]
    return float(max(terms))


def _kkt_solve(H, N, rhs_top, rhs_bot):
    k = N.shape[1]
    if k == 0:
        return np.linalg.solve(H, rhs_top), np.zeros(0)
    n = len(H)
    K = np.zeros((n + k, n + k))
    K[:n, :n] = H
    K[:n, n:] = N
    K[n:, :n] = N.T
    sol = np.linalg.solve(K, np.concatenate([rhs_top, rhs_bot]))
    return sol[:n], sol[n:]


def _independent_equalities(A, b):
    """Drop linearly dependent equality rows; None if they are inconsistent."""
    if len(A) == 0:
        return A, b
    _, R, piv = scipy.linalg.qr(A.T, pivoting=True, mode="economic")
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > 1e-10 * max(1.0, diag[0] if len(diag) else 1.0)))
    keep = np.sort(piv[:rank])
    if rank < len(A):
        x, *_ = np.linalg.lstsq(A[keep], b[keep], rcond=None)
        if np.max(np.abs(A @ x - b)) > FEAS_TOL:
            return None
    return A[keep], b[keep]


def _dual_active_set(H, c, Ae, be, Ai, bi, max_iter):
    """Dual active-set method for strictly convex H.

    Starts from the equality-constrained minimiser and repeatedly adds the most
    violated inequality, taking partial steps that drop constraints whose
    multipliers would turn negative. Returns (status, x, lam_eq, lam_in, iters).
    """
    n, me, mi = len(c), len(be), len(bi)
    active: list[int] = []  # indices into inequality rows
    x, neg_u = _kkt_solve(H, Ae.T, -c, be)
    u_eq = -neg_u
    u_in = np.zeros(mi)
    for it in range(1, max_iter + 1):
        slack = Ai @ x - bi
        if mi == 0 or slack.min() >= -FEAS_TOL:
            return QpStatus.OPTIMAL, x, u_eq, u_in, it
        scale = np.linalg.norm(Ai, axis=1) + 1e-300
        candidates = [j for j in range(mi) if j not in active]
        p = min(candidates, key=lambda j: slack[j] / scale[j])
        if slack[p] >= -FEAS_TOL:
            return QpStatus.OPTIMAL, x, u_eq, u_in, it
        a_p = Ai[p]
        u_p = 0.0
        while True:
            N = np.hstack([Ae.T, Ai[active].T]) if active else Ae.T
            z, r = _kkt_solve(H, N, a_p, np.zeros(N.shape[1]))
            r_in = r[me:]
            t1, drop = math.inf, None
            for k, j in enumerate(active):
                if r_in[k] > 1e-12:
                    ratio = u_in[j] / r_in[k]
                    if ratio < t1:
                        t1, drop = ratio, k
            curv = float(z @ a_p)
            if curv <= 1e-14 * max(1.0, float(a_p @ a_p)):
                if drop is None:
                    return QpStatus.INFEASIBLE, x, u_eq, u_in, it
                t = t1
            else:
                t = min(t1, -(a_p @ x - bi[p]) / curv)
                x = x + t * z
            u_eq = u_eq - t * r[:me]
            for k, j in enumerate(active):
                u_in[j] -= t * r_in[k]
            u_p += t
            if t < t1 or drop is None:
                active.append(p)
                u_in[p] = u_p
                break
            u_in[active[drop]] = 0.0
            del active[drop]
    return QpStatus.MAX_ITER, x, u_eq, u_in, max_iter


def solve_qp(prob: QpProblem, max_iter: int = 200) -> QpSolution:
    """Solve a small dense convex QP to KKT residual below 1e-6.

    Strictly convex problems go straight to the dual active-set method.
    Merely semidefinite ones run proximal-point outer iterations, each of
    which is strictly convex.
    """
    eq = _independent_equalities(prob.A_eq, prob.b_eq)
    if eq is None:
        return QpSolution(np.zeros(prob.n), QpStatus.INFEASIBLE, math.inf)
    Ae, be = eq
    H = prob.H
    scale = max(1.0, float(np.max(np.abs(H), initial=0.0)))
    eig_min = float(np.linalg.eigvalsh(H)[0]) if prob.n else 1.0

    def finish(status, x, u_eq_red, u_in, iters):
        # map reduced equality multipliers back onto the original rows
        lam_eq = np.zeros(len(prob.b_eq))
        if len(prob.b_eq):
            lam_eq, *_ = np.linalg.lstsq(
                prob.A_eq.T, prob.H @ x + prob.c - prob.A_in.T @ u_in, rcond=None
            )
        res = kkt_residual(prob, x, lam_eq, u_in)
        if status is QpStatus.OPTIMAL and res >= KKT_TOL:
            status = QpStatus.MAX_ITER
        return QpSolution(x, status, res, lam_eq, u_in, iters)

    if eig_min > 1e-10 * scale:
        return finish(*_dual_active_set(H, prob.c, Ae, be, prob.A_in, prob.b_in, max_iter))

    rho = 1e-2 * scale
    Hr = H + rho * np.eye(prob.n)
    x = np.zeros(prob.n)
    total = 0
    result = None
    for _ in range(max_iter * 10):
        status, x_new, u_eq, u_in, iters = _dual_active_set(
            Hr, prob.c - rho * x, Ae, be, prob.A_in, prob.b_in, max_iter
        )
        total += iters
        if status is not QpStatus.OPTIMAL:
            return finish(status, x_new, u_eq, u_in, total)
        step = np.linalg.norm(x_new - x)
        x = x_new
        result = (status, x, u_eq, u_in, total)
        if step < 1e-13 * max(1.0, np.linalg.norm(x)):
            break
    else:
        return finish(QpStatus.MAX_ITER, *result[1:])
    return finish(*result)


@dataclass
class PoseSolveResult:
    q: np.ndarray
    residual: float
    converged: bool
    iterations: int


def _tangent_basis(d: np.ndarray):
    helper = np.array([1.0, 0.0, 0.0]) if abs(d[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = helper - (helper @ d) * d
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(d, e1)
    return np.vstack([e1, e2])


def axis_error(z: np.ndarray, desired: np.ndarray, basis: np.ndarray | None = None) -> np.ndarray:
    """2-d sphere log of ``z`` at ``desired``: angle times in-plane direction.

    Zero only for exact alignment, so the antipodal direction is never
    mistaken for a solution.
    """
    if basis is None:
        basis = _tangent_basis(desired)
    t = basis @ z
    sin_part = math.hypot(t[0], t[1])
    cos_part = float(desired @ z)
    if sin_part < 1e-12:
        return t if cos_part > 0 else np.array([math.pi, 0.0])
    return math.atan2(sin_part, cos_part) / sin_part * t


def _axis_error_jacobian(z, desired, basis):
    """d(axis_error)/dz in closed form (central differences near alignment)."""
    t = basis @ z
    s = math.hypot(t[0], t[1])
    c = float(desired @ z)
    if s < 1e-6:
        h = 1e-7
        D = np.zeros((2, 3))
        for k in range(3):
            dz = np.zeros(3)
            dz[k] = h
            D[:, k] = (axis_error(z + dz, desired, basis) - axis_error(z - dz, desired, basis)) / (2 * h)
        return D
    theta = math.atan2(s, c)
    rr = s * s + c * c
    f = theta / s
    df_ds = (c / rr) / s - theta / (s * s)
    df_dc = (-s / rr) / s
    grad = df_ds * (t @ basis) / s + df_dc * desired
    return f * basis + np.outer(t, grad)


def pose_residual(model: RobotModel, q, target_p, target_z):
    """5-d residual of container position and axis alignment with -target_z."""
    desired = -np.asarray(target_z, dtype=float)
    pose, _ = kinematics(model, q)
    return np.concatenate([pose.position - target_p, axis_error(pose.z_axis, desired)])


MU_FLOOR = 1e-9


def damped_pose_solve(
    model: RobotModel,
    target_p,
    target_z,
    q_seed,
    weights=None,
    tol: float = 1e-4,
    max_iter: int = 100,
    mu0: float = 1e-3,
    stall_window: int = 10,
    stall_ratio: float = 0.98,
) -> PoseSolveResult:
    """Levenberg-Marquardt on container position and axis.

    ``target_z`` is the ball's direction of travel; the container z axis is
    driven to its opposite. ``weights`` scale the joint-space damping so that
    heavily weighted joints (the base) move less. Iterates are clamped to the
    joint limits. A solve whose squared residual shrank by less than
    ``1 - stall_ratio`` over the last ``stall_window`` iterations is abandoned.
    """
    target_p = np.asarray(target_p, dtype=float)
    desired = -np.asarray(target_z, dtype=float)
    desired = desired / np.linalg.norm(desired)
    basis = _tangent_basis(desired)
    W = np.ones(model.n) if weights is None else np.asarray(weights, dtype=float)

    def evaluate(q):
        pose, J = kinematics(model, q)
        z = pose.z_axis
        r = np.concatenate([pose.position - target_p, axis_error(z, desired, basis)])
        # dz/dq_j = omega_j x z
        w = J[3:]
        dz = np.vstack([w[1] * z[2] - w[2] * z[1], w[2] * z[0] - w[0] * z[2], w[0] * z[1] - w[1] * z[0]])
        Jr = np.vstack([J[:3], _axis_error_jacobian(z, desired, basis) @ dz])
        return r, Jr

    q = model.clamp(np.asarray(q_seed, dtype=float))
    r, Jr = evaluate(q)
    cost = float(r @ r)
    mu = mu0
    it = 0
    history = [cost]
    while it < max_iter and math.sqrt(cost) >= tol:
        it += 1
        # give up on stalled solves (typically unreachable targets)
        if it > stall_window and cost > stall_ratio * history[-stall_window]:
            break
        A = Jr.T @ Jr + mu * np.diag(W)
        try:
            step = np.linalg.solve(A, -Jr.T @ r)
        except np.linalg.LinAlgError:
            break
        q_try = model.clamp(q + step)
        r_try, J_try = evaluate(q_try)
        cost_try = float(r_try @ r_try)
        if cost_try < cost:
            q, r, Jr, cost = q_try, r_try, J_try, cost_try
            mu = max(0.5 * mu, MU_FLOOR)
        else:
            mu *= 2.0
            if mu > 1e8:
                break
        history.append(cost)
    res = math.sqrt(cost)
    return PoseSolveResult(q, res, res < tol, it)
