"""
Inexact augmented-Lagrangian method for

    min f(x)  subject to  A x = b,  x in X

with f convex and L-smooth and X compact and convex, together with the constants
that bound its convergence.

Each outer iteration minimizes L(x, lambda_t) = f(x) + <lambda_t, A x - b>
+ (beta / 2) ||A x - b||^2 to accuracy eps_t = sigma / t^2 and then sets
lambda_{t+1} = lambda_t + (beta / 2)(A x_{t+1} - b).
"""

from __future__ import annotations

import csv
import logging
import math
import typing as t
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from cmdp_alm.exceptions import OutputWriteError, SubproblemIterationLimit
from cmdp_alm.utils import format_float

if t.TYPE_CHECKING:
    from cmdp_alm.lp import StandardLp

logger = logging.getLogger(__name__)

OMEGA = 3.0

Objective = t.Callable[[np.ndarray], t.Tuple[float, np.ndarray]]
Projector = t.Callable[[np.ndarray], np.ndarray]


def box_projector(lower: np.ndarray, upper: np.ndarray) -> Projector:
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)

    def project(x: np.ndarray) -> np.ndarray:
        return np.clip(x, lower, upper)

    return project


@dataclass(frozen=True)
class ConvexProblem:
    """
    Attributes
    ----------
    objective : callable
        x -> (f(x), grad f(x)).
    A, b : np.ndarray
        Equality constraints A x = b; A has shape (m, n), possibly m = 0.
    project : callable
        Euclidean projection onto X.
    diameter : float
        Upper bound on the diameter of X.
    smoothness : float
        Lipschitz constant of grad f.
    x0 : np.ndarray
        Starting point (projected onto X).
    """

    objective: Objective
    A: np.ndarray
    b: np.ndarray
    project: Projector
    diameter: float
    smoothness: float
    x0: np.ndarray
    name: str = "convex"

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        x0 = np.asarray(self.x0, dtype=np.float64).reshape(-1)
        if A.size == 0:
            A = np.zeros((0, x0.shape[0]))
        if A.shape != (b.shape[0], x0.shape[0]):
            raise ValueError(
                f"A has shape {A.shape}; expected ({b.shape[0]}, {x0.shape[0]})"
            )
        if self.diameter <= 0:
            raise ValueError(f"diameter must be positive, got {self.diameter}")
        if self.smoothness < 0:
            raise ValueError(f"smoothness must be non-negative, got {self.smoothness}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "x0", self.project(x0))

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def residual(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x - self.b

    @classmethod
    def quadratic(
        cls,
        Q: np.ndarray,
        q: np.ndarray,
        A: np.ndarray,
        b: np.ndarray,
        lower: np.ndarray,
        upper: np.ndarray,
        name: str = "qp",
    ) -> "ConvexProblem":
        """f(x) = x^T Q x / 2 + q^T x over the box [lower, upper]."""
        Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        q = np.asarray(q, dtype=np.float64).reshape(-1)
        lower = np.broadcast_to(np.asarray(lower, dtype=np.float64), q.shape)
        upper = np.broadcast_to(np.asarray(upper, dtype=np.float64), q.shape)

        def objective(x: np.ndarray) -> t.Tuple[float, np.ndarray]:
            grad = Q @ x + q
            return float(0.5 * x @ (Q @ x) + q @ x), grad

        return cls(
            objective=objective,
            A=A,
            b=b,
            project=box_projector(lower, upper),
            diameter=float(np.linalg.norm(upper - lower)),
            smoothness=float(np.max(np.abs(np.linalg.eigvalsh(Q)))) if q.size else 0.0,
            x0=np.zeros_like(q),
            name=name,
        )


def al_value_and_grad(
    problem: ConvexProblem, x: np.ndarray, lam: np.ndarray, beta: float
) -> t.Tuple[float, np.ndarray]:
    """L(x, lambda) = f(x) + <lambda, Ax - b> + (beta/2) ||Ax - b||^2 and its gradient."""
    f, grad = problem.objective(x)
    r = problem.residual(x)
    value = f + float(lam @ r) + 0.5 * beta * float(r @ r)
    return value, grad + problem.A.T @ (lam + beta * r)


@dataclass(frozen=True)
class SubsolveInfo:
    x: np.ndarray
    gap_bound: float
    iterations: int


def _al_smoothness(problem: ConvexProblem, beta: float) -> float:
    a_norm = np.linalg.norm(problem.A, 2) if problem.m else 0.0
    return max(problem.smoothness + beta * a_norm**2, 1e-12)


def al_subsolve(
    problem: ConvexProblem,
    lam: np.ndarray,
    beta: float,
    eps: float,
    warm: t.Optional[np.ndarray] = None,
    max_iters: int = 200_000,
    return_info: bool = False,
) -> t.Union[np.ndarray, SubsolveInfo]:
    """
    Minimizes L(., lambda) over X to a certified accuracy `eps`.

    Accelerated projected gradient with adaptive restart. Every gradient step
    x+ = P(y - grad(y) / L) from any y certifies

        L(x+) - min L <= ||G|| (D + ||G|| / L),   G = L (y - x+),

    with D the diameter of X; iterations stop once this bound is <= eps.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    lam = np.asarray(lam, dtype=np.float64).reshape(-1)
    step = 1.0 / _al_smoothness(problem, beta)
    lipschitz = 1.0 / step
    x = problem.project(problem.x0 if warm is None else np.asarray(warm, dtype=np.float64))
    y = x.copy()
    momentum = 1.0
    best_gap = math.inf
    best_x = x
    for iteration in range(1, max_iters + 1):
        _, grad = al_value_and_grad(problem, y, lam, beta)
        x_next = problem.project(y - step * grad)
        mapping = lipschitz * np.linalg.norm(y - x_next)
        gap = mapping * (problem.diameter + mapping / lipschitz)
        if gap < best_gap:
            best_gap, best_x = gap, x_next
        if gap <= eps:
            info = SubsolveInfo(x=x_next, gap_bound=gap, iterations=iteration)
            return info if return_info else x_next
        # restart when the momentum direction disagrees with the gradient step
        if float((y - x_next) @ (x_next - x)) > 0:
            momentum = 1.0
            y = x_next
        else:
            momentum_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * momentum**2))
            y = x_next + ((momentum - 1.0) / momentum_next) * (x_next - x)
            momentum = momentum_next
        x = x_next
    logger.debug("subsolve stopped at gap %.3e > %.3e", best_gap, eps)
    raise SubproblemIterationLimit(max_iters, best_gap, eps)


def dual_value(
    problem: ConvexProblem, lam: np.ndarray, beta: float, eps: float = 1e-11
) -> t.Tuple[float, np.ndarray]:
    """d(lambda) = min_x L(x, lambda) from a high-accuracy subsolve, with the minimizer."""
    info = al_subsolve(problem, lam, beta, eps, return_info=True)
    assert isinstance(info, SubsolveInfo)
    value, _ = al_value_and_grad(problem, info.x, np.asarray(lam, dtype=np.float64), beta)
    return value, info.x


def dual_smoothness_ratio(
    problem: ConvexProblem,
    beta: float,
    lambda_pairs: t.Iterable[t.Tuple[np.ndarray, np.ndarray]],
    eps: float = 1e-11,
) -> float:
    """
    Largest observed ||grad d(lambda) - grad d(lambda')|| / ||lambda - lambda'||, with
    grad d(lambda) = A x(lambda) - b. Identical pairs contribute 0.
    """
    worst = 0.0
    for lam, lam_other in lambda_pairs:
        lam = np.asarray(lam, dtype=np.float64)
        lam_other = np.asarray(lam_other, dtype=np.float64)
        distance = float(np.linalg.norm(lam - lam_other))
        if distance == 0.0:
            continue
        _, x = dual_value(problem, lam, beta, eps)
        _, x_other = dual_value(problem, lam_other, beta, eps)
        ratio = float(np.linalg.norm(problem.A @ (x - x_other))) / distance
        worst = max(worst, ratio)
    return worst


def recursion_constant(
    delta_1: float, kappa: float, omega: float = OMEGA, sigma: float = 1.0
) -> float:
    """
    C = (4 / kappa)(1 + sqrt(2 omega sigma kappa (omega sigma kappa + 1))) + 4 max(delta_1, 4 / kappa),
    so that delta_{t+1} <= delta_t - kappa delta_t^2 + omega sigma / t^2 implies delta_t <= C / t.
    """
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    if sigma < 0 or omega < 0:
        raise ValueError("sigma and omega must be non-negative")
    noise = omega * sigma * kappa
    return (4.0 / kappa) * (1.0 + math.sqrt(2.0 * noise * (noise + 1.0))) + 4.0 * max(
        delta_1, 4.0 / kappa
    )


def delta_recursion_bound(
    delta_1: float, kappa: float, omega: float, sigma: float, T: int
) -> np.ndarray:
    """The sequence C / t for t = 1..T."""
    C = recursion_constant(delta_1, kappa, omega, sigma)
    return C / np.arange(1, T + 1)


def noiseless_recursion_bound(delta_1: float, kappa: float, T: int) -> np.ndarray:
    """max(delta_1, 4 / kappa) / t for t = 1..T, the bound when sigma = 0."""
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    return max(delta_1, 4.0 / kappa) / np.arange(1, T + 1)


def simulate_worst_case_delta(
    delta_1: float, kappa: float, omega: float, sigma: float, T: int
) -> np.ndarray:
    """delta_1..delta_T of delta_{t+1} = delta_t - kappa delta_t^2 + omega sigma / t^2."""
    deltas = np.empty(T)
    delta = delta_1
    for step in range(T):
        deltas[step] = delta
        t_index = step + 1
        delta = delta - kappa * delta**2 + omega * sigma / t_index**2
    return deltas


def check_delta_sequence(deltas: np.ndarray, C: float, atol: float = 0.0) -> bool:
    deltas = np.asarray(deltas, dtype=np.float64)
    return bool(np.all(deltas <= C / np.arange(1, len(deltas) + 1) + atol))


@dataclass(frozen=True)
class RateConstants:
    """
    B = ||lambda*|| + sqrt(sigma beta pi^2 / 3), kappa = beta / (8 B^2), omega = 3,
    and C from `recursion_constant` with delta_1 = d(lambda*) - d(lambda_1).

    `B_alt` is the same expression with ||lambda*|| replaced by an a-priori bound on
    the optimal multipliers, when one is available.
    """

    B: float
    kappa: float
    omega: float
    C: float
    sigma: float
    beta: float
    lambda_star_norm: float
    delta_1: float
    B_alt: t.Optional[float] = None

    def dual_gap_bound(self, t_index: int) -> float:
        return self.C / t_index

    def constraint_bound(self, t_index: int) -> float:
        """Bound on ||A x_{t+1} - b||."""
        return (2.0 / math.sqrt(self.beta)) * (
            math.sqrt(self.C) / math.sqrt(t_index) + math.sqrt(2.0 * self.sigma) / t_index
        )

    def dual_distance_bound(self, t_index: int, initial_distance: float) -> float:
        """sqrt(||lambda_1 - lambda*||^2 + 2 beta sum_{i<t} eps_i)."""
        eps_sum = sum(self.sigma / i**2 for i in range(1, t_index))
        return math.sqrt(initial_distance**2 + 2.0 * self.beta * eps_sum)

    def objective_bound(self, t_index: int, initial_distance: float) -> float:
        """Bound on f(x_{t+1}) - f(x*)."""
        radius = self.dual_distance_bound(t_index, initial_distance) + self.lambda_star_norm
        return radius * self.constraint_bound(t_index) + self.sigma / t_index**2


def rate_constants(
    lambda_star_norm: float,
    beta: float,
    sigma: float,
    delta_1: float,
    omega: float = OMEGA,
    alt_lambda_norm: t.Optional[float] = None,
) -> RateConstants:
    if beta <= 0 or sigma <= 0:
        raise ValueError("beta and sigma must be positive")
    noise_radius = math.sqrt(sigma * beta * math.pi**2 / 3.0)
    B = lambda_star_norm + noise_radius
    kappa = beta / (8.0 * B**2)
    return RateConstants(
        B=B,
        kappa=kappa,
        omega=omega,
        C=recursion_constant(delta_1, kappa, omega, sigma),
        sigma=sigma,
        beta=beta,
        lambda_star_norm=lambda_star_norm,
        delta_1=delta_1,
        B_alt=None if alt_lambda_norm is None else alt_lambda_norm + noise_radius,
    )


@dataclass(frozen=True)
class ConvexAlmIteration:
    iter: int
    eps_t: float
    lam: np.ndarray
    x_next: np.ndarray
    f_value: float
    residual_norm: float
    al_value: float
    inner_grads: int
    cum_grads: int
    gap_bound: float


@dataclass
class ConvexAlmTrace:
    beta: float
    sigma: float
    iterations: t.List[ConvexAlmIteration] = field(default_factory=list)
    final_lambda: t.Optional[np.ndarray] = None
    constants: t.Optional[RateConstants] = None

    def fieldnames(self) -> t.List[str]:
        m = len(self.iterations[0].lam) if self.iterations else 0
        return (
            ["iter", "eps_t"]
            + [f"lambda_{i}" for i in range(m)]
            + ["f_value", "residual_norm", "al_value", "inner_grads", "cum_grads"]
            + ["d_gap_bound", "cons_bound"]
        )

    def to_list(self) -> t.List[t.Dict[str, t.Any]]:
        rows = []
        for it in self.iterations:
            row: t.Dict[str, t.Any] = {"iter": it.iter, "eps_t": it.eps_t}
            row.update({f"lambda_{i}": float(v) for i, v in enumerate(it.lam)})
            row.update(
                {
                    "f_value": it.f_value,
                    "residual_norm": it.residual_norm,
                    "al_value": it.al_value,
                    "inner_grads": it.inner_grads,
                    "cum_grads": it.cum_grads,
                    "d_gap_bound": (
                        self.constants.dual_gap_bound(it.iter) if self.constants else ""
                    ),
                    "cons_bound": (
                        self.constants.constraint_bound(it.iter) if self.constants else ""
                    ),
                }
            )
            rows.append(row)
        return rows

    def to_csv(self, path: t.Union[str, Path]):
        try:
            with open(path, "w", newline="") as csvfile:
                writer = csv.DictWriter(csvfile, fieldnames=self.fieldnames())
                writer.writeheader()
                for row in self.to_list():
                    writer.writerow(
                        {
                            k: format_float(v) if isinstance(v, float) else v
                            for k, v in row.items()
                        }
                    )
        except OSError as e:
            raise OutputWriteError(str(path), str(e)) from e


def run_convex_alm(
    problem: ConvexProblem,
    T: int,
    beta: float,
    sigma: float = 1.0,
    constants: t.Optional[RateConstants] = None,
    max_inner_iters: int = 200_000,
) -> t.Tuple[np.ndarray, ConvexAlmTrace]:
    """
    T outer iterations from lambda_1 = 0 and x = problem.x0. Returns x_{T+1}.
    """
    if T < 1:
        raise ValueError(f"T must be at least 1, got {T}")
    if beta <= 0 or sigma <= 0:
        raise ValueError("beta and sigma must be positive")
    lam = np.zeros(problem.m)
    x = problem.x0
    trace = ConvexAlmTrace(beta=beta, sigma=sigma, constants=constants)
    cum_grads = 0
    for outer in range(1, T + 1):
        eps_t = sigma / outer**2
        info = al_subsolve(
            problem, lam, beta, eps_t, warm=x, max_iters=max_inner_iters, return_info=True
        )
        assert isinstance(info, SubsolveInfo)
        x = info.x
        residual = problem.residual(x)
        f_value, _ = problem.objective(x)
        value, _ = al_value_and_grad(problem, x, lam, beta)
        cum_grads += info.iterations
        trace.iterations.append(
            ConvexAlmIteration(
                iter=outer,
                eps_t=eps_t,
                lam=lam.copy(),
                x_next=x.copy(),
                f_value=f_value,
                residual_norm=float(np.linalg.norm(residual)),
                al_value=value,
                inner_grads=info.iterations,
                cum_grads=cum_grads,
                gap_bound=info.gap_bound,
            )
        )
        logger.debug(
            "convex ALM t=%d: ||Ax-b||=%.3e f=%.6g inner=%d",
            outer,
            trace.iterations[-1].residual_norm,
            f_value,
            info.iterations,
        )
        lam = lam + 0.5 * beta * residual
    trace.final_lambda = lam
    return x, trace


@dataclass(frozen=True)
class PlantedQp:
    problem: ConvexProblem
    x_star: np.ndarray
    lambda_star: np.ndarray
    f_star: float


def planted_qp(
    rng: np.random.Generator,
    n: int,
    m: int,
    half_width: float = 2.0,
    condition: float = 10.0,
) -> PlantedQp:
    """
    Random strongly convex QP over the box [-half_width, half_width]^n whose
    solution x* lies inside the box and whose multipliers lambda* are known:
    q is chosen so that Q x* + q + A^T lambda* = 0 and b = A x*.
    """
    if m >= n:
        raise ValueError(f"need fewer constraints than variables, got m={m}, n={n}")
    basis, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eigenvalues = np.linspace(1.0, condition, n)
    Q = (basis * eigenvalues) @ basis.T
    Q = 0.5 * (Q + Q.T)
    A = rng.standard_normal((m, n))
    x_star = rng.uniform(-0.5 * half_width, 0.5 * half_width, size=n)
    lambda_star = rng.standard_normal(m)
    q = -(Q @ x_star) - A.T @ lambda_star
    b = A @ x_star
    problem = ConvexProblem.quadratic(
        Q, q, A, b, lower=-half_width, upper=half_width, name="planted-qp"
    )
    f_star, _ = problem.objective(x_star)
    return PlantedQp(problem=problem, x_star=x_star, lambda_star=lambda_star, f_star=f_star)


def problem_from_lp(lp: "StandardLp", upper: np.ndarray) -> ConvexProblem:
    """
    The equality-form LP  max c^T x, A x = b, 0 <= x <= upper  as a convex problem
    (minimizing -c^T x). `upper` must not cut off any feasible point.
    """
    c = np.asarray(lp.objective, dtype=np.float64)
    upper = np.broadcast_to(np.asarray(upper, dtype=np.float64), c.shape)

    def objective(x: np.ndarray) -> t.Tuple[float, np.ndarray]:
        return float(-c @ x), -c

    return ConvexProblem(
        objective=objective,
        A=lp.matrix,
        b=lp.rhs,
        project=box_projector(np.zeros_like(c), upper),
        diameter=float(np.linalg.norm(upper)),
        smoothness=0.0,
        x0=np.zeros_like(c),
        name="occupancy-lp",
    )
