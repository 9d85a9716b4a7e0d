"""
Occupancy-measure linear program of a CMDP and an exact dense simplex solver.

Sign convention for multipliers (used everywhere in this package): the LP is

    maximize <mu, r>  subject to  flow(mu) = rho,  <mu, c_i> - z_i = b_i,  mu, z >= 0

and `lambda_star[i] >= 0` is the multiplier of <mu, c_i> >= b_i in the Lagrangian
<mu, r> + sum_i lambda_i (<mu, c_i> - b_i). In terms of the LP dual vector y
(A^T y >= c) this is lambda_star[i] = -y[S + i].
"""

from __future__ import annotations

import logging
import typing as t
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cmdp_alm.cmdp import (
    OccupancyMeasure,
    TabularCmdp,
    TabularPolicy,
    policy_from_occupancy,
    value_iteration,
)
from cmdp_alm.exceptions import InfeasibleLpError, OutputWriteError, SlaterConditionError

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-9
FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class StandardLp:
    """
    maximize objective @ x  subject to  matrix @ x = rhs,  x >= 0.

    The first `n_flow_rows` rows are Bellman flow rows, the remaining rows are the
    slack-augmented constraint rows. Variables are mu(s, a) at index s * A + a
    followed by one slack z_i per constraint.
    """

    objective: np.ndarray
    matrix: np.ndarray
    rhs: np.ndarray
    row_labels: t.Tuple[str, ...]
    variable_labels: t.Tuple[str, ...]
    n_flow_rows: int
    n_occupancy: int
    discount: float = 0.0

    def __post_init__(self):
        rows, cols = self.matrix.shape
        if self.objective.shape != (cols,) or self.rhs.shape != (rows,):
            raise ValueError(
                f"inconsistent LP dimensions: matrix {self.matrix.shape}, "
                f"objective {self.objective.shape}, rhs {self.rhs.shape}"
            )
        if len(self.row_labels) != rows or len(self.variable_labels) != cols:
            raise ValueError("one label per row and per variable is required")

    @property
    def n_constraint_rows(self) -> int:
        return self.matrix.shape[0] - self.n_flow_rows

    def to_text(self) -> str:
        lines = [
            "# maximize objective . x  subject to  rows,  all variables >= 0",
            f"VARIABLES {len(self.variable_labels)}",
        ]
        for j, (label, coef) in enumerate(zip(self.variable_labels, self.objective)):
            lines.append(f"  x{j:<5d} {label:<16s} objective {coef:.17g}")
        lines.append(f"ROWS {len(self.row_labels)}")
        for label, row, rhs in zip(self.row_labels, self.matrix, self.rhs):
            terms = " ".join(
                f"{coef:+.17g}*x{j}" for j, coef in enumerate(row) if coef != 0.0
            )
            lines.append(f"  {label:<16s} {terms} = {rhs:.17g}")
        lines.append("BOUNDS")
        lines.append("  x >= 0")
        return "\n".join(lines) + "\n"

    def save_text(self, path: t.Union[str, Path]):
        try:
            with open(path, "w") as f:
                f.write(self.to_text())
        except OSError as e:
            raise OutputWriteError(str(path), str(e)) from e


def build_occupancy_lp(cmdp: TabularCmdp) -> StandardLp:
    S, A, m = cmdp.n_states, cmdp.n_actions, cmdp.n_constraints
    n_mu = S * A
    # flow: sum_a mu(s', a) - gamma sum_{s,a} P(s'|s,a) mu(s,a) = rho(s')
    selector = np.kron(np.eye(S), np.ones((1, A)))
    inflow = cmdp.transition.reshape(n_mu, S).T
    flow = selector - cmdp.discount * inflow
    matrix = np.zeros((S + m, n_mu + m))
    matrix[:S, :n_mu] = flow
    matrix[S:, :n_mu] = cmdp.constraint_rewards.reshape(m, n_mu)
    matrix[S:, n_mu:] = -np.eye(m)
    rhs = np.concatenate([cmdp.initial_dist, cmdp.thresholds])
    objective = np.concatenate([cmdp.reward.ravel(), np.zeros(m)])
    return StandardLp(
        objective=objective,
        matrix=matrix,
        rhs=rhs,
        row_labels=tuple(
            [f"flow[s={s}]" for s in range(S)] + [f"constraint[{i}]" for i in range(m)]
        ),
        variable_labels=tuple(
            [f"mu[s={s},a={a}]" for s in range(S) for a in range(A)]
            + [f"z[{i}]" for i in range(m)]
        ),
        n_flow_rows=S,
        n_occupancy=n_mu,
        discount=cmdp.discount,
    )


@dataclass
class _SimplexState:
    basis: t.List[int]
    x_basic: np.ndarray
    duals: np.ndarray
    reduced_costs: np.ndarray
    iterations: int


def _revised_simplex(
    matrix: np.ndarray,
    rhs: np.ndarray,
    cost: np.ndarray,
    basis: t.List[int],
    columns: int,
    max_iters: int,
) -> _SimplexState:
    """
    Minimizes cost @ x over {matrix @ x = rhs, x >= 0} from a feasible basis, using
    Bland's rule for both the entering and the leaving variable. Only the first
    `columns` columns may enter.
    """
    basis = list(basis)
    for iteration in range(max_iters):
        B = matrix[:, basis]
        x_basic = np.linalg.solve(B, rhs)
        duals = np.linalg.solve(B.T, cost[basis])
        reduced = cost - matrix.T @ duals
        in_basis = set(basis)
        entering = next(
            (
                j
                for j in range(columns)
                if j not in in_basis and reduced[j] < -PIVOT_TOL
            ),
            None,
        )
        if entering is None:
            return _SimplexState(basis, x_basic, duals, reduced, iteration)
        direction = np.linalg.solve(B, matrix[:, entering])
        candidates = np.flatnonzero(direction > PIVOT_TOL)
        if candidates.size == 0:
            # the feasible sets built here are bounded
            raise RuntimeError(f"LP is unbounded along column {entering}")
        ratios = np.maximum(x_basic[candidates], 0.0) / direction[candidates]
        best = ratios.min()
        tied = candidates[ratios <= best + PIVOT_TOL * max(1.0, best)]
        leaving = min(tied, key=lambda row: basis[row])
        logger.debug("pivot %d: x%d enters, x%d leaves", iteration, entering, basis[leaving])
        basis[leaving] = entering
    raise RuntimeError(f"simplex did not terminate within {max_iters} pivots")


@dataclass(frozen=True)
class LpSolution:
    """
    Primal-dual optimal pair of the occupancy LP.

    Attributes
    ----------
    mu : np.ndarray
        Optimal occupancy measure, shape (S, A).
    slack : np.ndarray
        Optimal z, shape (m,).
    v_star : float
        Optimal value <mu*, r> = V*_r(rho).
    lambda_star : np.ndarray
        Optimal multipliers, >= 0 (see the module docstring for the convention).
    flow_duals : np.ndarray
        Dual values of the flow rows.
    duality_gap : float
        |c @ x - rhs @ y|.
    complementary_slackness : float
        max_j |x_j (A^T y - c)_j|.
    """

    mu: np.ndarray
    slack: np.ndarray
    v_star: float
    lambda_star: np.ndarray
    flow_duals: np.ndarray
    duality_gap: float
    complementary_slackness: float
    discount: float
    iterations: int

    def occupancy(self) -> OccupancyMeasure:
        return OccupancyMeasure(mu=self.mu, discount=self.discount)

    def policy(self) -> TabularPolicy:
        return policy_from_occupancy(self.occupancy())


def solve_lp(lp: StandardLp, max_iters: int = 50_000) -> LpSolution:
    """
    Two-phase dense revised simplex with Bland's rule.

    Phase one starts from an all-artificial basis; artificials left at zero are
    pivoted out, and rows where that is impossible (the dependent flow row) are
    dropped before phase two. Dropped rows get a zero dual.
    """
    rows, cols = lp.matrix.shape
    signs = np.where(lp.rhs < 0, -1.0, 1.0)
    matrix = lp.matrix * signs[:, None]
    rhs = lp.rhs * signs

    # phase one
    phase_one = np.hstack([matrix, np.eye(rows)])
    cost_one = np.concatenate([np.zeros(cols), np.ones(rows)])
    state = _revised_simplex(
        phase_one, rhs, cost_one, list(range(cols, cols + rows)), cols, max_iters
    )
    infeasibility = float(cost_one[state.basis] @ state.x_basic)
    if infeasibility > FEASIBILITY_TOL * max(1.0, float(np.abs(rhs).max(initial=0.0))):
        residuals = np.zeros(rows)
        for position, var in enumerate(state.basis):
            if var >= cols:
                residuals[var - cols] = state.x_basic[position]
        row = int(np.argmax(residuals))
        raise InfeasibleLpError(lp.row_labels[row], infeasibility)

    # drive remaining artificials out of the basis
    basis = list(state.basis)
    active_rows = list(range(rows))
    position = 0
    while position < len(basis):
        var = basis[position]
        if var < cols:
            position += 1
            continue
        B = phase_one[np.ix_(active_rows, basis)]
        tableau_row = np.linalg.solve(B.T, np.eye(len(basis))[position])
        alphas = tableau_row @ matrix[active_rows, :]
        in_basis = set(basis)
        replacement = next(
            (j for j in range(cols) if j not in in_basis and abs(alphas[j]) > PIVOT_TOL),
            None,
        )
        if replacement is not None:
            basis[position] = replacement
            position += 1
        else:
            dropped = var - cols
            logger.debug("dropping dependent row %s", lp.row_labels[dropped])
            active_rows.remove(dropped)
            del basis[position]

    # phase two
    sub_matrix = matrix[active_rows, :]
    sub_rhs = rhs[active_rows]
    final = _revised_simplex(sub_matrix, sub_rhs, -lp.objective, basis, cols, max_iters)

    x = np.zeros(cols)
    x[final.basis] = np.maximum(final.x_basic, 0.0)
    y = np.zeros(rows)
    y[active_rows] = -final.duals
    y = y * signs
    primal = float(lp.objective @ x)
    dual = float(lp.rhs @ y)
    reduced = lp.matrix.T @ y - lp.objective
    n_mu = lp.n_occupancy
    n_states = lp.n_flow_rows
    return LpSolution(
        mu=x[:n_mu].reshape(n_states, n_mu // n_states),
        slack=x[n_mu:],
        v_star=primal,
        lambda_star=np.maximum(-y[n_states:], 0.0),
        flow_duals=y[:n_states],
        duality_gap=abs(primal - dual),
        complementary_slackness=float(np.max(np.abs(x * reduced), initial=0.0)),
        discount=lp.discount,
        iterations=state.iterations + final.iterations,
    )


def slater_margin(cmdp: TabularCmdp, i: int, strict: bool = True) -> float:
    """
    zeta_i = max_pi V_ci(rho) - b_i, from an exact solve of the single-objective MDP.
    """
    if not 0 <= i < cmdp.n_constraints:
        raise ValueError(f"constraint index {i} out of range for {cmdp.n_constraints} constraints")
    best = value_iteration(cmdp, cmdp.constraint_rewards[i], tol=1e-10)
    margin = best.scalar_value - float(cmdp.thresholds[i])
    if margin <= 0 and strict:
        raise SlaterConditionError(i, margin)
    return margin


def slater_margins(cmdp: TabularCmdp, strict: bool = True) -> np.ndarray:
    return np.array(
        [slater_margin(cmdp, i, strict=strict) for i in range(cmdp.n_constraints)]
    )


@dataclass(frozen=True)
class OracleReport:
    solution: LpSolution
    zeta: np.ndarray

    @property
    def v_star(self) -> float:
        return self.solution.v_star

    @property
    def lambda_star(self) -> np.ndarray:
        return self.solution.lambda_star


def solve_cmdp(cmdp: TabularCmdp) -> LpSolution:
    """build_occupancy_lp + solve_lp; names the first constraint without a strictly
    feasible policy when the LP is infeasible."""
    lp = build_occupancy_lp(cmdp)
    try:
        return solve_lp(lp)
    except InfeasibleLpError as e:
        for i in range(cmdp.n_constraints):
            margin = slater_margin(cmdp, i, strict=False)
            if margin < 0:
                raise InfeasibleLpError(lp.row_labels[lp.n_flow_rows + i], e.residual) from e
        raise


def optimal_solution(cmdp: TabularCmdp) -> OracleReport:
    """LP optimum together with the Slater margins of every constraint."""
    solution = solve_cmdp(cmdp)
    zeta = slater_margins(cmdp)
    logger.info(
        "%s: V*=%.10g lambda*=%s zeta=%s", cmdp.name, solution.v_star, solution.lambda_star, zeta
    )
    return OracleReport(solution=solution, zeta=zeta)
