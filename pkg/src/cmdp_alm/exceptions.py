from __future__ import annotations

import typing as t


class CmdpAlmException(Exception):
    """
    Base exception class for cmdp-alm.
    """

    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


class InvalidCmdpError(CmdpAlmException):
    """
    Exception raised when a CMDP (or its JSON document) violates a model invariant.
    """

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"Invalid CMDP: {reason}")


class InvalidPolicyError(CmdpAlmException):
    """
    Exception raised when a policy table is not row-stochastic.
    """

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"Invalid policy: {reason}")


class SlaterConditionError(CmdpAlmException):
    """
    Exception raised when no policy satisfies a constraint strictly.
    """

    def __init__(self, index: int, margin: float):
        self.index = index
        self.margin = margin
        msg = (
            f"Slater condition violated for constraint {index}: margin {margin:.6g} <= 0. "
            "The augmented Lagrangian guarantees do not apply to this instance."
        )
        super().__init__(msg)


class InfeasibleLpError(CmdpAlmException):
    """
    Exception raised when the occupancy-measure LP has no feasible point.
    """

    def __init__(self, row: str, residual: float):
        self.row = row
        self.residual = residual
        super().__init__(
            f"The occupancy LP is infeasible: row '{row}' cannot be satisfied "
            f"(phase-one residual {residual:.3e})."
        )


class SubproblemIterationLimit(CmdpAlmException):
    """
    Exception raised when an inner solver cannot certify the requested accuracy.
    """

    def __init__(self, max_iters: int, best_gap: float, eps: float):
        self.max_iters = max_iters
        self.best_gap = best_gap
        self.eps = eps
        super().__init__(
            f"Subproblem solver hit its iteration cap ({max_iters}) with certified gap "
            f"{best_gap:.3e} > eps={eps:.3e}."
        )


class NoQualifyingConfiguration(CmdpAlmException):
    """
    Exception raised when no grid point satisfies the selection tolerance.
    """

    def __init__(self, eps_sel: float, best_violation: t.Optional[float]):
        self.eps_sel = eps_sel
        self.best_violation = best_violation
        msg = f"No qualifying configuration: no run has constraint violation <= {eps_sel:g}"
        if best_violation is not None:
            msg += f" (best violation achieved: {best_violation:.6g})"
        super().__init__(msg)


class OutputWriteError(CmdpAlmException):
    """
    Exception raised when a result file cannot be written.
    """

    def __init__(self, path: str, reason: str):
        self.path = path
        super().__init__(f"Failed to write '{path}': {reason}")


class ExceptionInRunner(CmdpAlmException):
    """
    Exception raised when a job submitted to the executor fails.
    """

    def __init__(self, index: int, error: Exception):
        self.index = index
        self.error = error
        super().__init__(f"job {index} failed with {type(error).__name__}: {error}")
