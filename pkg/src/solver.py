"""
Proximal Semismooth Newton Pursuit (PSNP) and proximal-gradient baselines for

    min_x F(x) = f(x) + lambda * ||x||_q^q,   q in [0, 1).

Each PSNP iteration takes a proximal-gradient step with an Armijo step size,
reads the support off the result, and then tries a semismooth Newton step on
that support. Any failure of the Newton phase falls back to the proximal point,
so with Newton disabled PSNP is exactly the proximal-gradient method.
"""
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg

from src.lq_prox import (
    DegenerateProblemError,
    ProxSpec,
    TieRule,
    lambda_upper_bound,
    prox_constants,
    prox_vector,
)
from src.models.problems import Problem, ProblemKind
from src.utils.linear_ops import SymmetricSystem, solve_cg, solve_direct

logger = logging.getLogger(__name__)

# Consecutive empty supports before giving up on the origin
EMPTY_SUPPORT_PATIENCE = 3

BASELINE_NAMES = {0.0: "Hard", 0.5: "Half", 2.0 / 3.0: "p-FPC"}


class NewtonMode(Enum):
    AUTO = "auto"
    DIRECT = "direct"
    CG = "cg"
    OFF = "off"


class SolveStatus(Enum):
    STATIONARY_STOP = "StationaryStop"
    MAX_ITER = "MaxIter"
    LINE_SEARCH_STALL = "LineSearchStall"
    NUMERIC_FAILURE = "NumericFailure"


@dataclass
class SolveOptions:
    """
    Solver configuration.

    Args:
        q: Exponent in [0, 1)
        lam: Penalty weight lambda > 0
        sigma: Sufficient-decrease constant
        tau: First Armijo trial step; None picks 10 for the SVM and 1 otherwise
        gamma: Backtracking factor in (0, 1)
        max_iter: Iteration cap
        grad_tol: Tolerance on the on-support gradient of F
        max_backtracks: Cap on Armijo reductions of the proximal step
        max_newton_backtracks: Cap on reductions of the Newton step; past it the
            iteration falls back to the proximal point
        newton_mode: How (or whether) the Newton system is solved
        x0: Starting point (zero when None)
        tie_rule: Prox selection at the threshold
        dense_threshold: Largest support solved directly under NewtonMode.AUTO
        cg_tol: Relative residual tolerance of the CG solve
    """
    q: float
    lam: float
    sigma: float = 1e-4
    tau: Optional[float] = None
    gamma: float = 0.5
    max_iter: int = 10_000
    grad_tol: float = 1e-6
    max_backtracks: int = 50
    max_newton_backtracks: int = 20
    newton_mode: NewtonMode = NewtonMode.AUTO
    x0: Optional[np.ndarray] = None
    tie_rule: TieRule = TieRule.PREFER_ZERO
    dense_threshold: int = 500
    cg_tol: float = 1e-10

    def __post_init__(self):
        self.newton_mode = NewtonMode(self.newton_mode)
        self.tie_rule = TieRule(self.tie_rule)
        if not 0 <= self.q < 1:
            raise ValueError(f"q must lie in [0, 1), got {self.q}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.tau is not None and not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.grad_tol > 0:
            raise ValueError(f"grad_tol must be positive, got {self.grad_tol}")
        if min(self.max_iter, self.max_backtracks, self.max_newton_backtracks) < 0:
            raise ValueError("max_iter, max_backtracks and max_newton_backtracks must be nonnegative")

    def step_start(self, kind: ProblemKind) -> float:
        if self.tau is not None:
            return self.tau
        return 10.0 if kind is ProblemKind.SQUARED_HINGE_SVM else 1.0


@dataclass
class IterationRecord:
    """
    Telemetry of iteration k: x^k -> w^k -> x^{k+1}.

    support_unchanged is set when S^k equals S^{k-1}. The terminal record
    (terminal=True) holds the stopping test at the final iterate and performs
    no update.
    """
    k: int
    objective: float
    grad_inf: float
    support_size: int
    alpha: float
    beta: Optional[float]
    newton_accepted: bool
    elapsed: float
    prox_step: float
    step: float
    objective_next: float
    support_unchanged: bool = False
    terminal: bool = False


@dataclass
class SolveReport:
    x_final: np.ndarray
    support: np.ndarray
    objective: float
    f_value: float
    iterations: int
    status: SolveStatus
    trace: List[IterationRecord] = field(default_factory=list)
    stationarity_residual: float = float("nan")
    alpha_last: float = float("nan")
    time_seconds: float = 0.0
    algorithm: str = ""
    q: float = float("nan")


@dataclass
class SecondOrderDiagnostic:
    min_eig_M: float
    min_eig_H: float
    sufficient_holds: bool
    corollary1_holds: bool


def baseline_name(q: float) -> str:
    """Name of the proximal-gradient baseline for q (Hard, Half, p-FPC)."""
    for key, name in BASELINE_NAMES.items():
        if np.isclose(q, key):
            return name
    return f"ProxGrad_q{q:g}"


def psnp(problem: Problem, opts: SolveOptions) -> SolveReport:
    """
    Proximal Semismooth Newton Pursuit.

    Args:
        problem: Smooth part f
        opts: Solver configuration

    Returns:
        SolveReport with the final iterate and per-iteration trace
    """
    use_newton = opts.newton_mode is not NewtonMode.OFF
    label = f"PSNP_q{opts.q:g}" if use_newton else baseline_name(opts.q)
    return _iterate(problem, opts, use_newton, label)


def prox_grad(problem: Problem, opts: SolveOptions) -> SolveReport:
    """
    Proximal gradient x^{k+1} = Prox_{alpha lambda ||.||_q^q}(x^k - alpha grad f(x^k))
    with the same Armijo rule and stopping test as psnp.
    """
    return _iterate(problem, opts, False, baseline_name(opts.q))


def _iterate(problem: Problem, opts: SolveOptions, use_newton: bool, label: str) -> SolveReport:
    lam, q = opts.lam, opts.q
    tau = opts.step_start(problem.kind)
    x = np.zeros(problem.n) if opts.x0 is None else np.array(opts.x0, dtype=float).ravel()
    if x.shape[0] != problem.n:
        raise ValueError(f"x0 has length {x.shape[0]}, expected {problem.n}")

    _warn_if_lambda_too_large(problem, lam, tau, q)

    trace: List[IterationRecord] = []
    status = SolveStatus.MAX_ITER
    alpha_last = tau
    prev_support: Optional[np.ndarray] = None
    empty_streak = 0
    start = time.perf_counter()

    F_x = problem.penalized_value(x, lam, q)
    k = 0
    while True:
        if not np.isfinite(F_x):
            status = SolveStatus.NUMERIC_FAILURE
            break
        if k > opts.max_iter:
            status = SolveStatus.MAX_ITER
            break
        tick = time.perf_counter()

        grad = problem.gradient(x)
        if not np.all(np.isfinite(grad)):
            status = SolveStatus.NUMERIC_FAILURE
            break

        # I. proximal descent
        found = _proximal_descent(problem, x, F_x, grad, opts, tau)
        if found is None:
            status = SolveStatus.LINE_SEARCH_STALL
            break
        w, F_w, alpha = found
        if not np.isfinite(F_w):
            status = SolveStatus.NUMERIC_FAILURE
            break
        alpha_last = alpha

        # II. support determination
        support = np.flatnonzero(w)
        x_support = np.flatnonzero(x)
        residual = _on_support_residual(problem, x, np.intersect1d(support, x_support), lam, q, grad)
        empty_streak = empty_streak + 1 if support.size == 0 else 0
        unchanged = prev_support is not None and np.array_equal(support, prev_support)

        stop = False
        if support.size == 0:
            if empty_streak >= EMPTY_SUPPORT_PATIENCE:
                logger.warning(
                    f"Proximal step returned zero {empty_streak} times in a row; lambda={lam:.4g} likely "
                    "exceeds the bound below which the origin is not stationary"
                )
                stop = True
        elif (
            unchanged
            and np.array_equal(x_support, support)
            and residual < opts.grad_tol
        ):
            stop = True

        if stop:
            status = SolveStatus.STATIONARY_STOP
            trace.append(IterationRecord(
                k=k, objective=F_x, grad_inf=residual, support_size=int(support.size),
                alpha=alpha, beta=None, newton_accepted=False,
                elapsed=time.perf_counter() - tick, prox_step=float(np.linalg.norm(w - x)),
                step=0.0, objective_next=F_x, support_unchanged=unchanged, terminal=True,
            ))
            break
        prev_support = support

        # III. semismooth Newton pursuit
        x_next, F_next, beta = w, F_w, None
        if use_newton and support.size:
            newton = _newton_step(problem, w, F_w, support, opts)
            if newton is not None:
                x_next, F_next, beta = newton

        record = IterationRecord(
            k=k, objective=F_x, grad_inf=residual, support_size=int(support.size),
            alpha=alpha, beta=beta, newton_accepted=beta is not None,
            elapsed=time.perf_counter() - tick, prox_step=float(np.linalg.norm(w - x)),
            step=float(np.linalg.norm(x_next - x)), objective_next=F_next,
            support_unchanged=unchanged,
        )
        trace.append(record)
        beta_text = "-" if beta is None else f"{beta:.3g}"
        logger.debug(
            f"{label} k={k} F={F_x:.10g} grad_inf={residual:.3e} |S|={support.size} "
            f"alpha={alpha:.3g} beta={beta_text}"
        )

        x, F_x = x_next, F_next
        k += 1

    elapsed = time.perf_counter() - start
    report = SolveReport(
        x_final=x,
        support=np.flatnonzero(x),
        objective=float(F_x),
        f_value=float(problem.value(x)) if np.all(np.isfinite(x)) else float("nan"),
        iterations=k,
        status=status,
        trace=trace,
        alpha_last=alpha_last,
        time_seconds=elapsed,
        algorithm=label,
        q=q,
    )
    if status is not SolveStatus.NUMERIC_FAILURE:
        report.stationarity_residual = stationarity_residual(problem, x, alpha_last, lam, q)
    logger.info(
        f"{label} finished: status={status.value} iterations={k} F={report.objective:.8g} "
        f"|S|={report.support.size} time={elapsed:.3f}s"
    )
    return report


def _proximal_descent(
    problem: Problem,
    x: np.ndarray,
    F_x: float,
    grad: np.ndarray,
    opts: SolveOptions,
    tau: float,
) -> Optional[Tuple[np.ndarray, float, float]]:
    """Armijo search alpha = tau * gamma^t for the proximal step; None when it stalls."""
    w, F_w, alpha = x, F_x, tau
    for t in range(opts.max_backtracks + 1):
        alpha = tau * opts.gamma ** t
        spec = ProxSpec(alpha * opts.lam, opts.q, opts.tie_rule)
        w = prox_vector(x - alpha * grad, spec)
        F_w = problem.penalized_value(w, opts.lam, opts.q)
        diff = w - x
        if F_w <= F_x - 0.5 * opts.sigma * float(diff @ diff):
            return w, F_w, alpha

    if not np.isfinite(F_w):
        return w, F_w, alpha
    if F_w <= F_x:
        logger.warning(
            f"Armijo search hit {opts.max_backtracks} backtracks; "
            f"accepting alpha={alpha:.3g} without sufficient decrease"
        )
        return w, F_w, alpha
    return None


def _newton_step(
    problem: Problem,
    w: np.ndarray,
    F_w: float,
    support: np.ndarray,
    opts: SolveOptions,
) -> Optional[Tuple[np.ndarray, float, float]]:
    """Solve M d_S = grad_S E(w) and backtrack on beta = gamma^s; None means fall back to w."""
    rhs = problem.restricted_penalized_gradient(w, support, opts.lam, opts.q)
    newton_matrix = problem.newton_matrix(w, support, opts.lam, opts.q)

    mode = opts.newton_mode
    if mode is NewtonMode.AUTO:
        mode = NewtonMode.DIRECT if support.size <= opts.dense_threshold else NewtonMode.CG
    if mode is NewtonMode.DIRECT:
        system = SymmetricSystem(newton_matrix.to_dense(), rhs)
        solved = solve_direct(system)
    else:
        operator = newton_matrix.matrix if newton_matrix.matrix is not None else newton_matrix.operator
        solved = solve_cg(SymmetricSystem(operator, rhs), tol=opts.cg_tol)
    if not solved.converged:
        logger.debug(f"Newton system not solved ({solved.flag}); taking the proximal point")
        return None

    d = np.zeros_like(w)
    d[support] = solved.x
    dd = float(solved.x @ solved.x)
    for s in range(opts.max_newton_backtracks + 1):
        beta = opts.gamma ** s
        trial = w - beta * d
        F_trial = problem.penalized_value(trial, opts.lam, opts.q)
        if F_trial <= F_w - 0.5 * opts.sigma * beta * beta * dd:
            return trial, F_trial, beta
    logger.debug("Newton backtracking exhausted; taking the proximal point")
    return None


def _on_support_residual(
    problem: Problem,
    x: np.ndarray,
    support: np.ndarray,
    lam: float,
    q: float,
    grad: np.ndarray,
) -> float:
    """||grad_S F(x)||_inf over a support on which x has no zeros (0 for an empty support)."""
    if support.size == 0:
        return 0.0
    g = problem.restricted_penalized_gradient(x, support, lam, q, grad=grad)
    return float(np.max(np.abs(g)))


def _warn_if_lambda_too_large(problem: Problem, lam: float, alpha: float, q: float) -> None:
    try:
        bound = lambda_upper_bound(problem.gradient(np.zeros(problem.n)), alpha, q)
    except DegenerateProblemError:
        logger.warning("grad f(0) = 0: the origin is already stationary")
        return
    if lam >= bound:
        logger.warning(f"lambda={lam:.4g} is not below the bound {bound:.4g}; the solver may return x=0")


def stationarity_residual(problem: Problem, x: np.ndarray, alpha: float, lam: float, q: float) -> float:
    """
    Distance of x from the prox-gradient map: max_i dist(x_i, Prox(x - alpha grad f(x))_i).

    At an exact threshold tie both prox elements count as valid.

    Args:
        problem: Smooth part f
        x: Candidate point
        alpha: Step size, > 0
        lam: Penalty weight
        q: Exponent in [0, 1)

    Returns:
        Infinity-norm residual, 0 at a P-stationary point
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    x = np.asarray(x, dtype=float).ravel()
    u = x - alpha * problem.gradient(x)
    spec = ProxSpec(alpha * lam, q, TieRule.PREFER_ZERO)
    z = prox_vector(u, spec)
    residual = np.abs(x - z)

    tie = np.abs(u) == prox_constants(spec).kappa
    if np.any(tie):
        z_nonzero = prox_vector(u[tie], ProxSpec(alpha * lam, q, TieRule.PREFER_NONZERO))
        residual[tie] = np.minimum(np.abs(x[tie]), np.abs(x[tie] - z_nonzero))
    return float(np.max(residual, initial=0.0))


def second_order_check(
    problem: Problem,
    x: np.ndarray,
    lam: float,
    q: float,
    alpha: float,
) -> SecondOrderDiagnostic:
    """
    Second-order diagnostics at x on S = supp(x).

    sufficient_holds: M = H_S + lam diag(q(q-1)|x_i|^(q-2)) is positive definite.
    corollary1_holds: lambda_min(H_S) > q / (2 alpha), which implies the former at
    a P-stationary point with step alpha.
    """
    x = np.asarray(x, dtype=float).ravel()
    support = np.flatnonzero(x)
    if support.size == 0:
        raise ValueError("Second-order check needs x != 0")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")

    hessian = problem.restricted_hessian(x, support).to_dense()
    newton = problem.newton_matrix(x, support, lam, q).to_dense()
    min_eig_h = float(scipy.linalg.eigvalsh(hessian, subset_by_index=[0, 0])[0])
    min_eig_m = float(scipy.linalg.eigvalsh(newton, subset_by_index=[0, 0])[0])
    return SecondOrderDiagnostic(
        min_eig_M=min_eig_m,
        min_eig_H=min_eig_h,
        sufficient_holds=min_eig_m > 0,
        corollary1_holds=min_eig_h > q / (2.0 * alpha),
    )
