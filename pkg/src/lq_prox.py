"""
Proximal operator of the Lq quasi-norm penalty for q in [0, 1).

Prox_{w|.|^q}(a) = argmin_z 0.5 * (z - a)^2 + w * |z|^q

is computed coordinatewise: everything below the threshold kappa maps to 0,
everything above it maps to the root of z - |a| + w*q*z^(q-1) = 0 lying in
[c, |a|], carrying the sign of a.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np

logger = logging.getLogger(__name__)

# Root finder settings for the nonzero branch
ROOT_TOL = 1e-12
ROOT_MAX_ITER = 100


class TieRule(Enum):
    """Element picked from the two-point prox set when |a| == kappa."""
    PREFER_ZERO = "prefer_zero"
    PREFER_NONZERO = "prefer_nonzero"


class ProxRootError(RuntimeError):
    """Raised when the safeguarded Newton iteration hits its iteration cap."""


class DegenerateProblemError(ValueError):
    """Raised when grad f(0) vanishes, so no lambda bound exists."""


@dataclass(frozen=True)
class ProxSpec:
    """
    Parameters of Prox_{weight * |.|^q}.

    Args:
        weight: Effective penalty weight (step size times lambda), > 0
        q: Exponent in [0, 1)
        tie_rule: Selection at the exact threshold
    """
    weight: float
    q: float
    tie_rule: TieRule = TieRule.PREFER_ZERO

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError(f"Prox weight must be positive, got {self.weight}")
        if not 0 <= self.q < 1:
            raise ValueError(f"Exponent q must lie in [0, 1), got {self.q}")


@dataclass(frozen=True)
class ProxConstants:
    """Magnitude lower bound c and threshold kappa of a ProxSpec."""
    c: float
    kappa: float


def prox_constants(spec: ProxSpec) -> ProxConstants:
    """
    Compute the lower bound c(w, q) on nonzero prox outputs and the threshold kappa(w, q).

    kappa is the point where phi(0) == phi(c), i.e. kappa = c + w*q*c^(q-1).

    Args:
        spec: Prox parameters

    Returns:
        ProxConstants with fields c and kappa
    """
    w, q = spec.weight, spec.q
    if q == 0:
        root = float(np.sqrt(2.0 * w))
        return ProxConstants(c=root, kappa=root)

    c = (2.0 * w * (1.0 - q)) ** (1.0 / (2.0 - q))
    kappa = (2.0 - q) * w ** (1.0 / (2.0 - q)) * (2.0 * (1.0 - q)) ** ((1.0 - q) / (q - 2.0))
    return ProxConstants(c=float(c), kappa=float(kappa))


def _lq_root(abs_a: np.ndarray, weight: float, q: float, c: float) -> np.ndarray:
    """
    Solve z - |a| + weight*q*z^(q-1) = 0 on [c, |a|] for every entry of abs_a.

    Safeguarded Newton started at z = |a|; iterates leaving the bracket are
    replaced by bisection. Each entry stops on its own criterion, so the result
    for one entry does not depend on the others.
    """
    z = abs_a.copy()
    lo = np.full_like(z, c)
    hi = abs_a.copy()
    tol = ROOT_TOL * np.maximum(1.0, abs_a)
    wq = weight * q
    active = np.ones(z.shape, dtype=bool)

    for _ in range(ROOT_MAX_ITER):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            return z

        za = z[idx]
        psi = za - abs_a[idx] + wq * za ** (q - 1.0)
        collapsed = (hi[idx] - lo[idx]) <= 4.0 * np.finfo(float).eps * hi[idx]
        done = (np.abs(psi) <= tol[idx]) | collapsed
        active[idx[done]] = False

        keep = ~done
        idx, za, psi = idx[keep], za[keep], psi[keep]
        if idx.size == 0:
            return z

        # psi is increasing on [c, inf): its sign tells which side the root is on
        above = psi > 0
        hi[idx[above]] = za[above]
        lo[idx[~above]] = za[~above]

        dpsi = 1.0 + wq * (q - 1.0) * za ** (q - 2.0)
        step = za - psi / dpsi
        lo_i, hi_i = lo[idx], hi[idx]
        outside = ~np.isfinite(step) | (step < lo_i) | (step > hi_i)
        step[outside] = 0.5 * (lo_i[outside] + hi_i[outside])
        z[idx] = step

    if np.any(active):
        bad = abs_a[active]
        raise ProxRootError(
            f"Lq prox root finder did not converge in {ROOT_MAX_ITER} iterations "
            f"for {bad.size} entries (first |a|={bad[0]:.6g}, weight={weight:.6g}, q={q})"
        )
    return z


def prox_vector(x: Union[np.ndarray, list], spec: ProxSpec) -> np.ndarray:
    """
    Apply Prox_{weight*|.|^q} elementwise.

    Args:
        x: Input vector
        spec: Prox parameters

    Returns:
        Vector of the same shape whose nonzero entries have magnitude >= c
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("Prox input must be finite")

    consts = prox_constants(spec)
    abs_x = np.abs(x)
    if spec.tie_rule is TieRule.PREFER_ZERO:
        keep = abs_x > consts.kappa
    else:
        keep = abs_x >= consts.kappa

    out = np.zeros_like(x)
    if not np.any(keep):
        return out
    if spec.q == 0:
        out[keep] = x[keep]
    else:
        out[keep] = np.sign(x[keep]) * _lq_root(abs_x[keep], spec.weight, spec.q, consts.c)
    return out


def prox_scalar(a: float, spec: ProxSpec) -> float:
    """
    Scalar proximal operator of weight*|.|^q.

    Args:
        a: Finite input
        spec: Prox parameters

    Returns:
        A minimiser of 0.5*(z - a)^2 + weight*|z|^q
    """
    return float(prox_vector(np.array([a], dtype=float), spec)[0])


def lq_penalty(x: np.ndarray, q: float) -> float:
    """
    Sum of |x_i|^q with 0^0 = 0, so q = 0 counts nonzeros.
    """
    x = np.asarray(x, dtype=float)
    nz = x[x != 0]
    if q == 0:
        return float(nz.size)
    return float(np.sum(np.abs(nz) ** q))


def lambda_upper_bound(grad0: np.ndarray, alpha: float, q: float) -> float:
    """
    Largest lambda for which x = 0 is not a P-stationary point with step alpha.

    Args:
        grad0: Gradient of f at the origin
        alpha: Step size, > 0
        q: Exponent in [0, 1)

    Returns:
        alpha^(1-q) / 2 * ||grad0||_inf^(2-q)
    """
    if not alpha > 0:
        raise ValueError(f"Step size alpha must be positive, got {alpha}")
    if not 0 <= q < 1:
        raise ValueError(f"Exponent q must lie in [0, 1), got {q}")
    grad_inf = float(np.max(np.abs(np.asarray(grad0, dtype=float)), initial=0.0))
    if grad_inf == 0:
        raise DegenerateProblemError("grad f(0) is zero: the origin is already stationary")
    return alpha ** (1.0 - q) / 2.0 * grad_inf ** (2.0 - q)
