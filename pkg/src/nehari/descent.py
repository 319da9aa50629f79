"""Projected gradient descent on the unit sphere of the discrete X norm.

Both the extremal search and the branch solver minimize 0-homogeneous
functionals of a direction ``w``.  They share this routine: steepest descent
in the X inner product (search direction ``-A^{-1} grad``, projected onto the
tangent space), Barzilai-Borwein trial steps, monotone Armijo backtracking,
and a nonnegativity projection followed by renormalization after every step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .discretize import Discretization

ARMIJO_C = 1e-4
SHRINK = 0.5
INITIAL_STEP = 1.0
MIN_STEP = 1e-14
BB_CLAMP = (1e-4, 1e4)

# objective(w) -> (value, gradient) or None when w is outside the feasible set
Objective = Callable[[np.ndarray], Optional[tuple[float, np.ndarray]]]


@dataclass
class DescentResult:
    coeffs: np.ndarray
    value: float
    gradient: np.ndarray
    history: list[tuple[int, float]]
    converged: bool
    stalled: bool
    gradient_norm: float
    iterations: int


def normalize(disc: Discretization, coeffs: np.ndarray) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    return c / np.sqrt(c @ (disc.A @ c))


def riesz_tangent(disc: Discretization, w: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """X-Riesz representative of ``grad`` projected onto the tangent space at unit ``w``."""
    r = disc.solve_A(grad)
    return r - (w @ (disc.A @ r)) * w


def sphere_descent(disc: Discretization, objective: Objective, start: np.ndarray,
                   max_iter: int = 500, gtol: float = 1e-8, nonnegative: bool = True,
                   on_trial: Callable[[np.ndarray, float], None] | None = None
                   ) -> DescentResult:
    """Minimize ``objective`` over unit directions, starting from ``start``.

    Stops when the X-dual norm of the tangent gradient drops below ``gtol``,
    after ``max_iter`` iterations, or when no trial step gives an Armijo
    decrease (``stalled``; this happens once the value is resolved to
    rounding).  Trial points for which ``objective`` returns None are treated
    like failed Armijo trials and the step is halved.  ``on_trial`` sees every
    evaluated feasible trial point.
    """
    w = normalize(disc, np.maximum(start, 0.0) if nonnegative else start)
    first = objective(w)
    if first is None:
        raise ValueError("starting direction is infeasible")
    value, grad = first
    history = [(0, value)]
    alpha = INITIAL_STEP
    prev = None
    converged = stalled = False
    gnorm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        r = riesz_tangent(disc, w, grad)
        gnorm = float(np.sqrt(max(grad @ r, 0.0)))
        if gnorm < gtol:
            converged = True
            it -= 1
            break
        if prev is not None:
            sw = w - prev[0]
            sy = grad - prev[1]
            den = sw @ sy
            if den > 0:
                alpha = float(np.clip((sw @ (disc.A @ sw)) / den, *BB_CLAMP))
        step = alpha
        accepted = False
        while step > MIN_STEP:
            trial = w - step * r
            if nonnegative:
                trial = np.maximum(trial, 0.0)
            if np.any(trial != 0):
                trial = normalize(disc, trial)
                out = objective(trial)
                if out is not None:
                    tval, tgrad = out
                    if on_trial is not None:
                        on_trial(trial, tval)
                    if tval < value and tval <= value + ARMIJO_C * (grad @ (trial - w)):
                        accepted = True
                        break
            step *= SHRINK
        if not accepted:
            stalled = True
            it -= 1
            break
        prev = (w, grad)
        w, value, grad = trial, tval, tgrad
        history.append((it, value))
    return DescentResult(w, value, grad, history, converged, stalled, gnorm, it)
