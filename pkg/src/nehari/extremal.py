"""Numerical estimate of the extremal parameter.

``lambda*_ab = inf { lambda_ab(u) : u in C+ }``.  Since ``lambda_ab`` is
0-homogeneous the search runs on the unit sphere ``||u||_X = 1``.  The
gradient comes from the envelope theorem: ``t_ab(u)`` maximizes
``t -> Phi_u(t)``, so only the explicit dependence of ``Phi_u(t)/F`` on
``(P2, F, G)`` is differentiated.  Descent directions are Riesz
representatives in the discrete X inner product (``-A^{-1} grad``), which
are automatically tangent to the sphere.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .discretize import (Direction, Discretization, make_direction,
                         weighted_power_gradient)
from .descent import normalize, sphere_descent
from .errors import AssumptionError, PreconditionError
from .fibering import FiberingData, classify_cone, Cone, maximizer_of_phi, phi
from .problem import ProblemSpec

STALL_GTOL = 1e-6
MAX_REJECTIONS = 1000
TIE_BAND = 1e-6


@dataclass
class ExtremalEstimate:
    lambda_star: float
    minimizer: Direction
    starts_used: int
    history: list[tuple[int, float]]
    converged: bool
    gradient_norm: float = np.nan
    terminal_values: list[float] = field(default_factory=list)

    @property
    def near_ties(self) -> list[float]:
        """Terminal values of all starts within ``TIE_BAND`` of the best."""
        return [v for v in self.terminal_values if v - self.lambda_star <= TIE_BAND]


def lambda_and_gradient(disc: Discretization, spec: ProblemSpec, u
                        ) -> tuple[float, np.ndarray, Direction]:
    """``lambda_ab(u)`` and its gradient with respect to the nodal values."""
    w = u if isinstance(u, Direction) else make_direction(disc, spec, u)
    if classify_cone(w.G, w.cone_tol) is Cone.MINUS:
        raise PreconditionError(f"lambda_ab is undefined on C- (G = {w.G:g})")
    d = FiberingData.from_direction(spec, w)
    t = maximizer_of_phi(d)
    value = phi(d, t) / d.F
    g = spec.gamma
    # partial derivatives of Phi(t)/F at frozen t
    dP2 = (spec.a * t ** (2 - g) + spec.b * spec.theta * t ** (2 * spec.theta - g)
           * d.P2 ** (spec.theta - 1)) / d.F
    dG = -t ** (spec.p - g) / d.F
    dF = -value / d.F
    c = w.coeffs
    grad = (dP2 * 2.0 * (disc.A @ c)
            + dF * weighted_power_gradient(disc, disc.f_q, c, spec.gamma)
            + dG * weighted_power_gradient(disc, disc.g_q, c, spec.p))
    return value, grad, w


def direction_gradient_of_lambda(disc: Discretization, spec: ProblemSpec, u) -> np.ndarray:
    return lambda_and_gradient(disc, spec, u)[1]


def tangent_gradient(disc: Discretization, w: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Euclidean projection of ``grad`` onto the tangent space of the X-sphere at ``w``."""
    normal = disc.A @ w
    return grad - normal * (normal @ grad) / (normal @ normal)


def random_start(disc: Discretization, spec: ProblemSpec, gen: np.random.Generator) -> np.ndarray:
    """Nonnegative random nodal vector under a bump envelope, rejection-sampled into C+."""
    x = disc.nodes
    mid = 0.5 * (x[0] + x[-1])
    half = 0.5 * (x[-1] - x[0]) + disc.h
    env = np.clip(1.0 - ((x - mid) / half) ** 2, 0.0, None)
    for _ in range(MAX_REJECTIONS):
        v = env * (0.25 + gen.random(disc.n))
        w = make_direction(disc, spec, v)
        if classify_cone(w.G, w.cone_tol) is Cone.PLUS:
            return normalize(disc, v)
        # concentrate the next draw around a random point of the domain
        centre = gen.uniform(x[0], x[-1])
        width = gen.uniform(0.05, 0.5) * (x[-1] - x[0])
        env = np.exp(-(((x - centre) / width) ** 2))
    raise AssumptionError(
        f"no start with int g|u|^p > 0 found after {MAX_REJECTIONS} draws; "
        "check that g is positive somewhere")


@dataclass
class _Run:
    value: float
    coeffs: np.ndarray
    history: list
    converged: bool
    gradient_norm: float
    best_seen: float
    best_seen_coeffs: np.ndarray


def minimize_lambda(disc: Discretization, spec: ProblemSpec, start: np.ndarray,
                    max_iter: int = 500, gtol: float = 1e-8) -> _Run:
    """Projected gradient descent of ``log lambda_ab`` on the unit X-sphere.

    Working with the logarithm makes step lengths and the stopping rule
    independent of the size of ``lambda_ab``, which is often in the
    thousands: ``gtol`` bounds the X-dual norm of the tangent part of
    ``grad lambda / lambda``.  A run that stalls because the value is resolved
    to rounding counts as converged once that norm is below ``STALL_GTOL``.
    """
    best = {"value": np.inf, "coeffs": None}

    def objective(w):
        dw = make_direction(disc, spec, w)
        if classify_cone(dw.G, dw.cone_tol) is not Cone.PLUS:
            return None
        value, grad, _ = lambda_and_gradient(disc, spec, dw)
        return np.log(value), grad / value

    def record(w, log_value):
        value = float(np.exp(log_value))
        if value < best["value"]:
            best["value"], best["coeffs"] = value, w

    w0 = normalize(disc, np.maximum(start, 0.0))
    if objective(w0) is None:
        raise PreconditionError("start direction is not in C+")
    record(w0, objective(w0)[0])
    res = sphere_descent(disc, objective, w0, max_iter=max_iter, gtol=gtol,
                         on_trial=record)
    converged = res.converged or (res.stalled and res.gradient_norm < STALL_GTOL)
    history = [(i, float(np.exp(v))) for i, v in res.history]
    return _Run(float(np.exp(res.value)), res.coeffs, history, converged,
                res.gradient_norm, best["value"], best["coeffs"])


def estimate_lambda_star(disc: Discretization, spec: ProblemSpec, n_starts: int = 8,
                         seed: int = 0, max_iter: int = 500, gtol: float = 1e-8,
                         workers: int = 1) -> ExtremalEstimate:
    """Multistart estimate of ``lambda*_ab``; the result is an upper bound of the infimum."""
    if n_starts < 1:
        raise PreconditionError("n_starts must be at least 1")

    def run(i):
        start = random_start(disc, spec, rng.stream(seed, rng.EXTREMAL, i))
        return minimize_lambda(disc, spec, start, max_iter=max_iter, gtol=gtol)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(run, range(n_starts)))
    else:
        runs = [run(i) for i in range(n_starts)]
    # ordered reduction: lowest value, earliest start on ties
    best = min(range(n_starts), key=lambda i: (runs[i].best_seen, i))
    r = runs[best]
    minimizer = make_direction(disc, spec, r.best_seen_coeffs)
    return ExtremalEstimate(
        lambda_star=r.best_seen,
        minimizer=minimizer,
        starts_used=n_starts,
        history=r.history,
        converged=r.converged,
        gradient_norm=r.gradient_norm,
        terminal_values=[run_.best_seen for run_ in runs],
    )
