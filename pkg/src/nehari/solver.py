"""Positive solutions on the two Nehari branches.

A point of the Nehari set is parametrized by a unit direction ``w`` and the
projection scalar ``t`` from :func:`nehari.fibering.project`: the ``N+``
branch uses the local minimum ``t+`` of the fibering map and the ``N-``
branch its local maximum ``t-``.  The reduced functionals

    J+(w) = E(t+(w) w),    J-(w) = E(t-(w) w)

are minimized over nonnegative unit directions with the shared sphere
descent.  Because ``t+-`` are critical points of ``t -> E(t w)`` their
sensitivity drops out of the gradient, which is ``t grad E(t w)``.  The
descent result is polished with Newton's method on ``grad E = 0`` so that
the weak residual reaches rounding level.

Positivity follows the perturbed-functional device: ``F`` and ``G`` are
evaluated on ``u+ = max(u, 0)`` and nodal values are projected to ``u >= 0``
after every step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from . import rng
from .descent import normalize, sphere_descent
from .discretize import (Direction, Discretization, energy, energy_and_gradient,
                         energy_hessian, make_direction, weak_residual)
from .errors import (ConvergenceError, InadmissibleStartError, PreconditionError)
from .extremal import random_start
from .fibering import (Branch, Cone, FiberingData, classify_cone, eval_fibering,
                       lambda_of_direction, project)
from .problem import ProblemSpec, check_boundary_sign

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-8
NEHARI_RTOL = 1e-10
ENERGY_RTOL = 1e-10
NONNEG_TOL = 1e-12
MAX_OUTER = 2000
DESCENT_GTOL = 1e-8
NEWTON_MAX = 30
TIE_RTOL = 1e-10
CAUCHY_TOL = 1e-6


class NehariBranch(Enum):
    PLUS = "NPlus"
    MINUS = "NMinus"


@dataclass
class NehariSolution:
    """A computed critical point together with its Nehari data.

    ``u`` holds the solution itself; its unit direction is ``u / t_scale``
    with ``t_scale = ||u||_X``.
    """

    u: Direction
    branch: NehariBranch
    lam: float
    energy: float
    t_scale: float
    psi2_at_1: float
    residual_norm: float
    lambda_of_dir: Optional[float]
    iterations: int = 0
    converged: bool = True

    @property
    def direction(self) -> np.ndarray:
        return self.u.coeffs / self.t_scale

    def summary(self) -> dict:
        return {
            "branch": self.branch.value,
            "lambda": self.lam,
            "energy": self.energy,
            "t_scale": self.t_scale,
            "psi2_at_1": self.psi2_at_1,
            "residual_norm": self.residual_norm,
            "lambda_of_dir": self.lambda_of_dir,
            "iterations": self.iterations,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class RestrictedSetParams:
    """Controls of the restricted minimization just past the extremal value.

    ``c_minus`` bounds ``||u||_X`` from above on the ``N-`` branch and
    ``c_plus`` bounds ``||v||_X`` from below on the ``N+`` branch.
    ``d_minus``/``d_plus`` are the distance margins to the tangency set;
    they are carried for reporting, the computable surrogate that is actually
    enforced is ``lambda_ab(w) - lambda >= delta_margin``.
    """

    d_minus: float
    d_plus: float
    c_minus: float
    c_plus: float
    epsilon: float
    delta_margin: float

    def __post_init__(self):
        for name in ("d_minus", "d_plus", "c_minus", "c_plus", "epsilon", "delta_margin"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise PreconditionError(f"{name} must be positive and finite, got {value}")
        if not self.c_plus < self.c_minus:
            raise PreconditionError(
                f"requires c_plus < c_minus (got c_plus = {self.c_plus}, c_minus = {self.c_minus})")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("d_minus", "d_plus", "c_minus", "c_plus", "epsilon", "delta_margin")}


@dataclass
class VerificationReport:
    checks: dict[str, tuple[float, bool]] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok in self.checks.values())

    def failures(self) -> list[str]:
        return [name for name, (_, ok) in self.checks.items() if not ok]

    def to_dict(self) -> dict:
        return {name: {"value": value, "pass": ok} for name, (value, ok) in self.checks.items()}


@dataclass
class ContinuationResult:
    minus: NehariSolution
    plus: NehariSolution
    lambdas: list[float]
    energies_minus: list[float]
    energies_plus: list[float]
    cauchy_gap_minus: float
    cauchy_gap_plus: float
    lambda_gap: float
    psi2_separation: float
    tangency_warning: bool

    @property
    def converged(self) -> bool:
        return max(self.cauchy_gap_minus, self.cauchy_gap_plus) < CAUCHY_TOL


@dataclass
class BeyondResult:
    minus: NehariSolution
    plus: NehariSolution
    params: RestrictedSetParams
    margin_minus: float
    margin_plus: Optional[float]
    attempts: int


# ----------------------------------------------------------------------------
# helpers


def _fiber(disc: Discretization, spec: ProblemSpec, w: np.ndarray):
    dw = make_direction(disc, spec, w, positive_part=True)
    return dw, FiberingData.from_direction(spec, dw)


def _branch_scalar(spec: ProblemSpec, dw: Direction, d: FiberingData,
                   branch: NehariBranch) -> Optional[float]:
    pr = project(d, spec.lam, cone_tol=dw.cone_tol)
    if branch is NehariBranch.PLUS:
        return pr.t_plus
    return pr.t_minus if pr.branch is Branch.TWO_ROOTS else None


def direction_lambda(disc: Discretization, spec: ProblemSpec, w) -> Optional[float]:
    """``lambda_ab`` of a direction, or None on ``C-`` where it is undefined."""
    dw, d = _fiber(disc, spec, np.asarray(getattr(w, "coeffs", w)))
    if classify_cone(dw.G, dw.cone_tol) is not Cone.PLUS:
        return None
    return lambda_of_direction(d)


def reduced_energy(disc: Discretization, spec: ProblemSpec, branch: NehariBranch, w
                   ) -> Optional[tuple[float, np.ndarray, float]]:
    """``J(w)``, its envelope gradient and the scalar ``t``; None if ``w`` has no projection."""
    w = np.asarray(getattr(w, "coeffs", w), dtype=float)
    dw, d = _fiber(disc, spec, w)
    t = _branch_scalar(spec, dw, d, branch)
    if t is None:
        return None
    E, g = energy_and_gradient(disc, spec, t * w, positive_part=True)
    return E, t * g, t


def _nehari_scale(spec: ProblemSpec, d: FiberingData) -> float:
    """Size of the individual terms of ``psi'(1)``; the Nehari identity is relative to it."""
    return (spec.a * d.P2 + spec.b * d.P2 ** spec.theta + spec.lam * d.F + abs(d.G))


def _energy_scale(disc: Discretization, spec: ProblemSpec, u: np.ndarray) -> float:
    """Sum of the magnitudes of the four energy terms at ``u``."""
    dw = make_direction(disc, spec, u, positive_part=True)
    return (0.5 * spec.a * dw.P2 + spec.b / (2 * spec.theta) * dw.P2 ** spec.theta
            + spec.lam / spec.gamma * dw.F + dw.G_abs / spec.p)


def _package(disc: Discretization, spec: ProblemSpec, branch: NehariBranch, u: np.ndarray,
             iterations: int, converged: bool) -> NehariSolution:
    u_dir = make_direction(disc, spec, u, positive_part=True)
    t_scale = math.sqrt(u_dir.P2)
    d = FiberingData.from_direction(spec, u_dir)
    vals = eval_fibering(d, spec.lam, 1.0)
    _, rnorm = weak_residual(disc, spec, u, positive_part=True)
    return NehariSolution(
        u=u_dir, branch=branch, lam=spec.lam,
        energy=energy(disc, spec, u, positive_part=True),
        t_scale=t_scale, psi2_at_1=vals.psi2, residual_norm=rnorm,
        lambda_of_dir=direction_lambda(disc, spec, u / t_scale),
        iterations=iterations, converged=converged)


def newton_polish(disc: Discretization, spec: ProblemSpec, u: np.ndarray,
                  max_iter: int = NEWTON_MAX) -> np.ndarray:
    """Newton's method on ``grad E = 0`` with a residual-decrease safeguard.

    Returns the iterate with the smallest weak residual.  Iterates stay
    nodally nonnegative.
    """
    best = np.array(u, dtype=float)
    best_r = weak_residual(disc, spec, best, positive_part=True)[1]
    cur = best
    for _ in range(max_iter):
        _, g = energy_and_gradient(disc, spec, cur, positive_part=True)
        H = energy_hessian(disc, spec, cur, positive_part=True)
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            break
        alpha = 1.0
        improved = False
        while alpha > 1e-4:
            trial = np.maximum(cur + alpha * step, 0.0)
            r = weak_residual(disc, spec, trial, positive_part=True)[1]
            if r < best_r:
                improved = True
                break
            alpha *= 0.5
        if not improved:
            break
        cur, best, best_r = trial, trial, r
        if best_r < 1e-3 * RESIDUAL_TOL:
            break
    return best


# ----------------------------------------------------------------------------
# branch minimization


def minimize_branch(disc: Discretization, spec: ProblemSpec, branch: NehariBranch,
                    start, max_iter: int = MAX_OUTER, gtol: float = DESCENT_GTOL,
                    constraint=None, raise_on_failure: bool = True) -> NehariSolution:
    """Minimize ``J+`` or ``J-`` over nonnegative directions from ``start``.

    ``constraint(w, t)`` (optional) returns False for directions to be
    rejected; the beyond-extremal solve uses it for its admissibility and
    norm restrictions.
    """
    if spec.lam <= 0:
        raise PreconditionError("the branch solvers need lambda > 0")
    w0 = np.maximum(np.asarray(getattr(start, "coeffs", start), dtype=float), 0.0)
    if not np.any(w0 > 0):
        raise PreconditionError("start direction must be nonzero and nonnegative")
    w0 = normalize(disc, w0)
    dw0, d0 = _fiber(disc, spec, w0)
    if branch is NehariBranch.MINUS:
        if classify_cone(dw0.G, dw0.cone_tol) is Cone.MINUS:
            raise PreconditionError(
                "an N- start must lie in C+ (int g|u|^p > 0); C- directions only reach N+")
        lam_u = lambda_of_direction(d0)
        if not spec.lam < lam_u:
            raise InadmissibleStartError(
                f"lambda = {spec.lam:.17g} is not below lambda_ab(start) = {lam_u:.17g}")
    first = reduced_energy(disc, spec, branch, w0)
    if first is None or (constraint is not None and not constraint(w0, first[2])):
        raise InadmissibleStartError("start direction has no admissible projection on this branch")
    scale = max(abs(first[0]), 1.0)

    def objective(w):
        out = reduced_energy(disc, spec, branch, w)
        if out is None or (constraint is not None and not constraint(w, out[2])):
            return None
        return out[0] / scale, out[1] / scale

    res = sphere_descent(disc, objective, w0, max_iter=max_iter, gtol=gtol)
    t = reduced_energy(disc, spec, branch, res.coeffs)[2]
    u_desc = t * res.coeffs
    u = newton_polish(disc, spec, u_desc)
    sol = _package(disc, spec, branch, u, res.iterations, True)
    if not _acceptable_polish(disc, spec, sol, u_desc, constraint):
        log.debug("Newton polish rejected on %s; keeping descent iterate", branch.value)
        sol = _package(disc, spec, branch, u_desc, res.iterations, True)
    sol.converged = sol.residual_norm < RESIDUAL_TOL and _branch_sign_ok(sol)
    if not sol.converged and raise_on_failure:
        raise ConvergenceError(
            f"{branch.value} solve at lambda = {spec.lam:.6g} stopped with residual "
            f"{sol.residual_norm:.3e} and psi''(1) = {sol.psi2_at_1:.3e}", last=sol)
    return sol


def _branch_sign_ok(sol: NehariSolution) -> bool:
    if sol.branch is NehariBranch.PLUS:
        return sol.psi2_at_1 > 0
    return sol.psi2_at_1 < 0


def _acceptable_polish(disc, spec, sol, u_desc, constraint) -> bool:
    """The polished point must stay on its branch, nonnegative and not raise the energy."""
    if not _branch_sign_ok(sol) or sol.u.coeffs.min() < -NONNEG_TOL:
        return False
    e_desc = energy(disc, spec, u_desc, positive_part=True)
    if sol.energy > e_desc + 1e-8 * _energy_scale(disc, spec, u_desc):
        return False
    if constraint is not None and not constraint(sol.direction, sol.t_scale):
        return False
    return True


def _better(a: NehariSolution, b: NehariSolution) -> bool:
    """Lowest energy wins; near ties go to the smaller residual."""
    tie = abs(a.energy - b.energy) <= TIE_RTOL * max(abs(a.energy), abs(b.energy), 1.0)
    if tie:
        return a.residual_norm < b.residual_norm
    return a.energy < b.energy


def solve_pair(disc: Discretization, spec: ProblemSpec, n_starts: int = 4, seed: int = 0,
               lambda_star: Optional[float] = None, warm: Optional[list] = None
               ) -> tuple[NehariSolution, NehariSolution]:
    """Best ``N-`` and ``N+`` solutions over a multistart.

    Returns ``(minus, plus)``.  Starts are the directions in ``warm`` followed
    by ``n_starts`` random nonnegative directions.  With ``lambda_star`` given
    the call is refused for ``lambda >= lambda_star``.
    """
    if lambda_star is not None and not spec.lam < lambda_star:
        raise PreconditionError(
            f"solve_pair covers lambda < lambda* (got lambda = {spec.lam:.6g}, "
            f"lambda* estimate {lambda_star:.6g}); use the beyond-extremal solver past it")
    if spec.a > 0:
        check_boundary_sign(disc.g_nodes)
    starts = [np.asarray(getattr(w, "coeffs", w), dtype=float) for w in (warm or [])]
    starts += [random_start(disc, spec, rng.stream(seed, rng.SOLVER, i)) for i in range(n_starts)]
    if not starts:
        raise PreconditionError("solve_pair needs at least one start")
    results = {}
    for branch in (NehariBranch.MINUS, NehariBranch.PLUS):
        best = None
        last_error = None
        for w in starts:
            try:
                sol = minimize_branch(disc, spec, branch, w)
            except (InadmissibleStartError, ConvergenceError) as exc:
                last_error = exc
                continue
            if best is None or _better(sol, best):
                best = sol
        if best is None:
            raise ConvergenceError(f"no start produced a verified {branch.value} solution",
                                   last=getattr(last_error, "last", None))
        results[branch] = best
    return results[NehariBranch.MINUS], results[NehariBranch.PLUS]


# ----------------------------------------------------------------------------
# continuation to the extremal value


def _psi2_scale(spec: ProblemSpec, sol: NehariSolution) -> float:
    d = FiberingData.from_direction(spec, sol.u)
    return _nehari_scale(spec, d)


def continuation_at_extremal(disc: Discretization, spec: ProblemSpec, lambda_star: float,
                             n_steps: int = 50, start: Optional[tuple] = None
                             ) -> ContinuationResult:
    """Follow both branches along ``lambda_k = (1 - 2^-k) lambda*``, ``k = 1..n_steps``.

    Every solve is warm-started from the previous solution.  The returned
    ``psi2_separation`` is ``-psi''(1) / scale`` of the final ``N-`` solution
    (positive means it is bounded away from the tangency set), ``lambda_gap``
    is the relative gap ``lambda_ab(w) / lambda* - 1`` of its direction.  The
    tangency warning fires when the separation shrinks faster than the gap
    over the last steps.
    """
    if n_steps < 2:
        raise PreconditionError("continuation needs at least two steps")
    lambdas, em, ep = [], [], []
    seps, gaps = [], []
    warm_minus = warm_plus = None
    if start is not None:
        warm_minus, warm_plus = (s.direction for s in start)
    minus = plus = None
    for k in range(1, n_steps + 1):
        lam_k = (1.0 - 2.0 ** (-k)) * lambda_star
        sk = spec.with_lambda(lam_k)
        if warm_minus is None:
            minus, plus = solve_pair(disc, sk, n_starts=1, seed=0)
        else:
            minus = minimize_branch(disc, sk, NehariBranch.MINUS, warm_minus)
            plus = minimize_branch(disc, sk, NehariBranch.PLUS, warm_plus)
        warm_minus, warm_plus = minus.direction, plus.direction
        lambdas.append(lam_k)
        em.append(minus.energy)
        ep.append(plus.energy)
        seps.append(-minus.psi2_at_1 / _psi2_scale(sk, minus))
        gaps.append((minus.lambda_of_dir or math.inf) / lambda_star - 1.0)
    # collapse detector: separation decaying while the lambda gap does not
    sep_ratio = seps[-1] / seps[-2] if seps[-2] > 0 else 0.0
    gap_ratio = gaps[-1] / gaps[-2] if gaps[-2] > 0 else 0.0
    warning = seps[-1] <= 0 or sep_ratio < 0.5 * gap_ratio
    return ContinuationResult(
        minus=minus, plus=plus, lambdas=lambdas, energies_minus=em, energies_plus=ep,
        cauchy_gap_minus=abs(em[-1] - em[-2]), cauchy_gap_plus=abs(ep[-1] - ep[-2]),
        lambda_gap=gaps[-1], psi2_separation=seps[-1], tangency_warning=warning)


# ----------------------------------------------------------------------------
# beyond the extremal value


def default_restricted_params(base: tuple[NehariSolution, NehariSolution], lambda_star: float,
                              epsilon: Optional[float] = None,
                              delta_margin: Optional[float] = None) -> RestrictedSetParams:
    """Norm bounds taken from the extremal pair: ``c- = 1.5 ||u*||``, ``c+ = 0.5 ||v*||``."""
    minus, plus = base
    c_minus = 1.5 * minus.t_scale
    c_plus = 0.5 * plus.t_scale
    d_minus = (minus.lambda_of_dir or 2 * lambda_star) / lambda_star - 1.0
    d_plus = ((plus.lambda_of_dir / lambda_star - 1.0)
              if plus.lambda_of_dir is not None else 1.0)
    return RestrictedSetParams(
        d_minus=max(d_minus, 1e-12), d_plus=max(d_plus, 1e-12),
        c_minus=c_minus, c_plus=c_plus,
        epsilon=1e-2 * lambda_star if epsilon is None else epsilon,
        delta_margin=1e-4 * lambda_star if delta_margin is None else delta_margin)


def solve_beyond_extremal(disc: Discretization, spec: ProblemSpec, params: RestrictedSetParams,
                          base: tuple[NehariSolution, NehariSolution], lambda_star: float
                          ) -> BeyondResult:
    """Restricted minimization of both branches for ``lambda in (lambda*, lambda* + eps)``.

    Directions must satisfy ``lambda_ab(w) >= lambda + delta_margin`` (``N+``
    directions may also lie in ``C-``), ``||t- w||_X <= c_minus`` on the
    ``N-`` branch and ``||t+ w||_X >= c_plus`` on the ``N+`` branch.
    """
    lam = spec.lam
    if not lambda_star < lam < lambda_star + params.epsilon:
        raise PreconditionError(
            f"lambda = {lam:.17g} is outside the window ({lambda_star:.17g}, "
            f"{lambda_star + params.epsilon:.17g})")

    def admissible(w) -> bool:
        lam_w = direction_lambda(disc, spec, w)
        return lam_w is None or lam_w - lam >= params.delta_margin

    def minus_ok(w, t):
        return direction_lambda(disc, spec, w) is not None and admissible(w) \
            and t <= params.c_minus

    def plus_ok(w, t):
        return admissible(w) and t >= params.c_plus

    minus_base, plus_base = base
    for name, sol, ok in (("N-", minus_base, minus_ok), ("N+", plus_base, plus_ok)):
        w = sol.direction
        out = reduced_energy(disc, spec, sol.branch, w)
        if out is None or not ok(w, out[2]):
            raise InadmissibleStartError(
                f"{name} start violates the restricted set at lambda = {lam:.6g}; "
                "try a smaller epsilon or delta_margin")
    minus = minimize_branch(disc, spec, NehariBranch.MINUS, minus_base.direction,
                            constraint=minus_ok)
    plus = minimize_branch(disc, spec, NehariBranch.PLUS, plus_base.direction,
                           constraint=plus_ok)
    margin_plus = None if plus.lambda_of_dir is None else plus.lambda_of_dir - lam
    return BeyondResult(minus=minus, plus=plus, params=params,
                        margin_minus=minus.lambda_of_dir - lam, margin_plus=margin_plus,
                        attempts=1)


def solve_beyond_adaptive(disc: Discretization, spec: ProblemSpec,
                          base: tuple[NehariSolution, NehariSolution], lambda_star: float,
                          params: Optional[RestrictedSetParams] = None) -> BeyondResult:
    """Start from ``eps = 1e-2 lambda*`` and halve it until the restricted solve succeeds.

    Gives up with the last error once ``lambda`` no longer fits in the window.
    """
    params = params or default_restricted_params(base, lambda_star)
    attempts = 0
    while True:
        attempts += 1
        try:
            res = solve_beyond_extremal(disc, spec, params, base, lambda_star)
            res.attempts = attempts
            return res
        except (InadmissibleStartError, ConvergenceError):
            smaller = replace(params, epsilon=0.5 * params.epsilon)
            if not spec.lam < lambda_star + smaller.epsilon:
                raise
            params = smaller


# ----------------------------------------------------------------------------
# verification


def verify_solution(disc: Discretization, spec: ProblemSpec, sol: NehariSolution,
                    tol: float = RESIDUAL_TOL) -> VerificationReport:
    """Pass/fail report of the defining properties of a computed solution."""
    rep = VerificationReport()
    c = np.asarray(sol.u.coeffs, dtype=float)
    umax = float(c.max()) if c.size else 0.0
    rep.checks["nonzero"] = (umax if np.any(c != 0) else 0.0, bool(np.any(c != 0)))
    rep.checks["nonnegative"] = (float(c.min()), bool(c.min() >= -NONNEG_TOL))
    rep.checks["interior_positive"] = (umax, umax > 0)
    if not np.any(c != 0):
        return rep
    sp = spec.with_lambda(sol.lam)
    _, rnorm = weak_residual(disc, sp, c)
    rep.checks["residual"] = (rnorm, rnorm < tol)
    dw = make_direction(disc, sp, c)
    d = FiberingData.from_direction(sp, dw)
    vals = eval_fibering(d, sp.lam, 1.0)
    scale = _nehari_scale(sp, d)
    rep.checks["nehari_identity"] = (abs(vals.psi1) / scale, abs(vals.psi1) <= NEHARI_RTOL * scale)
    sign_ok = vals.psi2 > 0 if sol.branch is NehariBranch.PLUS else vals.psi2 < 0
    rep.checks["branch_sign"] = (vals.psi2, bool(sign_ok))
    E = energy(disc, sp, c)
    unit = c / sol.t_scale
    d_unit = FiberingData.from_direction(sp, make_direction(disc, sp, unit))
    psi = eval_fibering(d_unit, sp.lam, sol.t_scale).psi
    gap = abs(E - psi) / _energy_scale(disc, sp, c)
    rep.checks["energy_identity"] = (gap, gap <= ENERGY_RTOL)
    return rep
