"""Scalar calculus of the fibering maps.

Everything here acts on the reduction of a direction ``u`` to the triple
``P2 = ||u||_X^2``, ``F = int f |u|^gamma``, ``G = int g |u|^p`` together with
the exponents.  Along the ray ``t -> t u`` the energy is

    psi(t) = a/2 t^2 P2 + b/(2 theta) t^(2 theta) P2^theta
             - lam/gamma t^gamma F - 1/p t^p G,

and ``psi'(t) = t^(gamma-1) (Phi(t) - lam F)`` with

    Phi(t) = a t^(2-gamma) P2 + b t^(2 theta-gamma) P2^theta - t^(p-gamma) G.

So the Nehari points on the ray are the solutions of ``Phi(t) = lam F``.
When ``G > 0`` the function ``Phi`` rises from 0 to a single maximum at
``t_ab`` and then falls to ``-inf``; its peak value divided by ``F`` is the
critical parameter ``lambda_ab(u)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, NamedTuple

from .errors import PreconditionError

ROOT_RTOL = 1e-12
TANGENT_RTOL = 1e-9
_MAX_EXPANSIONS = 400


@dataclass(frozen=True)
class FiberingData:
    a: float
    b: float
    theta: float
    gamma: float
    p: float
    P2: float
    F: float
    G: float

    def __post_init__(self):
        if not self.P2 > 0:
            raise PreconditionError(f"direction must be nonzero (P2 = {self.P2})")
        if not self.F > 0:
            raise PreconditionError(f"F = int f|u|^gamma must be positive (F = {self.F})")

    @classmethod
    def from_direction(cls, spec, direction) -> "FiberingData":
        return cls(spec.a, spec.b, spec.theta, spec.gamma, spec.p,
                   direction.P2, direction.F, direction.G)

    def scaled(self, c: float) -> "FiberingData":
        """Reduction of ``c u`` given the reduction of ``u``."""
        return FiberingData(self.a, self.b, self.theta, self.gamma, self.p,
                            c * c * self.P2, c ** self.gamma * self.F, c ** self.p * self.G)


class FiberingValues(NamedTuple):
    psi: float
    psi1: float
    psi2: float
    phi: float
    m: float
    H: float


class Cone(Enum):
    PLUS = "C+"
    MINUS = "C-"


class Branch(Enum):
    TWO_ROOTS = "two_roots"
    TANGENT = "tangent"
    SINGLE_ROOT = "single_root"
    NO_ROOT = "no_root"


@dataclass(frozen=True)
class ProjectionResult:
    """Outcome of projecting a ray onto the Nehari set.

    ``t_plus`` is the local minimum of ``psi`` (on N+), ``t_minus`` the local
    maximum (on N-), ``t_zero`` the degenerate inflection point (on N0).
    """

    branch: Branch
    t_plus: float | None = None
    t_minus: float | None = None
    t_zero: float | None = None

    @property
    def count(self) -> int:
        return {Branch.TWO_ROOTS: 2, Branch.TANGENT: 1,
                Branch.SINGLE_ROOT: 1, Branch.NO_ROOT: 0}[self.branch]


def eval_fibering(d: FiberingData, lam: float, t: float) -> FiberingValues:
    if not t > 0:
        raise PreconditionError(f"fibering maps are evaluated at t > 0, got t = {t}")
    a, b, th, g, p = d.a, d.b, d.theta, d.gamma, d.p
    P2, Pth, F, G = d.P2, d.P2 ** d.theta, d.F, d.G
    t2, t2th, tg, tp = t * t, t ** (2 * th), t ** g, t ** p
    psi = 0.5 * a * t2 * P2 + b / (2 * th) * t2th * Pth - lam / g * tg * F - tp * G / p
    psi1 = a * t * P2 + b * t2th / t * Pth - lam * tg / t * F - tp / t * G
    psi2 = (a * P2 + b * (2 * th - 1) * t2th / t2 * Pth
            - lam * (g - 1) * tg / t2 * F - (p - 1) * tp / t2 * G)
    phi = (a * t2 * P2 + b * t2th * Pth - tp * G) / tg
    m = a * (2 - g) * t2 * P2 + b * (2 * th - g) * t2th * Pth - (p - g) * tp * G
    H = a * (2 - g) * P2 + b * (2 * th - g) * t2th / t2 * Pth - (p - g) * tp / t2 * G
    return FiberingValues(psi, psi1, psi2, phi, m, H)


def phi(d: FiberingData, t: float) -> float:
    return (d.a * t ** 2 * d.P2 + d.b * t ** (2 * d.theta) * d.P2 ** d.theta
            - t ** d.p * d.G) / t ** d.gamma


def phi_prime(d: FiberingData, t: float) -> float:
    return _H(d, t) * t ** (1 - d.gamma)


def _H(d: FiberingData, t: float) -> float:
    g = d.gamma
    return (d.a * (2 - g) * d.P2 + d.b * (2 * d.theta - g) * t ** (2 * d.theta - 2) * d.P2 ** d.theta
            - (d.p - g) * t ** (d.p - 2) * d.G)


def _H_prime(d: FiberingData, t: float) -> float:
    g = d.gamma
    return (d.b * (2 * d.theta - 2) * (2 * d.theta - g) * t ** (2 * d.theta - 3) * d.P2 ** d.theta
            - (d.p - 2) * (d.p - g) * t ** (d.p - 3) * d.G)


def classify_cone(G: float, tol: float = 0.0) -> Cone:
    """``C+`` iff ``G > tol``; the boundary case ``G = 0`` belongs to ``C-``."""
    return Cone.PLUS if G > tol else Cone.MINUS


def bracketed_newton(f: Callable[[float], float], df: Callable[[float], float],
                     lo: float, hi: float, rtol: float = ROOT_RTOL, maxiter: int = 200) -> float:
    """Root of ``f`` in ``[lo, hi]`` (sign change required), Newton with bisection fallback.

    Bisection is geometric (``lo > 0``) so brackets spanning many decades
    shrink evenly.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise PreconditionError(f"no sign change on [{lo}, {hi}]")
    x = math.sqrt(lo * hi) if lo > 0 else 0.5 * (lo + hi)
    for _ in range(maxiter):
        fx = f(x)
        if fx == 0:
            return x
        if (fx > 0) == (flo > 0):
            lo, flo = x, fx
        else:
            hi = x
        if hi - lo <= rtol * abs(x):
            return 0.5 * (lo + hi)
        dfx = df(x)
        step_ok = False
        if dfx != 0 and math.isfinite(dfx):
            xn = x - fx / dfx
            if lo < xn < hi:
                step_ok = True
                if abs(xn - x) <= 0.25 * rtol * abs(xn):
                    return xn
                x = xn
        if not step_ok:
            x = math.sqrt(lo * hi) if lo > 0 else 0.5 * (lo + hi)
    return x


def h_critical_point(d: FiberingData) -> float:
    """The unique positive critical point of ``H`` (requires ``G > 0``)."""
    if not d.G > 0:
        raise PreconditionError("H has an interior critical point only for G > 0")
    num = d.b * (2 * d.theta - 2) * (2 * d.theta - d.gamma) * d.P2 ** d.theta
    den = (d.p - 2) * (d.p - d.gamma) * d.G
    return (num / den) ** (1.0 / (d.p - 2 * d.theta))


def degenerate_maximizer(d: FiberingData) -> float:
    """Closed form of ``t_ab`` when ``a = 0``."""
    return ((d.b * (2 * d.theta - d.gamma) * d.P2 ** d.theta)
            / ((d.p - d.gamma) * d.G)) ** (1.0 / (d.p - 2 * d.theta))


def degenerate_lambda(d: FiberingData) -> float:
    """Closed form of ``lambda_ab(u)`` when ``a = 0``."""
    th, g, p = d.theta, d.gamma, d.p
    Pth = d.P2 ** th
    return (d.b * (p - 2 * th) / (p - g) * Pth / d.F
            * (d.b * (2 * th - g) / (p - g) * Pth / d.G) ** ((2 * th - g) / (p - 2 * th)))


def maximizer_numeric(d: FiberingData) -> float:
    """Root of ``H`` to the right of its critical point, found by bracketing."""
    lo = h_critical_point(d)
    hi = 2.0 * lo
    for _ in range(_MAX_EXPANSIONS):
        if _H(d, hi) < 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise PreconditionError("could not bracket the maximizer of Phi")
    return bracketed_newton(lambda t: _H(d, t), lambda t: _H_prime(d, t), lo, hi)


def maximizer_of_phi(d: FiberingData) -> float:
    """Global maximizer ``t_ab`` of ``Phi`` (the positive root of ``m``), ``G > 0``."""
    if not d.G > 0:
        raise PreconditionError(f"Phi has a maximizer only for directions in C+ (G = {d.G})")
    if d.a == 0:
        return degenerate_maximizer(d)
    return maximizer_numeric(d)


def eliminated_lambda(d: FiberingData, t: float) -> float:
    """``lambda`` from the two Nehari/tangency equations with ``G`` eliminated."""
    num = (d.a * (d.p - 2) * t * t * d.P2
           + d.b * (d.p - 2 * d.theta) * t ** (2 * d.theta) * d.P2 ** d.theta)
    return num / ((d.p - d.gamma) * t ** d.gamma * d.F)


def lambda_of_direction(d: FiberingData) -> float:
    """``lambda_ab(u) = max_t Phi(t) / F``; only defined on ``C+``."""
    if not d.G > 0:
        raise PreconditionError(f"lambda_ab is undefined on C- (G = {d.G})")
    return phi(d, maximizer_of_phi(d)) / d.F


def _root_below(d: FiberingData, target: float, hi: float) -> float:
    """Root of ``Phi = target`` on ``(0, hi]`` where ``Phi`` is increasing."""
    lo = hi
    for _ in range(_MAX_EXPANSIONS):
        lo *= 0.5
        if phi(d, lo) < target:
            break
    else:
        raise PreconditionError("could not bracket the lower Nehari point")
    return bracketed_newton(lambda t: phi(d, t) - target, lambda t: phi_prime(d, t), lo, hi)


def _root_above(d: FiberingData, target: float, lo: float) -> float:
    """Root of ``Phi = target`` on ``[lo, inf)`` where ``Phi`` is decreasing to ``-inf``."""
    hi = lo
    for _ in range(_MAX_EXPANSIONS):
        hi *= 2.0
        if phi(d, hi) < target:
            break
    else:
        raise PreconditionError("could not bracket the upper Nehari point")
    return bracketed_newton(lambda t: phi(d, t) - target, lambda t: phi_prime(d, t), lo, hi)


def project(d: FiberingData, lam: float, root_tol: float = TANGENT_RTOL,
            cone_tol: float = 0.0) -> ProjectionResult:
    """Locate the Nehari points ``t u`` on the ray through ``u``."""
    if not lam > 0:
        raise PreconditionError(f"projection needs lambda > 0, got {lam}")
    target = lam * d.F
    if classify_cone(d.G, cone_tol) is Cone.MINUS:
        # Phi increases from 0 to +inf (up to t_ab if 0 < G <= cone_tol)
        t_cap = maximizer_of_phi(d) if d.G > 0 else math.inf
        hi = min(1.0, t_cap)
        while phi(d, hi) < target:
            if hi >= t_cap:
                return ProjectionResult(Branch.NO_ROOT)
            hi = min(2.0 * hi, t_cap)
        return ProjectionResult(Branch.SINGLE_ROOT, t_plus=_root_below(d, target, hi))
    t_ab = maximizer_of_phi(d)
    lam_u = phi(d, t_ab) / d.F
    if abs(lam - lam_u) <= root_tol * lam_u:
        return ProjectionResult(Branch.TANGENT, t_zero=t_ab)
    if lam > lam_u:
        return ProjectionResult(Branch.NO_ROOT)
    return ProjectionResult(Branch.TWO_ROOTS,
                            t_plus=_root_below(d, target, t_ab),
                            t_minus=_root_above(d, target, t_ab))
