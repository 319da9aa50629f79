"""Piecewise-linear discretization of the Gagliardo form and of the energy.

Functions are continuous, piecewise linear on a uniform grid of ``n``
interior nodes and vanish outside the interval.  Because the Gagliardo
double integral runs over the whole line and the hat functions are
translates of one reference hat, the stiffness matrix is Toeplitz:

    A_ij = h^(1-2s) c(|i-j|),
    c(k) = 2 int_0^inf z^(-1-2s) [2 L(k) - L(k+z) - L(k-z)] dz,

with ``L`` the autocorrelation of the reference hat (the centred cubic
B-spline).  Exterior contributions are part of the whole-line integral and
need no separate treatment.  On ``z in [0, 1]`` the bracket is an explicit
cubic vanishing to second order, integrated in closed form; on later unit
intervals it is a smooth cubic and Gauss-Legendre is exact to rounding;
past the support the bracket is constant and the tail is analytic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, toeplitz

from .errors import PreconditionError
from .problem import ProblemSpec, check_weights

# 3-point Gauss-Legendre on the reference cell [0, 1]
_GL3_POINTS = 0.5 * (1.0 + np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)]))
_GL3_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0

# rule for the smooth unit pieces of the stiffness integrals
_STIFF_GL_ORDER = 16

# Taylor data of the bracket on z in [0, 1]: (z^2, z^3) coefficients, k = 0, 1, 2
_NEAR_COEFFS = {0: (2.0, -1.0), 1: (-1.0, 2.0 / 3.0), 2: (0.0, -1.0 / 6.0)}


def hat_autocorrelation(t):
    """Autocorrelation ``int phi(y) phi(y - t) dy`` of the unit hat."""
    t = np.abs(np.asarray(t, dtype=float))
    inner = 2.0 / 3.0 - t * t + 0.5 * t ** 3
    outer = (2.0 - t) ** 3 / 6.0
    return np.where(t <= 1.0, inner, np.where(t <= 2.0, outer, 0.0))


def reference_stiffness(n: int, s: float) -> np.ndarray:
    """Entries ``c(0), ..., c(n-1)`` of the unit-spacing Toeplitz stiffness."""
    xg, wg = np.polynomial.legendre.leggauss(_STIFF_GL_ORDER)
    xg = 0.5 * (xg + 1.0)
    wg = 0.5 * wg
    out = np.empty(n)
    for k in range(n):
        c2, c3 = _NEAR_COEFFS.get(k, (0.0, 0.0))
        total = c2 / (2.0 - 2.0 * s) + c3 / (3.0 - 2.0 * s)
        # smooth pieces [m, m+1], m = 1 .. k+1
        z = (np.arange(1, k + 2)[:, None] + xg[None, :]).ravel()
        lk = hat_autocorrelation(k)
        bracket = 2.0 * lk - hat_autocorrelation(k + z) - hat_autocorrelation(k - z)
        total += np.sum(np.tile(wg, k + 1) * z ** (-1.0 - 2.0 * s) * bracket)
        total += 2.0 * lk * (k + 2.0) ** (-2.0 * s) / (2.0 * s)
        out[k] = 2.0 * total
    return out


@dataclass(frozen=True, eq=False)
class Discretization:
    """Grid, stiffness matrix and quadrature data for one problem.

    ``quad_weights`` are lumped nodal weights for ``int_Omega . dx``: ``h`` per
    interior node, with the two boundary half cells added to the end nodes.
    They are used for discrete L2 norms only; the energy integrals use the
    cellwise Gauss rule stored in ``xq``/``wq``.
    """

    nodes: np.ndarray
    h: float
    A: np.ndarray
    quad_weights: np.ndarray
    f_nodes: np.ndarray
    g_nodes: np.ndarray
    xq: np.ndarray  # (n+1, 3) Gauss points per cell
    wq: np.ndarray  # (3,) Gauss weights scaled by h
    f_q: np.ndarray  # f at Gauss points
    g_q: np.ndarray  # g at Gauss points
    s: float
    _chol: tuple

    @property
    def n(self) -> int:
        return self.nodes.size

    def solve_A(self, rhs: np.ndarray) -> np.ndarray:
        """Apply ``A^{-1}`` (Riesz map of the discrete X inner product)."""
        return cho_solve(self._chol, rhs)

    def extended(self, u: np.ndarray) -> np.ndarray:
        """Nodal values including the two zero boundary nodes."""
        out = np.zeros(self.n + 2)
        out[1:-1] = u
        return out

    def at_gauss_points(self, u: np.ndarray) -> np.ndarray:
        U = self.extended(u)
        return U[:-1, None] * (1.0 - _GL3_POINTS) + U[1:, None] * _GL3_POINTS

    def l2_norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(np.sum(self.quad_weights * np.asarray(u) ** 2)))


def build_discretization(spec: ProblemSpec) -> Discretization:
    """Assemble the discretization of ``spec`` and check the weight assumptions."""
    dom = spec.domain
    n = int(dom.n)
    h = dom.length / (n + 1)
    nodes = dom.xmin + h * np.arange(1, n + 1)
    A = h ** (1.0 - 2.0 * spec.s) * toeplitz(reference_stiffness(n, spec.s))
    quad_weights = np.full(n, h)
    quad_weights[[0, -1]] += 0.5 * h
    edges = dom.xmin + h * np.arange(n + 2)
    xq = edges[:-1, None] + h * _GL3_POINTS[None, :]
    f_nodes = spec.f_weight.evaluate(nodes, nodes)
    g_nodes = spec.g_weight.evaluate(nodes, nodes)
    f_q = spec.f_weight.evaluate(xq, nodes)
    g_q = spec.g_weight.evaluate(xq, nodes)
    check_weights(spec, np.concatenate([f_nodes, f_q.ravel()]), g_nodes)
    chol = cho_factor(A, lower=True)
    for arr in (nodes, A, quad_weights, f_nodes, g_nodes, xq, f_q, g_q):
        arr.setflags(write=False)
    return Discretization(nodes=nodes, h=h, A=A, quad_weights=quad_weights,
                          f_nodes=f_nodes, g_nodes=g_nodes, xq=xq,
                          wq=h * _GL3_WEIGHTS, f_q=f_q, g_q=g_q, s=spec.s, _chol=chol)


def _coeffs(disc: Discretization, u) -> np.ndarray:
    arr = np.asarray(getattr(u, "coeffs", u), dtype=float)
    if arr.shape != (disc.n,):
        raise PreconditionError(f"expected {disc.n} nodal values, got shape {arr.shape}")
    return arr


def _signed_power(v: np.ndarray, q: float, positive_part: bool) -> tuple[np.ndarray, np.ndarray]:
    """Return ``|v|^q`` and ``|v|^(q-2) v`` (``v^+`` variants if requested)."""
    if positive_part:
        v = np.maximum(v, 0.0)
    mag = np.abs(v)
    power = mag ** q
    with np.errstate(divide="ignore", invalid="ignore"):
        deriv = np.where(mag > 0, np.sign(v) * mag ** (q - 1.0), 0.0)
    return power, deriv


def _scatter(disc: Discretization, cell_vals: np.ndarray) -> np.ndarray:
    """Test cellwise Gauss-point values against every interior hat function."""
    left = cell_vals @ (1.0 - _GL3_POINTS)
    right = cell_vals @ _GL3_POINTS
    out = left[1:] + right[:-1]
    return out


def seminorm_sq(disc: Discretization, u) -> float:
    """Squared Gagliardo seminorm ``u^T A u``."""
    c = _coeffs(disc, u)
    return float(c @ (disc.A @ c))


def bilinear(disc: Discretization, u, v) -> float:
    """Gagliardo inner product of two discrete functions."""
    return float(_coeffs(disc, u) @ (disc.A @ _coeffs(disc, v)))


def weighted_power_integral(disc: Discretization, w, u, q: float,
                            positive_part: bool = False) -> float:
    """``int_Omega w |u|^q dx`` by 3-point Gauss-Legendre on every cell.

    ``w`` is either an array of values at the Gauss points (shape
    ``disc.xq.shape``), an array of nodal samples (interpolated linearly), or
    a scalar.
    """
    if q <= 1:
        raise PreconditionError(f"power q must exceed 1, got {q}")
    c = _coeffs(disc, u)
    wv = _weight_at_gauss(disc, w)
    power, _ = _signed_power(disc.at_gauss_points(c), q, positive_part)
    return float(np.sum((wv * power) @ disc.wq))


def weighted_power_gradient(disc: Discretization, w, u, q: float,
                            positive_part: bool = False) -> np.ndarray:
    """Gradient of :func:`weighted_power_integral` with respect to the nodal values."""
    c = _coeffs(disc, u)
    wv = _weight_at_gauss(disc, w)
    _, deriv = _signed_power(disc.at_gauss_points(c), q, positive_part)
    return q * _scatter(disc, wv * deriv * disc.wq)


def weighted_power_hessian(disc: Discretization, w, u, q: float,
                           positive_part: bool = False) -> np.ndarray:
    """Tridiagonal Hessian of :func:`weighted_power_integral` as a dense matrix."""
    c = _coeffs(disc, u)
    wv = _weight_at_gauss(disc, w)
    vals = disc.at_gauss_points(c)
    if positive_part:
        vals = np.maximum(vals, 0.0)
    mag = np.abs(vals)
    with np.errstate(divide="ignore"):
        second = np.where(mag > 0, mag ** (q - 2.0), 0.0)
    kv = q * (q - 1.0) * wv * second * disc.wq
    phi0, phi1 = 1.0 - _GL3_POINTS, _GL3_POINTS
    d00 = kv @ (phi0 * phi0)
    d11 = kv @ (phi1 * phi1)
    d01 = kv @ (phi0 * phi1)
    n = disc.n
    H = np.zeros((n, n))
    idx = np.arange(n)
    H[idx, idx] = d11[:-1] + d00[1:]
    H[idx[:-1], idx[1:]] = d01[1:-1]
    H[idx[1:], idx[:-1]] = d01[1:-1]
    return H


def _weight_at_gauss(disc: Discretization, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim == 0:
        return np.full(disc.xq.shape, float(w))
    if w.shape == disc.xq.shape:
        return w
    if w.shape == (disc.n,):
        return np.interp(disc.xq, disc.nodes, w)
    raise PreconditionError(f"weight array has unsupported shape {w.shape}")


@dataclass(frozen=True)
class Direction:
    """Nodal coefficients with the three integrals the fibering calculus needs.

    ``P2 = ||u||_X^2``, ``F = int f |u|^gamma``, ``G = int g |u|^p``; ``G_abs``
    is ``int |g| |u|^p`` and sets the scale of the cone threshold.
    """

    coeffs: np.ndarray
    P2: float
    F: float
    G: float
    G_abs: float

    @property
    def cone_tol(self) -> float:
        return 1e-12 * self.G_abs


def make_direction(disc: Discretization, spec: ProblemSpec, coeffs,
                   positive_part: bool = False) -> Direction:
    c = np.array(_coeffs(disc, coeffs), dtype=float)
    c.setflags(write=False)
    return Direction(
        coeffs=c,
        P2=seminorm_sq(disc, c),
        F=weighted_power_integral(disc, disc.f_q, c, spec.gamma, positive_part),
        G=weighted_power_integral(disc, disc.g_q, c, spec.p, positive_part),
        G_abs=weighted_power_integral(disc, np.abs(disc.g_q), c, spec.p, positive_part),
    )


def kirchhoff_factor(spec: ProblemSpec, P2: float) -> float:
    """``M(P2) = a + b P2^(theta-1)``."""
    return spec.a + spec.b * P2 ** (spec.theta - 1.0)


def energy(disc: Discretization, spec: ProblemSpec, u, positive_part: bool = False) -> float:
    c = _coeffs(disc, u)
    P2 = seminorm_sq(disc, c)
    F = weighted_power_integral(disc, disc.f_q, c, spec.gamma, positive_part)
    G = weighted_power_integral(disc, disc.g_q, c, spec.p, positive_part)
    return (0.5 * spec.a * P2 + spec.b / (2.0 * spec.theta) * P2 ** spec.theta
            - spec.lam / spec.gamma * F - G / spec.p)


def energy_and_gradient(disc: Discretization, spec: ProblemSpec, u,
                        positive_part: bool = False) -> tuple[float, np.ndarray]:
    """Energy and its gradient with respect to the nodal values.

    ``grad @ v`` is the directional derivative of the energy along ``v``.
    Where ``u`` vanishes the concave term contributes zero to the gradient.
    """
    c = _coeffs(disc, u)
    Au = disc.A @ c
    P2 = float(c @ Au)
    F = weighted_power_integral(disc, disc.f_q, c, spec.gamma, positive_part)
    G = weighted_power_integral(disc, disc.g_q, c, spec.p, positive_part)
    E = (0.5 * spec.a * P2 + spec.b / (2.0 * spec.theta) * P2 ** spec.theta
         - spec.lam / spec.gamma * F - G / spec.p)
    grad = (kirchhoff_factor(spec, P2) * Au
            - spec.lam / spec.gamma * weighted_power_gradient(disc, disc.f_q, c, spec.gamma, positive_part)
            - weighted_power_gradient(disc, disc.g_q, c, spec.p, positive_part) / spec.p)
    return E, grad


def energy_hessian(disc: Discretization, spec: ProblemSpec, u,
                   positive_part: bool = False) -> np.ndarray:
    c = _coeffs(disc, u)
    Au = disc.A @ c
    P2 = float(c @ Au)
    H = kirchhoff_factor(spec, P2) * disc.A
    if spec.theta != 1.0 and P2 > 0:
        H = H + 2.0 * spec.b * (spec.theta - 1.0) * P2 ** (spec.theta - 2.0) * np.outer(Au, Au)
    H = H - spec.lam / spec.gamma * weighted_power_hessian(disc, disc.f_q, c, spec.gamma, positive_part)
    H = H - weighted_power_hessian(disc, disc.g_q, c, spec.p, positive_part) / spec.p
    return H


def weak_residual(disc: Discretization, spec: ProblemSpec, u,
                  positive_part: bool = False) -> tuple[np.ndarray, float]:
    """Weak form tested against every hat function, and its scaled norm.

    ``r_i = M(P2) (A u)_i - lam int f |u|^(gamma-2) u phi_i - int g |u|^(p-2) u phi_i``;
    the norm is ``|r|_2 / sqrt(n)``.
    """
    _, r = energy_and_gradient(disc, spec, u, positive_part)
    return r, float(np.linalg.norm(r) / np.sqrt(r.size))
