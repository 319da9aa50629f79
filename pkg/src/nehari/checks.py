"""Invariant and property suite behind the ``check`` command.

Every check is a small deterministic experiment on the configured problem
that returns a :class:`CheckResult`.  Randomness comes from the counter-based
streams keyed by the run seed, so two runs with the same seed produce
identical numbers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import rng
from .discretize import (Discretization, build_discretization, energy, energy_and_gradient,
                         make_direction, seminorm_sq, weak_residual)
from .extremal import (estimate_lambda_star, lambda_and_gradient, random_start,
                       tangent_gradient)
from .fibering import (Branch, FiberingData, degenerate_lambda, degenerate_maximizer,
                       eliminated_lambda, eval_fibering, lambda_of_direction,
                       maximizer_numeric, maximizer_of_phi, phi, project)
from .problem import ProblemSpec
from .solver import solve_pair, verify_solution


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float

    def to_dict(self) -> dict:
        return {"name": self.name, "pass": self.passed, "value": self.value,
                "tolerance": self.tolerance}


def _le(name: str, value: float, tol: float) -> CheckResult:
    value = float(value)
    return CheckResult(name, bool(value <= tol), value, tol)


def _random_fibering(gen: np.random.Generator, degenerate: bool, positive_G: bool | None = None
                     ) -> FiberingData:
    """Random reduced data in one of the two exponent regimes."""
    theta = gen.uniform(1.2, 2.5)
    if degenerate:
        a, gamma = 0.0, gen.uniform(2.05, 2 * theta - 0.05)
    else:
        a, gamma = gen.uniform(0.1, 3.0), gen.uniform(1.05, 1.95)
    p = gen.uniform(2 * theta + 0.1, 2 * theta + 4.0)
    G = 10 ** gen.uniform(-2, 2)
    if positive_G is None:
        positive_G = gen.random() < 0.8
    if not positive_G:
        G = -G
    return FiberingData(a, gen.uniform(0.2, 3.0), theta, gamma, p,
                        10 ** gen.uniform(-2, 2), 10 ** gen.uniform(-2, 2), G)


def _phi_minus_target(d: FiberingData, lam: float, t):
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        return (d.a * t ** (2 - d.gamma) * d.P2
                + d.b * t ** (2 * d.theta - d.gamma) * d.P2 ** d.theta
                - t ** (d.p - d.gamma) * d.G) - lam * d.F


def sign_change_count(d: FiberingData, lam: float, n_points: int = 100_000) -> int:
    """Sign changes of ``Phi - lam F`` on a log-spaced grid (brute-force oracle).

    The grid starts from ``[1e-6 t_ab, 1e3 t_ab]`` (``t_ab = 1`` on ``C-``) and is widened by factors of
    1e3 until both ends show the limiting signs (negative as ``t -> 0``;
    negative for ``G > 0`` and positive for ``G <= 0`` as ``t -> inf``), so
    roots outside the nominal range are not missed.
    """
    t_ref = maximizer_of_phi(d) if d.G > 0 else 1.0
    t_lo = 1e-6 * t_ref
    while _phi_minus_target(d, lam, t_lo) >= 0:
        t_lo *= 1e-3
    t_hi = 1e3 * t_ref
    if d.G > 0:
        while _phi_minus_target(d, lam, t_hi) >= 0:
            t_hi *= 1e3
    else:
        while _phi_minus_target(d, lam, t_hi) <= 0:
            t_hi *= 1e3
    t = np.logspace(np.log10(t_lo), np.log10(t_hi), n_points)
    s = np.sign(_phi_minus_target(d, lam, t))
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def check_projection_oracle(seed: int, n_cases: int, n_points: int = 100_000) -> list[CheckResult]:
    """Branch tags against sign-change counts, and second-derivative signs."""
    gen = rng.stream(seed, rng.CHECKS, 1)
    mismatches = sign_failures = 0
    for i in range(n_cases):
        d = _random_fibering(gen, degenerate=bool(i % 2))
        if d.G > 0:
            lam = lambda_of_direction(d) * gen.uniform(0.05, 1.5)
        else:
            lam = 10 ** gen.uniform(-2, 2)
        res = project(d, lam)
        expected = sign_change_count(d, lam, n_points)
        got = {Branch.TWO_ROOTS: 2, Branch.SINGLE_ROOT: 1, Branch.NO_ROOT: 0,
               Branch.TANGENT: expected}[res.branch]
        mismatches += got != expected
        if res.branch is Branch.TWO_ROOTS:
            ok = (eval_fibering(d, lam, res.t_plus).psi2 > 0
                  and eval_fibering(d, lam, res.t_minus).psi2 < 0)
            sign_failures += not ok
    return [_le("projection_branch_matches_sign_changes", mismatches, 0),
            _le("two_roots_second_derivative_signs", sign_failures, 0)]


def check_closed_forms(seed: int, n_cases: int) -> list[CheckResult]:
    gen = rng.stream(seed, rng.CHECKS, 2)
    worst_t = worst_l = worst_elim = 0.0
    for _ in range(n_cases):
        d = _random_fibering(gen, degenerate=True, positive_G=True)
        t_num = maximizer_numeric(d)
        t_cf = degenerate_maximizer(d)
        worst_t = max(worst_t, abs(t_num - t_cf) / t_cf)
        lam_num = phi(d, t_num) / d.F
        worst_l = max(worst_l, abs(lam_num - degenerate_lambda(d)) / lam_num)
        nd = _random_fibering(gen, degenerate=False, positive_G=True)
        t_ab = maximizer_of_phi(nd)
        lam = phi(nd, t_ab) / nd.F
        worst_elim = max(worst_elim, abs(eliminated_lambda(nd, t_ab) - lam) / lam)
    return [_le("degenerate_maximizer_closed_form", worst_t, 1e-10),
            _le("degenerate_lambda_closed_form", worst_l, 1e-10),
            _le("eliminated_lambda_formula", worst_elim, 1e-10)]


def check_discretization(disc: Discretization, seed: int) -> list[CheckResult]:
    gen = rng.stream(seed, rng.CHECKS, 3)
    A = disc.A
    asym = float(np.max(np.abs(A - A.T)))
    min_eig = float(np.linalg.eigvalsh(A)[0])
    u, v = gen.standard_normal(disc.n), gen.standard_normal(disc.n)
    lhs = seminorm_sq(disc, u + v) + seminorm_sq(disc, u - v)
    rhs = 2 * seminorm_sq(disc, u) + 2 * seminorm_sq(disc, v)
    length = disc.nodes[-1] - disc.nodes[0] + 2 * disc.h
    return [_le("stiffness_symmetric", asym, 0.0),
            CheckResult("stiffness_positive_definite", min_eig > 0, min_eig, 0.0),
            _le("parallelogram_law", abs(lhs - rhs) / rhs, 1e-12),
            _le("quadrature_weights_sum", abs(disc.quad_weights.sum() - length) / length, 1e-12)]


def _fd_rel_error(f: Callable, grad: np.ndarray, x: np.ndarray, v: np.ndarray) -> float:
    eps = 1e-6 * np.linalg.norm(x) / np.linalg.norm(v)
    fd = (f(x + eps * v) - f(x - eps * v)) / (2 * eps)
    return abs(grad @ v - fd) / max(1.0, abs(grad @ v))


def check_gradients(disc: Discretization, spec: ProblemSpec, seed: int, probes: int,
                    lam: float) -> list[CheckResult]:
    """Energy and envelope gradients against central differences."""
    gen = rng.stream(seed, rng.CHECKS, 4)
    sp = spec.with_lambda(lam)
    worst_e = worst_l = worst_euler = worst_res = worst_nehari = 0.0
    for _ in range(probes):
        u = random_start(disc, sp, gen) * gen.uniform(0.5, 20.0)
        v = gen.standard_normal(disc.n)
        _, g = energy_and_gradient(disc, sp, u)
        worst_e = max(worst_e, _fd_rel_error(lambda x: energy(disc, sp, x), g, u, v))
        val, lg, _ = lambda_and_gradient(disc, sp, u)
        fl = lambda x: lambda_and_gradient(disc, sp, x)[0]
        eps = 1e-6 * np.linalg.norm(u) / np.linalg.norm(v)
        fd = (fl(u + eps * v) - fl(u - eps * v)) / (2 * eps)
        worst_l = max(worst_l, abs(lg @ v - fd) / max(abs(fd), abs(lg @ v), 1e-300))
        worst_euler = max(worst_euler, abs(lg @ u) / val)
        r, _ = weak_residual(disc, sp, u)
        worst_res = max(worst_res, float(np.max(np.abs(r - g))))
        d = FiberingData.from_direction(sp, make_direction(disc, sp, u))
        psi1 = eval_fibering(d, lam, 1.0).psi1
        scale = sp.a * d.P2 + sp.b * d.P2 ** sp.theta + lam * d.F + abs(d.G)
        worst_nehari = max(worst_nehari, abs(u @ r - psi1) / scale)
    return [_le("energy_gradient_fd", worst_e, 1e-5),
            _le("lambda_gradient_fd", worst_l, 1e-5),
            _le("lambda_gradient_radial_zero", worst_euler, 1e-8),
            _le("residual_equals_gradient", worst_res, 0.0),
            _le("nehari_identity", worst_nehari, 1e-10)]


def check_extremal(disc: Discretization, spec: ProblemSpec, seed: int, n_starts: int,
                   probes: int):
    est = estimate_lambda_star(disc, spec, n_starts=n_starts, seed=seed)
    gen = rng.stream(seed, rng.CHECKS, 5)
    worst = -np.inf
    for _ in range(probes):
        v = random_start(disc, spec, gen)
        worst = max(worst, est.lambda_star - lambda_and_gradient(disc, spec, v)[0])
    w = est.minimizer
    val, g, _ = lambda_and_gradient(disc, spec, w)
    tg = tangent_gradient(disc, w.coeffs, g)
    gnorm = float(np.sqrt(tg @ disc.solve_A(tg))) / val
    hist = [v for _, v in est.history]
    rises = max((b - a for a, b in zip(hist, hist[1:])), default=0.0)
    results = [_le("extremal_upper_bound", worst, 0.0),
               _le("extremal_unit_sphere", abs(w.P2 - 1.0), 1e-10),
               _le("extremal_relative_projected_gradient", gnorm, 1e-6),
               _le("extremal_monotone_history", rises, 0.0)]
    return est, results


def check_pair(disc: Discretization, spec: ProblemSpec, lambda_star: float, seed: int,
               n_starts: int) -> list[CheckResult]:
    sp = spec.with_lambda(0.5 * lambda_star)
    minus, plus = solve_pair(disc, sp, n_starts=n_starts, seed=seed, lambda_star=lambda_star)
    rm, rp = verify_solution(disc, sp, minus), verify_solution(disc, sp, plus)
    sep = disc.l2_norm(minus.u.coeffs - plus.u.coeffs)
    return [CheckResult("pair_minus_verified", rm.passed, minus.residual_norm, 1e-8),
            CheckResult("pair_plus_verified", rp.passed, plus.residual_norm, 1e-8),
            CheckResult("pair_plus_energy_negative", plus.energy < 0, plus.energy, 0.0),
            CheckResult("pair_separation", sep > 1e-3, sep, 1e-3)]


def run_checks(spec: ProblemSpec, seed: int = 0, n_starts: int = 4, probes: int = 20,
               disc: Discretization | None = None) -> tuple[list[CheckResult], dict]:
    """Run the whole suite; returns the results and a few headline numbers."""
    disc = disc or build_discretization(spec)
    results: list[CheckResult] = []
    results += check_discretization(disc, seed)
    results += check_projection_oracle(seed, n_cases=10 * probes, n_points=20_000)
    results += check_closed_forms(seed, n_cases=5 * probes)
    est, ext_results = check_extremal(disc, spec, seed, n_starts, probes)
    results += ext_results
    results += check_gradients(disc, spec, seed, probes, lam=0.5 * est.lambda_star)
    results += check_pair(disc, spec, est.lambda_star, seed, n_starts)
    return results, {"lambda_star": est.lambda_star}
