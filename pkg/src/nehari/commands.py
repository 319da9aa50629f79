"""Command dispatch: turn a :class:`RunConfig` into a :class:`Report`."""

from __future__ import annotations

import time

import numpy as np

from . import __version__
from .checks import run_checks
from .config import RunConfig
from .discretize import Discretization, build_discretization, make_direction
from .errors import NehariError, PreconditionError
from .extremal import ExtremalEstimate, estimate_lambda_star
from .fibering import (Cone, FiberingData, classify_cone, eval_fibering, lambda_of_direction,
                       maximizer_of_phi, project)
from .report import Report, Table, profile_table, solution_filename
from .solver import (NehariBranch, NehariSolution, continuation_at_extremal,
                     default_restricted_params, minimize_branch, solve_beyond_adaptive,
                     solve_pair, verify_solution)


class CommandError(NehariError):
    """A command failed; the message names the command."""


def run_command(cfg: RunConfig) -> Report:
    handler = _HANDLERS[cfg.command]
    start = time.perf_counter()
    try:
        report = handler(cfg)
    except NehariError as exc:
        raise CommandError(f"{cfg.command}: {exc}") from exc
    report.metadata = {
        "version": __version__,
        "command": cfg.command,
        "seed": cfg.seed,
        "n_starts": cfg.n_starts,
        "config": cfg.raw,
        "discretization": {"n": cfg.spec.domain.n,
                           "h": cfg.spec.domain.length / (cfg.spec.domain.n + 1)},
        "wall_time_s": time.perf_counter() - start,
    }
    return report


# ----------------------------------------------------------------------------


def _fibering(cfg: RunConfig) -> Report:
    spec, opt = cfg.spec, cfg.fibering
    if opt.u is not None:
        disc = build_discretization(spec)
        dw = make_direction(disc, spec, opt.u.evaluate(disc.nodes, disc.nodes))
        P2, F, G = dw.P2, dw.F, dw.G
    else:
        P2, F, G = opt.P2, opt.F, opt.G
    d = FiberingData(spec.a, spec.b, spec.theta, spec.gamma, spec.p, P2, F, G)
    lam = opt.lam if opt.lam is not None else spec.lam
    proj = project(d, lam)
    t_ab = maximizer_of_phi(d) if d.G > 0 else None
    t_max = opt.t_max
    if t_max is None:
        anchor = max(x for x in (proj.t_minus, proj.t_plus, proj.t_zero, t_ab, 1.0)
                     if x is not None)
        t_max = 1.5 * anchor
    ts = np.linspace(opt.t_min, t_max, opt.n_points)
    rows = []
    for t in ts:
        v = eval_fibering(d, lam, float(t))
        rows.append((float(t), v.psi, v.psi1, v.psi2, v.phi))
    rep = Report()
    rep.results = {
        "data": {"P2": P2, "F": F, "G": G},
        "lambda": lam,
        "cone": classify_cone(G).value,
        "t_ab": t_ab,
        "lambda_of_u": lambda_of_direction(d) if d.G > 0 else None,
        "projection": {"branch": proj.branch.value, "t_plus": proj.t_plus,
                       "t_minus": proj.t_minus, "t_zero": proj.t_zero},
    }
    rep.tables["fibering.csv"] = Table(("t", "psi", "psi1", "psi2", "phi"), rows)
    return rep


def _lambda_of_u(cfg: RunConfig) -> Report:
    spec = cfg.spec
    disc = build_discretization(spec)
    u = cfg.lambda_of_u.evaluate(disc.nodes, disc.nodes)
    dw = make_direction(disc, spec, u)
    if not dw.P2 > 0:
        raise PreconditionError("the profile vanishes on every interior node")
    d = FiberingData.from_direction(spec, dw)
    cone = classify_cone(dw.G, dw.cone_tol)
    rep = Report()
    rep.results = {
        "P2": dw.P2, "F": dw.F, "G": dw.G, "cone": cone.value,
        "t_ab": maximizer_of_phi(d) if cone is Cone.PLUS else None,
        "lambda_of_u": lambda_of_direction(d) if cone is Cone.PLUS else None,
    }
    return rep


def _estimate(cfg: RunConfig, disc: Discretization) -> ExtremalEstimate:
    return estimate_lambda_star(disc, cfg.spec, n_starts=cfg.n_starts, seed=cfg.seed,
                                max_iter=cfg.extremal_max_iter, gtol=cfg.extremal_gtol)


def _extremal_summary(est: ExtremalEstimate) -> dict:
    return {
        "lambda_star": est.lambda_star,
        "converged": est.converged,
        "gradient_norm": est.gradient_norm,
        "starts_used": est.starts_used,
        "iterations": est.history[-1][0] if est.history else 0,
        "terminal_values": est.terminal_values,
        "near_ties": est.near_ties,
    }


def _extremal(cfg: RunConfig) -> Report:
    disc = build_discretization(cfg.spec)
    est = _estimate(cfg, disc)
    rep = Report()
    rep.results = _extremal_summary(est)
    rep.tables["extremal_minimizer.csv"] = profile_table(disc, est.minimizer.coeffs)
    return rep


def _solution_entry(disc, spec, sol: NehariSolution) -> dict:
    entry = sol.summary()
    entry["verification"] = verify_solution(disc, spec, sol).to_dict()
    entry["profile"] = solution_filename(sol)
    return entry


def _add_solutions(rep: Report, disc, spec, sols) -> list[dict]:
    out = []
    for sol in sols:
        entry = _solution_entry(disc, spec.with_lambda(sol.lam), sol)
        rep.ok = rep.ok and all(c["pass"] for c in entry["verification"].values())
        out.append(entry)
        rep.tables[solution_filename(sol)] = profile_table(disc, sol.u.coeffs)
    return out


class _Beyond:
    """Lazily computed extremal continuation shared by all beyond-extremal solves."""

    def __init__(self, cfg: RunConfig, disc: Discretization, lambda_star: float):
        self.cfg, self.disc, self.lambda_star = cfg, disc, lambda_star
        self._cont = None

    @property
    def continuation(self):
        if self._cont is None:
            self._cont = continuation_at_extremal(self.disc, self.cfg.spec, self.lambda_star,
                                                  n_steps=self.cfg.beyond.n_steps)
        return self._cont

    def solve(self, lam: float):
        cont = self.continuation
        base = (cont.minus, cont.plus)
        opt = self.cfg.beyond
        params = default_restricted_params(base, self.lambda_star, epsilon=opt.epsilon,
                                           delta_margin=opt.delta_margin)
        return solve_beyond_adaptive(self.disc, self.cfg.spec.with_lambda(lam), base,
                                     self.lambda_star, params)

    def summary(self) -> dict:
        c = self._cont
        if c is None:
            return {}
        return {"lambdas_tail": c.lambdas[-3:], "cauchy_gap_minus": c.cauchy_gap_minus,
                "cauchy_gap_plus": c.cauchy_gap_plus, "lambda_gap": c.lambda_gap,
                "psi2_separation": c.psi2_separation, "tangency_warning": c.tangency_warning}


def _solve(cfg: RunConfig) -> Report:
    disc = build_discretization(cfg.spec)
    est = _estimate(cfg, disc)
    ls = est.lambda_star
    if cfg.solve_lambda is not None:
        lam = cfg.solve_lambda
    elif cfg.solve_fraction is not None:
        lam = cfg.solve_fraction * ls
    else:
        lam = cfg.spec.lam
    if not lam > 0:
        raise PreconditionError("solve needs lambda > 0 ('solve.lambda', "
                                "'solve.lambda_fraction' or top-level 'lambda')")
    rep = Report()
    rep.results = {"extremal": _extremal_summary(est), "lambda": lam}
    spec = cfg.spec.with_lambda(lam)
    if lam < ls:
        minus, plus = solve_pair(disc, spec, n_starts=cfg.n_starts, seed=cfg.seed,
                                 lambda_star=ls, warm=[est.minimizer.coeffs])
    else:
        beyond = _Beyond(cfg, disc, ls)
        res = beyond.solve(lam)
        minus, plus = res.minus, res.plus
        rep.results["continuation"] = beyond.summary()
        rep.results["restricted_set"] = res.params.to_dict()
        rep.results["margins"] = {"minus": res.margin_minus, "plus": res.margin_plus}
    rep.results["solutions"] = _add_solutions(rep, disc, cfg.spec, [minus, plus])
    rep.results["separation_l2"] = disc.l2_norm(minus.u.coeffs - plus.u.coeffs)
    return rep


def _sweep(cfg: RunConfig) -> Report:
    disc = build_discretization(cfg.spec)
    est = _estimate(cfg, disc)
    ls = est.lambda_star
    fractions = cfg.sweep.fractions_of_star()
    lams = sorted(cfg.sweep.lambda_values if fractions is None else [f * ls for f in fractions])
    rep = Report()
    rows, sols = [], []
    beyond = _Beyond(cfg, disc, ls)
    warm = None
    for lam in lams:
        spec = cfg.spec.with_lambda(lam)
        if lam < ls:
            if warm is None:
                minus, plus = solve_pair(disc, spec, n_starts=cfg.n_starts, seed=cfg.seed,
                                         lambda_star=ls, warm=[est.minimizer.coeffs])
            else:
                minus = minimize_branch(disc, spec, NehariBranch.MINUS, warm[0])
                plus = minimize_branch(disc, spec, NehariBranch.PLUS, warm[1])
            warm = (minus.direction, plus.direction)
        else:
            res = beyond.solve(lam)
            minus, plus = res.minus, res.plus
        for sol in (minus, plus):
            rows.append((lam, sol.branch.value, sol.energy, sol.residual_norm, sol.t_scale))
            sols.append(sol)
    rep.results = {
        "extremal": _extremal_summary(est),
        "lambdas": lams,
        "solutions": _add_solutions(rep, disc, cfg.spec, sols),
        "monotone_minus": _strictly_decreasing([s.energy for s in sols
                                                if s.branch is NehariBranch.MINUS]),
        "monotone_plus": _strictly_decreasing([s.energy for s in sols
                                               if s.branch is NehariBranch.PLUS]),
    }
    if beyond.summary():
        rep.results["continuation"] = beyond.summary()
    rep.tables["sweep.csv"] = Table(("lambda", "branch", "energy", "residual", "t_scale"), rows)
    return rep


def _strictly_decreasing(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def _check(cfg: RunConfig) -> Report:
    results, headline = run_checks(cfg.spec, seed=cfg.seed, n_starts=cfg.n_starts,
                                   probes=cfg.check_probes)
    passed = sum(r.passed for r in results)
    rep = Report()
    rep.results = {"passed": passed, "failed": len(results) - passed,
                   "checks": [r.to_dict() for r in results], **headline}
    rep.ok = passed == len(results)
    return rep


_HANDLERS = {
    "fibering": _fibering,
    "lambda-of-u": _lambda_of_u,
    "extremal": _extremal,
    "solve": _solve,
    "sweep": _sweep,
    "check": _check,
}

