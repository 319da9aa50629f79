"""Shared fixtures: the two default problems, solved lazily once per session.

Acceptance tests carry an ``acceptance(n, title)`` marker; their outcomes are
collected here and printed as one PASS/FAIL line per criterion at the end of
the run.
"""

from __future__ import annotations

from functools import cached_property

import pytest

from nehari.discretize import build_discretization
from nehari.extremal import estimate_lambda_star
from nehari.problem import Domain, ProblemSpec, WeightDescriptor
from nehari.solver import continuation_at_extremal, solve_pair

G_DEFAULT = WeightDescriptor.quadratic(1.0, 0.0, -2.0)


def degenerate_spec(n: int = 64) -> ProblemSpec:
    return ProblemSpec(a=0.0, b=1.0, theta=2.0, gamma=3.0, p=5.0, s=0.4,
                       domain=Domain(-1.0, 1.0, n), g_weight=G_DEFAULT)


def nondegenerate_spec(n: int = 64) -> ProblemSpec:
    return ProblemSpec(a=1.0, b=1.0, theta=2.0, gamma=1.5, p=5.0, s=0.4,
                       domain=Domain(-1.0, 1.0, n), g_weight=G_DEFAULT)


class ProblemCase:
    """One default problem with its expensive results computed on first use."""

    def __init__(self, name: str, spec: ProblemSpec):
        self.name = name
        self.spec = spec

    @cached_property
    def disc(self):
        return build_discretization(self.spec)

    @cached_property
    def estimate(self):
        return estimate_lambda_star(self.disc, self.spec, n_starts=8, seed=0)

    @property
    def lambda_star(self) -> float:
        return self.estimate.lambda_star

    @cached_property
    def pair(self):
        sp = self.spec.with_lambda(0.5 * self.lambda_star)
        return solve_pair(self.disc, sp, n_starts=4, seed=0, lambda_star=self.lambda_star,
                          warm=[self.estimate.minimizer.coeffs])

    @cached_property
    def continuation(self):
        return continuation_at_extremal(self.disc, self.spec, self.lambda_star, n_steps=50)


_CASES = {
    "degenerate": ProblemCase("degenerate", degenerate_spec()),
    "nondegenerate": ProblemCase("nondegenerate", nondegenerate_spec()),
}


@pytest.fixture(scope="session")
def cases() -> dict[str, ProblemCase]:
    return _CASES


@pytest.fixture(scope="session", params=sorted(_CASES))
def case(request) -> ProblemCase:
    return _CASES[request.param]


@pytest.fixture(scope="session")
def degenerate() -> ProblemCase:
    return _CASES["degenerate"]


@pytest.fixture(scope="session")
def nondegenerate() -> ProblemCase:
    return _CASES["nondegenerate"]


# ----------------------------------------------------------------------------
# acceptance reporting

_ACCEPTANCE: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    n, title = marker.args
    entry = _ACCEPTANCE.setdefault(n, {"title": title, "ok": True, "details": []})
    if report.failed:
        entry["ok"] = False
    if report.when == "call":
        entry["details"] += [v for k, v in report.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[n]
        line = f"criterion {n:2d} {'PASS' if e['ok'] else 'FAIL'}: {e['title']}"
        terminalreporter.write_line(line)
        for d in e["details"]:
            terminalreporter.write_line(f"      {d}")
