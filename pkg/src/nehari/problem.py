"""Problem parameters and weight descriptors.

The model problem is the fractional Kirchhoff equation on an interval
``Omega = (xmin, xmax)`` with zero exterior condition,

    M(||u||_X^2) (-Delta)^s u = lam f |u|^(gamma-2) u + g |u|^(p-2) u,
    M(t) = a + b t^(theta-1),

where ``||u||_X^2`` is the Gagliardo double integral over the whole line.
Only the one-dimensional case is supported, so ``s`` must lie in (0, 1/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import AssumptionError, ConfigurationError

PRESETS = ("constant", "quadratic", "bump")

# one-dimensional domains only
DIMENSION = 1


def critical_exponent(s: float) -> float:
    """Fractional Sobolev exponent 2N/(N - 2s) for N = 1."""
    return 2.0 * DIMENSION / (DIMENSION - 2.0 * s)


@dataclass(frozen=True)
class WeightDescriptor:
    """A weight function, either a named preset or literal nodal samples.

    Presets (``x`` is the spatial coordinate):

    * ``constant``  ``[c]``                      -> ``c``
    * ``quadratic`` ``[c0, c1, c2]``             -> ``c0 + c1 x + c2 x^2``
    * ``bump``      ``[c0, amp, center, width]`` -> ``c0 + amp exp(-((x - center)/width)^2)``

    Sample weights are given at the interior nodes and interpolated linearly
    in between (constant continuation into the two boundary cells).
    """

    preset: str | None = None
    coeffs: tuple[float, ...] = ()
    samples: tuple[float, ...] | None = None

    def __post_init__(self):
        if (self.preset is None) == (self.samples is None):
            raise ConfigurationError("weight needs exactly one of 'preset' or 'samples'")
        if self.preset is not None:
            if self.preset not in PRESETS:
                raise ConfigurationError(
                    f"unknown weight preset {self.preset!r}; expected one of {PRESETS}")
            expected = {"constant": 1, "quadratic": 3, "bump": 4}[self.preset]
            if len(self.coeffs) != expected:
                raise ConfigurationError(
                    f"preset {self.preset!r} takes {expected} coefficients, got {len(self.coeffs)}")
            if self.preset == "bump" and self.coeffs[3] <= 0:
                raise ConfigurationError("bump width must be positive")
            object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        else:
            object.__setattr__(self, "samples", tuple(float(v) for v in self.samples))

    @classmethod
    def constant(cls, c: float) -> "WeightDescriptor":
        return cls(preset="constant", coeffs=(c,))

    @classmethod
    def quadratic(cls, c0: float, c1: float, c2: float) -> "WeightDescriptor":
        return cls(preset="quadratic", coeffs=(c0, c1, c2))

    @classmethod
    def from_samples(cls, values: Sequence[float]) -> "WeightDescriptor":
        return cls(samples=tuple(values))

    def evaluate(self, x: np.ndarray, nodes: np.ndarray | None = None) -> np.ndarray:
        """Evaluate at arbitrary points ``x``.

        ``nodes`` (the interior node coordinates) is required for sample weights.
        """
        x = np.asarray(x, dtype=float)
        if self.preset == "constant":
            return np.full_like(x, self.coeffs[0])
        if self.preset == "quadratic":
            c0, c1, c2 = self.coeffs
            return c0 + c1 * x + c2 * x * x
        if self.preset == "bump":
            c0, amp, center, width = self.coeffs
            return c0 + amp * np.exp(-(((x - center) / width) ** 2))
        if nodes is None:
            raise ConfigurationError("sample weights need the node grid to be evaluated")
        values = np.asarray(self.samples)
        if values.shape != np.shape(nodes):
            raise ConfigurationError(
                f"weight has {values.size} samples but the grid has {np.size(nodes)} interior nodes")
        return np.interp(x, nodes, values)

    def to_dict(self) -> dict:
        if self.preset is not None:
            return {"preset": self.preset, "coeffs": list(self.coeffs)}
        return {"samples": list(self.samples)}


@dataclass(frozen=True)
class Domain:
    xmin: float = -1.0
    xmax: float = 1.0
    n: int = 64

    @property
    def length(self) -> float:
        return self.xmax - self.xmin


@dataclass(frozen=True)
class ProblemSpec:
    """Scalar parameters, domain and weights of one problem instance.

    ``lam`` is the bifurcation parameter (``lambda`` is reserved in Python).
    """

    a: float
    b: float
    theta: float
    gamma: float
    p: float
    s: float
    lam: float = 0.0
    domain: Domain = field(default_factory=Domain)
    f_weight: WeightDescriptor = field(default_factory=lambda: WeightDescriptor.constant(1.0))
    g_weight: WeightDescriptor = field(
        default_factory=lambda: WeightDescriptor.quadratic(1.0, 0.0, -2.0))

    def __post_init__(self):
        check_parameters(self)

    @property
    def degenerate(self) -> bool:
        return self.a == 0

    @property
    def critical_exponent(self) -> float:
        return critical_exponent(self.s)

    def with_lambda(self, lam: float) -> "ProblemSpec":
        return replace(self, lam=float(lam))

    def to_dict(self) -> dict:
        return {
            "a": self.a, "b": self.b, "theta": self.theta, "gamma": self.gamma,
            "p": self.p, "s": self.s, "lambda": self.lam,
            "domain": {"xmin": self.domain.xmin, "xmax": self.domain.xmax, "n": self.domain.n},
            "f": self.f_weight.to_dict(), "g": self.g_weight.to_dict(),
        }


def check_parameters(spec: ProblemSpec) -> None:
    """Raise ConfigurationError naming the first violated inequality."""
    a, b, theta, gamma, p, s = spec.a, spec.b, spec.theta, spec.gamma, spec.p, spec.s
    for name, value in (("a", a), ("b", b), ("theta", theta), ("gamma", gamma),
                        ("p", p), ("s", s), ("lambda", spec.lam)):
        if not math.isfinite(value):
            raise ConfigurationError(f"{name} must be finite, got {value}")
    if not 0 < s < 0.5:
        raise ConfigurationError(
            f"requires 0 < s < 1/2 so that N > 2s holds with N = 1 (got s = {s})")
    if a < 0:
        raise ConfigurationError(f"requires a >= 0 (got a = {a})")
    if b <= 0:
        raise ConfigurationError(f"requires b > 0 (got b = {b})")
    if theta <= 1:
        raise ConfigurationError(f"requires theta > 1 (got theta = {theta})")
    if spec.lam < 0:
        raise ConfigurationError(f"requires lambda >= 0 (got lambda = {spec.lam})")
    crit = critical_exponent(s)
    if a > 0:
        if not 1 < gamma < 2:
            raise ConfigurationError(
                f"requires 1 < gamma < 2 when a > 0 (non-degenerate Kirchhoff regime), "
                f"got gamma = {gamma}")
    else:
        if not 2 < gamma < 2 * theta:
            raise ConfigurationError(
                f"requires 2 < gamma < 2*theta when a = 0 (degenerate Kirchhoff regime), "
                f"got gamma = {gamma}, 2*theta = {2 * theta}")
    if not 2 * theta < p:
        raise ConfigurationError(f"requires 2*theta < p (got 2*theta = {2 * theta}, p = {p})")
    if not p < crit:
        raise ConfigurationError(
            f"requires p below the critical exponent 2/(1 - 2s) = {crit:g} (got p = {p})")
    d = spec.domain
    if not d.xmin < d.xmax:
        raise ConfigurationError(f"requires xmin < xmax (got {d.xmin}, {d.xmax})")
    if int(d.n) != d.n or d.n < 3:
        raise ConfigurationError(f"requires at least 3 interior nodes (got n = {d.n})")


def check_weights(spec: ProblemSpec, f_values: np.ndarray, g_values: np.ndarray) -> None:
    """Check the sign assumptions on the sampled weights.

    ``f`` must be strictly positive everywhere it is sampled and ``g`` must be
    positive somewhere.  The stricter requirement ``g < 0`` near the boundary,
    needed for the non-degenerate solve path, is :func:`check_boundary_sign`.
    """
    if np.any(~np.isfinite(f_values)) or np.any(~np.isfinite(g_values)):
        raise AssumptionError("weights must be finite")
    if np.any(f_values <= 0):
        bad = int(np.argmin(f_values))
        raise AssumptionError(
            f"weight f must be strictly positive, "
            f"found f = {f_values[bad]:g} at sample {bad}")
    if not np.any(g_values > 0):
        raise AssumptionError(
            "weight g must be positive somewhere: g^+ = max(g, 0) vanishes on the whole grid")


def check_boundary_sign(g_nodes: np.ndarray) -> None:
    """Require ``g < 0`` at the two nodes next to each end of the interval."""
    edge = np.concatenate([g_nodes[:2], g_nodes[-2:]])
    if np.any(edge >= 0):
        raise AssumptionError(
            "the non-degenerate problem (a > 0) needs g < 0 near the boundary; "
            f"g at the two nodes next to each end is {edge.tolist()}")
