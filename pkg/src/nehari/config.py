"""Run configuration: a JSON document validated into :class:`RunConfig`.

Top level keys (all lowercase)::

    a, b, theta, gamma, p, s          required numbers
    lambda                            optional number (default 0)
    domain                            {"xmin", "xmax", "n"}
    f, g                              {"preset", "coeffs"} or {"samples"}
    command                           optional; must match the CLI command
    seed, n_starts                    optional integers
    fibering, lambda_of_u, extremal,  optional command sections
    solve, sweep, beyond, check

Unknown keys are rejected everywhere.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigParseError, ConfigurationError
from .problem import Domain, ProblemSpec, WeightDescriptor

COMMANDS = ("fibering", "lambda-of-u", "extremal", "solve", "sweep", "check")

_TOP_KEYS = {"a", "b", "theta", "gamma", "p", "s", "lambda", "domain", "f", "g",
             "command", "seed", "n_starts", "fibering", "lambda_of_u", "extremal",
             "solve", "sweep", "beyond", "check"}
_SECTION_KEYS = {
    "domain": {"xmin", "xmax", "n"},
    "fibering": {"P2", "F", "G", "u", "lambda", "t_min", "t_max", "n_points"},
    "lambda_of_u": {"u"},
    "extremal": {"max_iter", "gtol"},
    "solve": {"lambda", "lambda_fraction"},
    "sweep": {"lambda_values", "fractions", "count", "max_fraction"},
    "beyond": {"epsilon", "delta_margin", "n_steps"},
    "check": {"probes"},
}
_WEIGHT_KEYS = {"preset", "coeffs", "samples"}


@dataclass(frozen=True)
class FiberingOptions:
    P2: Optional[float] = None
    F: Optional[float] = None
    G: Optional[float] = None
    u: Optional[WeightDescriptor] = None
    lam: Optional[float] = None
    t_min: float = 1e-3
    t_max: Optional[float] = None
    n_points: int = 401


@dataclass(frozen=True)
class SweepOptions:
    lambda_values: Optional[tuple[float, ...]] = None
    fractions: Optional[tuple[float, ...]] = None
    count: Optional[int] = None
    max_fraction: float = 0.9

    def fractions_of_star(self) -> Optional[tuple[float, ...]]:
        """Fractions of the extremal estimate, or None if absolute values were given."""
        if self.lambda_values is not None:
            return None
        if self.fractions is not None:
            return self.fractions
        count = self.count or 9
        return tuple(self.max_fraction * k / count for k in range(1, count + 1))


@dataclass(frozen=True)
class BeyondOptions:
    epsilon: Optional[float] = None
    delta_margin: Optional[float] = None
    n_steps: int = 50


@dataclass(frozen=True)
class RunConfig:
    spec: ProblemSpec
    command: str
    seed: int = 0
    n_starts: int = 4
    output_dir: Path = Path(".")
    fibering: FiberingOptions = field(default_factory=FiberingOptions)
    lambda_of_u: Optional[WeightDescriptor] = None
    extremal_max_iter: int = 500
    extremal_gtol: float = 1e-8
    solve_lambda: Optional[float] = None
    solve_fraction: Optional[float] = None
    sweep: SweepOptions = field(default_factory=SweepOptions)
    beyond: BeyondOptions = field(default_factory=BeyondOptions)
    check_probes: int = 20
    raw: dict = field(default_factory=dict, compare=False)


def _path(parent: str, key: str) -> str:
    return f"{parent}.{key}" if parent else key


def _check_keys(obj: Any, allowed: set, where: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigurationError(f"'{where or 'document'}' must be an object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigParseError(
            f"unknown key{'s' if len(unknown) > 1 else ''} {', '.join(repr(k) for k in unknown)}"
            f" in '{where or 'document'}' (allowed: {', '.join(sorted(allowed))})")
    return obj


def _number(obj: dict, key: str, where: str, default=None, required=False) -> Optional[float]:
    if key not in obj:
        if required:
            raise ConfigurationError(f"missing required key '{_path(where, key)}'")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigurationError(f"'{_path(where, key)}' must be a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigurationError(f"'{_path(where, key)}' must be finite")
    return float(v)


def _integer(obj: dict, key: str, where: str, default=None, minimum=None) -> Optional[int]:
    if key not in obj:
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigurationError(f"'{_path(where, key)}' must be an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigurationError(f"'{_path(where, key)}' must be at least {minimum}, got {v}")
    return v


def _numbers(obj: dict, key: str, where: str) -> Optional[tuple[float, ...]]:
    if key not in obj:
        return None
    v = obj[key]
    if not isinstance(v, list) or not v:
        raise ConfigurationError(f"'{_path(where, key)}' must be a non-empty array of numbers")
    holder = {str(i): x for i, x in enumerate(v)}
    return tuple(_number(holder, str(i), _path(where, key)) for i in range(len(v)))


def _weight(obj: Any, where: str) -> WeightDescriptor:
    obj = _check_keys(obj, _WEIGHT_KEYS, where)
    if "samples" in obj:
        if "preset" in obj or "coeffs" in obj:
            raise ConfigurationError(f"'{where}' takes either 'samples' or 'preset'/'coeffs'")
        return WeightDescriptor.from_samples(_numbers(obj, "samples", where))
    if "preset" not in obj:
        raise ConfigurationError(f"'{where}' needs 'preset' (with 'coeffs') or 'samples'")
    if not isinstance(obj["preset"], str):
        raise ConfigurationError(f"'{where}.preset' must be a string")
    coeffs = _numbers(obj, "coeffs", where) or ()
    return WeightDescriptor(preset=obj["preset"], coeffs=coeffs)


def _load_json(text: bytes | str) -> Any:
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigParseError(f"config is not valid UTF-8 (byte {exc.start})") from exc
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"malformed config: {exc.msg}", line=exc.lineno,
                               column=exc.colno) from exc


def _reject_constant(name: str):
    raise ConfigurationError(f"non-finite number {name} is not allowed in the config")


def parse_config(text: bytes | str, command: Optional[str] = None,
                 seed: Optional[int] = None, output_dir: Optional[Path] = None) -> RunConfig:
    """Parse and validate a config document.

    ``command``, ``seed`` and ``output_dir`` come from the command line and
    take precedence; a ``command`` key in the document must agree with it.
    """
    doc = _check_keys(_load_json(text), _TOP_KEYS, "")
    doc_command = doc.get("command")
    if doc_command is not None and not isinstance(doc_command, str):
        raise ConfigurationError("'command' must be a string")
    if command is not None and doc_command is not None and command != doc_command:
        raise ConfigurationError(
            f"command {command!r} on the command line disagrees with {doc_command!r} in the config")
    command = command or doc_command
    if command is None:
        raise ConfigurationError("no command given")
    if command not in COMMANDS:
        raise ConfigurationError(f"unknown command {command!r}; expected one of {COMMANDS}")

    dom = _check_keys(doc.get("domain", {}), _SECTION_KEYS["domain"], "domain")
    domain = Domain(xmin=_number(dom, "xmin", "domain", -1.0),
                    xmax=_number(dom, "xmax", "domain", 1.0),
                    n=_integer(dom, "n", "domain", 64, minimum=3))
    kwargs = {k: _number(doc, k, "", required=True) for k in ("a", "b", "theta", "gamma", "p", "s")}
    spec = ProblemSpec(**kwargs, lam=_number(doc, "lambda", "", 0.0), domain=domain,
                       f_weight=_weight(doc["f"], "f") if "f" in doc else WeightDescriptor.constant(1.0),
                       g_weight=(_weight(doc["g"], "g") if "g" in doc
                                 else WeightDescriptor.quadratic(1.0, 0.0, -2.0)))
    for name, weight in (("f", spec.f_weight), ("g", spec.g_weight)):
        if weight.samples is not None and len(weight.samples) != domain.n:
            raise ConfigurationError(
                f"'{name}.samples' has {len(weight.samples)} values but domain.n = {domain.n}")

    doc_seed = _integer(doc, "seed", "", 0)
    if doc_seed is not None and doc_seed < 0:
        raise ConfigurationError("'seed' must be nonnegative")
    n_starts = _integer(doc, "n_starts", "", 4, minimum=1)

    fib = _check_keys(doc.get("fibering", {}), _SECTION_KEYS["fibering"], "fibering")
    fibering = FiberingOptions(
        P2=_number(fib, "P2", "fibering"), F=_number(fib, "F", "fibering"),
        G=_number(fib, "G", "fibering"),
        u=_weight(fib["u"], "fibering.u") if "u" in fib else None,
        lam=_number(fib, "lambda", "fibering"),
        t_min=_number(fib, "t_min", "fibering", 1e-3),
        t_max=_number(fib, "t_max", "fibering"),
        n_points=_integer(fib, "n_points", "fibering", 401, minimum=2))
    given = [k for k in ("P2", "F", "G") if getattr(fibering, k) is not None]
    if given and len(given) != 3:
        raise ConfigurationError("'fibering' needs all of P2, F and G when any is given")
    if given and fibering.u is not None:
        raise ConfigurationError("'fibering' takes either P2/F/G or a profile 'u', not both")
    if fibering.t_min <= 0 or (fibering.t_max is not None and fibering.t_max <= fibering.t_min):
        raise ConfigurationError("'fibering' requires 0 < t_min < t_max")

    lou = _check_keys(doc.get("lambda_of_u", {}), _SECTION_KEYS["lambda_of_u"], "lambda_of_u")
    ext = _check_keys(doc.get("extremal", {}), _SECTION_KEYS["extremal"], "extremal")
    sol = _check_keys(doc.get("solve", {}), _SECTION_KEYS["solve"], "solve")
    if "lambda" in sol and "lambda_fraction" in sol:
        raise ConfigurationError("'solve' takes either 'lambda' or 'lambda_fraction', not both")
    solve_lambda = _number(sol, "lambda", "solve")
    solve_fraction = _number(sol, "lambda_fraction", "solve")
    for name, v in (("solve.lambda", solve_lambda), ("solve.lambda_fraction", solve_fraction)):
        if v is not None and v <= 0:
            raise ConfigurationError(f"'{name}' must be positive")

    sw = _check_keys(doc.get("sweep", {}), _SECTION_KEYS["sweep"], "sweep")
    sweep = SweepOptions(lambda_values=_numbers(sw, "lambda_values", "sweep"),
                         fractions=_numbers(sw, "fractions", "sweep"),
                         count=_integer(sw, "count", "sweep", None, minimum=1),
                         max_fraction=_number(sw, "max_fraction", "sweep", 0.9))
    if sum(x is not None for x in (sweep.lambda_values, sweep.fractions, sweep.count)) > 1:
        raise ConfigurationError(
            "'sweep' takes one of 'lambda_values', 'fractions' or 'count'/'max_fraction'")
    if any(v <= 0 for v in (sweep.lambda_values or ()) + (sweep.fractions or ())) \
            or sweep.max_fraction <= 0:
        raise ConfigurationError("sweep parameters must be positive")

    bey = _check_keys(doc.get("beyond", {}), _SECTION_KEYS["beyond"], "beyond")
    beyond = BeyondOptions(epsilon=_number(bey, "epsilon", "beyond"),
                           delta_margin=_number(bey, "delta_margin", "beyond"),
                           n_steps=_integer(bey, "n_steps", "beyond", 50, minimum=2))
    for name in ("epsilon", "delta_margin"):
        v = getattr(beyond, name)
        if v is not None and v <= 0:
            raise ConfigurationError(f"'beyond.{name}' must be positive")

    chk = _check_keys(doc.get("check", {}), _SECTION_KEYS["check"], "check")

    if command == "lambda-of-u" and "u" not in lou:
        raise ConfigurationError("command 'lambda-of-u' needs 'lambda_of_u.u'")
    if command == "fibering" and not given and fibering.u is None:
        raise ConfigurationError("command 'fibering' needs P2/F/G or a profile 'u' in 'fibering'")
    if command == "fibering" and (fibering.lam if fibering.lam is not None else spec.lam) <= 0:
        raise ConfigurationError("command 'fibering' needs lambda > 0 ('fibering.lambda' or 'lambda')")

    return RunConfig(
        spec=spec, command=command,
        seed=seed if seed is not None else doc_seed,
        n_starts=n_starts,
        output_dir=Path(output_dir) if output_dir is not None else Path("."),
        fibering=fibering,
        lambda_of_u=_weight(lou["u"], "lambda_of_u.u") if "u" in lou else None,
        extremal_max_iter=_integer(ext, "max_iter", "extremal", 500, minimum=1),
        extremal_gtol=_number(ext, "gtol", "extremal", 1e-8),
        solve_lambda=solve_lambda, solve_fraction=solve_fraction,
        sweep=sweep, beyond=beyond,
        check_probes=_integer(chk, "probes", "check", 20, minimum=1),
        raw=doc,
    )


def load_config(path: Path, **overrides) -> RunConfig:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(data, **overrides)
