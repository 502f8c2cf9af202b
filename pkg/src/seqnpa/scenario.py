"""Bell scenarios, Bell functionals and correlations.

A Bell functional assigns a real coefficient to every cell ``(a, b, x, y)``
of a bipartite scenario; its value on a correlation ``p(ab|xy)`` is
``constant + sum(coeffs * p)``.  Arrays are always indexed in the order
``[a, b, x, y]`` with 0-based dense indices.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .errors import ParseError, ScenarioMismatch, SchemaError

__all__ = [
    "Scenario",
    "BellFunctional",
    "Correlation",
    "load_game",
    "save_game",
    "game_from_dict",
    "game_to_dict",
    "builtin_game",
    "from_predicate",
    "score",
    "deterministic_correlation",
]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Scenario:
    """Alphabet sizes of a bipartite Bell scenario."""

    nX: int
    nY: int
    nA: int
    nB: int

    def __post_init__(self):
        for name in ("nX", "nY", "nA", "nB"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise SchemaError(f"{name} must be an integer, got {value!r}")
            if value < 1:
                raise SchemaError(f"{name} must be >= 1, got {value}")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        """Array shape ``(nA, nB, nX, nY)`` used for coefficients and correlations."""
        return (self.nA, self.nB, self.nX, self.nY)

    def cells(self):
        """Iterate over all index tuples ``(a, b, x, y)``."""
        return np.ndindex(*self.shape)


@dataclass(frozen=True, eq=False)
class BellFunctional:
    """Linear functional ``p -> constant + <coeffs, p>`` on correlations."""

    scenario: Scenario
    coeffs: np.ndarray
    constant: float = 0.0
    name: str = ""
    convention: str = ""

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.shape != self.scenario.shape:
            raise SchemaError(
                f"coefficient array has shape {coeffs.shape}, expected {self.scenario.shape}"
            )
        if not np.all(np.isfinite(coeffs)) or not np.isfinite(self.constant):
            raise SchemaError("coefficients must be finite")
        object.__setattr__(self, "coeffs", _frozen(coeffs))
        object.__setattr__(self, "constant", float(self.constant))

    def __eq__(self, other):
        if not isinstance(other, BellFunctional):
            return NotImplemented
        return (
            self.scenario == other.scenario
            and self.constant == other.constant
            and self.name == other.name
            and self.convention == other.convention
            and np.array_equal(self.coeffs, other.coeffs)
        )

    __hash__ = None

    @property
    def n_cells(self) -> int:
        return int(self.coeffs.size)

    def nonzero_cells(self):
        """Sorted list of ``((a, b, x, y), c)`` with ``c != 0``."""
        return [(tuple(int(i) for i in idx), float(self.coeffs[idx]))
                for idx in zip(*np.nonzero(self.coeffs))]

    @classmethod
    def zero(cls, scenario: Scenario, constant: float = 0.0) -> "BellFunctional":
        return cls(scenario, np.zeros(scenario.shape), constant)


@dataclass(frozen=True, eq=False)
class Correlation:
    """A table ``p(ab|xy)`` over a scenario; validity is checked on request."""

    scenario: Scenario
    p: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.shape != self.scenario.shape:
            raise SchemaError(f"correlation has shape {p.shape}, expected {self.scenario.shape}")
        object.__setattr__(self, "p", _frozen(p))

    def violations(self) -> tuple[float, float]:
        """Return (most negative entry clipped at 0, worst normalization error)."""
        neg = float(max(0.0, -self.p.min()))
        norm = float(np.abs(self.p.sum(axis=(0, 1)) - 1.0).max())
        return neg, norm

    def is_valid(self, tol: float = 1e-8) -> bool:
        neg, norm = self.violations()
        return neg <= tol and norm <= tol

    def alice_marginal(self) -> np.ndarray:
        """``p(a|x)`` computed with ``y = 0``; shape ``(nA, nX)``."""
        return self.p.sum(axis=1)[:, :, 0]

    def bob_marginal(self) -> np.ndarray:
        """``p(b|y)`` computed with ``x = 0``; shape ``(nB, nY)``."""
        return self.p.sum(axis=0)[:, 0, :]


def score(f: BellFunctional, p: Correlation) -> float:
    """Evaluate ``f`` on the correlation ``p``."""
    if f.scenario != p.scenario:
        raise ScenarioMismatch(f"functional over {f.scenario} applied to correlation over {p.scenario}")
    return float(f.constant + np.sum(f.coeffs * p.p))


def deterministic_correlation(scenario: Scenario, alice: Callable[[int], int],
                              bob: Callable[[int], int]) -> Correlation:
    """Correlation of the local deterministic strategy ``a = alice(x)``, ``b = bob(y)``."""
    p = np.zeros(scenario.shape)
    for x in range(scenario.nX):
        for y in range(scenario.nY):
            p[alice(x), bob(y), x, y] = 1.0
    return Correlation(scenario, p)


def from_predicate(scenario: Scenario, predicate: Callable[[int, int, int, int], bool],
                   distribution: Mapping[tuple[int, int], float] | np.ndarray | None = None,
                   name: str = "") -> BellFunctional:
    """Normalize a nonlocal game into coefficient form.

    ``coeffs[a, b, x, y] = pi(x, y) * V(a, b, x, y)``.  With no distribution the
    questions are uniform.
    """
    if distribution is None:
        pi = np.full((scenario.nX, scenario.nY), 1.0 / (scenario.nX * scenario.nY))
    elif isinstance(distribution, np.ndarray):
        pi = np.asarray(distribution, dtype=float)
    else:
        pi = np.zeros((scenario.nX, scenario.nY))
        for (x, y), w in distribution.items():
            pi[x, y] = w
    if pi.shape != (scenario.nX, scenario.nY):
        raise SchemaError(f"question distribution has shape {pi.shape}")
    coeffs = np.zeros(scenario.shape)
    for a, b, x, y in scenario.cells():
        if predicate(a, b, x, y):
            coeffs[a, b, x, y] = pi[x, y]
    return BellFunctional(scenario, coeffs, 0.0, name=name, convention="winning-probability")


# --------------------------------------------------------------------------
# Game files
# --------------------------------------------------------------------------

def _require_int(d: Mapping, key: str, where: str = "game") -> int:
    if key not in d:
        raise SchemaError(f"{where}: missing field {key!r}")
    value = d[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{where}: field {key!r} must be an integer")
    return value


def _require_number(d: Mapping, key: str, where: str, default=None) -> float:
    if key not in d:
        if default is not None:
            return default
        raise SchemaError(f"{where}: missing field {key!r}")
    value = d[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{where}: field {key!r} must be a number")
    return float(value)


def game_from_dict(data: Mapping) -> BellFunctional:
    """Validate a decoded game document and build the functional."""
    if not isinstance(data, Mapping):
        raise SchemaError("game document must be an object")
    scenario = Scenario(*(_require_int(data, k) for k in ("nX", "nY", "nA", "nB")))
    name = data.get("name", "")
    if not isinstance(name, str):
        raise SchemaError("field 'name' must be a string")
    convention = data.get("convention", "")
    constant = _require_number(data, "constant", "game", default=0.0)

    if "coeffs" in data:
        entries = data["coeffs"]
        if not isinstance(entries, list):
            raise SchemaError("field 'coeffs' must be a list")
        coeffs = np.zeros(scenario.shape)
        bounds = {"a": scenario.nA, "b": scenario.nB, "x": scenario.nX, "y": scenario.nY}
        for i, entry in enumerate(entries):
            where = f"coeffs[{i}]"
            if not isinstance(entry, Mapping):
                raise SchemaError(f"{where} must be an object")
            idx = []
            for key in ("a", "b", "x", "y"):
                v = _require_int(entry, key, where)
                if not 0 <= v < bounds[key]:
                    raise SchemaError(f"{where}: index {key}={v} out of range [0, {bounds[key]})")
                idx.append(v)
            coeffs[tuple(idx)] += _require_number(entry, "c", where)
    elif "wins" in data:
        # predicate form: list of winning cells plus an optional question distribution
        wins = set()
        for i, entry in enumerate(data["wins"]):
            idx = tuple(_require_int(entry, k, f"wins[{i}]") for k in ("a", "b", "x", "y"))
            wins.add(idx)
        dist = None
        if "questions" in data:
            dist = {}
            for i, q in enumerate(data["questions"]):
                dist[(_require_int(q, "x", f"questions[{i}]"), _require_int(q, "y", f"questions[{i}]"))] = \
                    _require_number(q, "prob", f"questions[{i}]")
        for idx in wins:
            for v, n in zip(idx, scenario.shape):
                if not 0 <= v < n:
                    raise SchemaError(f"winning cell {idx} out of range")
        f = from_predicate(scenario, lambda a, b, x, y: (a, b, x, y) in wins, dist, name=name)
        return BellFunctional(scenario, f.coeffs, constant, name=name,
                              convention=convention or f.convention)
    else:
        raise SchemaError("game: missing field 'coeffs'")
    return BellFunctional(scenario, coeffs, constant, name=name, convention=convention)


def game_to_dict(f: BellFunctional) -> dict:
    s = f.scenario
    doc = {"name": f.name, "nX": s.nX, "nY": s.nY, "nA": s.nA, "nB": s.nB,
           "constant": f.constant}
    if f.convention:
        doc["convention"] = f.convention
    doc["coeffs"] = [{"a": a, "b": b, "x": x, "y": y, "c": c}
                     for (a, b, x, y), c in f.nonzero_cells()]
    return doc


def load_game(path: str | Path) -> BellFunctional:
    """Read and validate a JSON game file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read game file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return game_from_dict(data)


def save_game(f: BellFunctional, path: str | Path) -> None:
    Path(path).write_text(json.dumps(game_to_dict(f), indent=1) + "\n")


def builtin_game(name: str) -> BellFunctional:
    """Load one of the bundled game files (``chsh``, ``i3322``)."""
    ref = resources.files("seqnpa") / "games" / f"{name.lower()}.json"
    if not ref.is_file():
        raise FileNotFoundError(f"no bundled game named {name!r}")
    with resources.as_file(ref) as path:
        return load_game(path)


def builtin_game_path(name: str) -> Path:
    ref = resources.files("seqnpa") / "games" / f"{name.lower()}.json"
    return Path(str(ref))
