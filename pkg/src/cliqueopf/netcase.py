"""Power network instances: buses, lines, admittance and cost matrices.

Bus ids in case files are 1-based; everything in memory is indexed from 0
(bus ``id`` k lives at row/column k-1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Bus",
    "Line",
    "PowerCase",
    "CaseError",
    "build_admittance",
    "build_cost_matrix",
    "injection_matrix",
    "parse_case",
    "serialize_case",
    "load_case",
    "save_case",
    "generate_radial",
]


class CaseError(ValueError):
    """Invalid or malformed case data."""


@dataclass(frozen=True)
class Bus:
    id: int
    v_min: float
    v_max: float
    c0: float = 0.0
    c1: float = 0.0
    c2: float = 0.0


@dataclass(frozen=True)
class Line:
    src: int
    dst: int
    g: float
    b: float

    @property
    def y(self) -> complex:
        return complex(self.g, self.b)


@dataclass(frozen=True)
class PowerCase:
    buses: tuple
    lines: tuple
    _Y: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        validate(self)
        object.__setattr__(self, "_Y", _admittance(self))
        self._Y.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.buses)

    @property
    def v_min(self) -> np.ndarray:
        return np.array([b.v_min for b in self.buses])

    @property
    def v_max(self) -> np.ndarray:
        return np.array([b.v_max for b in self.buses])

    @property
    def w_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Bounds on the diagonal of W = v v^H, i.e. squared magnitudes."""
        return self.v_min ** 2, self.v_max ** 2

    @property
    def c1(self) -> np.ndarray:
        return np.array([b.c1 for b in self.buses])

    @property
    def c2(self) -> np.ndarray:
        return np.array([b.c2 for b in self.buses])

    def adjacency(self) -> list[set]:
        adj = [set() for _ in self.buses]
        for ln in self.lines:
            adj[ln.src - 1].add(ln.dst - 1)
            adj[ln.dst - 1].add(ln.src - 1)
        return adj

    def edges(self) -> list[tuple[int, int]]:
        """0-based line endpoints with ``i < k``."""
        return sorted((min(l.src, l.dst) - 1, max(l.src, l.dst) - 1) for l in self.lines)

    def with_costs(self, c1) -> "PowerCase":
        buses = [Bus(b.id, b.v_min, b.v_max, b.c0, float(c), b.c2)
                 for b, c in zip(self.buses, c1)]
        return PowerCase(buses, self.lines)


def validate(case: PowerCase) -> None:
    n = len(case.buses)
    if n < 1:
        raise CaseError("case has no buses")
    for k, b in enumerate(case.buses):
        where = f"buses[{k}] (id {b.id})"
        if b.id != k + 1:
            raise CaseError(f"{where}: ids must be 1..n in order, got {b.id}")
        if not b.v_min > 0:
            raise CaseError(f"{where}: v_min must be positive, got {b.v_min}")
        if b.v_min > b.v_max:
            raise CaseError(f"{where}: v_min {b.v_min} > v_max {b.v_max}")
        if b.c2 < 0:
            raise CaseError(f"{where}: c2 must be non-negative, got {b.c2}")
    seen = set()
    for k, ln in enumerate(case.lines):
        where = f"lines[{k}] ({ln.src}-{ln.dst})"
        if not (1 <= ln.src <= n and 1 <= ln.dst <= n):
            raise CaseError(f"{where}: endpoint outside 1..{n}")
        if ln.src == ln.dst:
            raise CaseError(f"{where}: self-loop")
        key = frozenset((ln.src, ln.dst))
        if key in seen:
            raise CaseError(f"{where}: duplicate line")
        seen.add(key)
        if ln.g == 0 and ln.b == 0:
            raise CaseError(f"{where}: zero admittance")
    # connectivity
    adj = [[] for _ in range(n)]
    for ln in case.lines:
        adj[ln.src - 1].append(ln.dst - 1)
        adj[ln.dst - 1].append(ln.src - 1)
    seen_v = {0}
    stack = [0]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen_v:
                seen_v.add(w)
                stack.append(w)
    if len(seen_v) != n:
        missing = sorted(set(range(n)) - seen_v)
        raise CaseError(f"network is disconnected: bus {missing[0] + 1} unreachable from bus 1")


def _admittance(case: PowerCase) -> np.ndarray:
    Y = np.zeros((case.n, case.n), dtype=complex)
    for ln in case.lines:
        i, k, y = ln.src - 1, ln.dst - 1, ln.y
        Y[i, k] -= y
        Y[k, i] -= y
        Y[i, i] += y
        Y[k, k] += y
    return Y


def build_admittance(case: PowerCase) -> np.ndarray:
    """Bus admittance matrix ``Y`` (diagonal: sum of incident line admittances)."""
    return case._Y.copy()


def build_cost_matrix(case: PowerCase, costs=None) -> np.ndarray:
    """``M = (Y^H C + C Y) / 2`` with ``C = diag(costs)`` (defaults to bus c1).

    ``Tr(M v v^H)`` then equals ``sum_i c_i P_i`` for every voltage vector.
    """
    Y = case._Y
    c = case.c1 if costs is None else np.asarray(costs, dtype=float)
    if c.shape != (case.n,):
        raise ValueError(f"expected {case.n} costs, got shape {c.shape}")
    M = 0.5 * (Y.conj().T * c[None, :] + c[:, None] * Y)
    return 0.5 * (M + M.conj().T)


def injection_matrix(case: PowerCase, i: int) -> np.ndarray:
    """``A_i = (Y^H E_i + E_i Y) / 2`` so that ``P_i = Tr(A_i W)``."""
    e = np.zeros(case.n)
    e[i] = 1.0
    return build_cost_matrix(case, e)


# --- serialization -------------------------------------------------------

def _num(obj, key, where):
    if key not in obj:
        raise CaseError(f"{where}: missing field '{key}'")
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise CaseError(f"{where}.{key}: expected a number, got {v!r}")
    return v


def parse_case(text) -> PowerCase:
    """Parse the JSON case schema.

    ``{"buses": [{"id", "v_min", "v_max", "c0", "c1", "c2"}],
    "lines": [{"from", "to", "g", "b"}]}`` with line admittance ``g + jb``.
    ``c0`` and ``c2`` default to 0 when absent.
    """
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise CaseError("top level must be an object")
    for key in ("buses", "lines"):
        if key not in data or not isinstance(data[key], list):
            raise CaseError(f"missing list field '{key}'")
    buses = []
    for k, b in enumerate(data["buses"]):
        where = f"buses[{k}]"
        if not isinstance(b, dict):
            raise CaseError(f"{where}: expected an object")
        bid = _num(b, "id", where)
        if int(bid) != bid:
            raise CaseError(f"{where}.id: expected an integer, got {bid!r}")
        buses.append(Bus(
            id=int(bid),
            v_min=float(_num(b, "v_min", where)),
            v_max=float(_num(b, "v_max", where)),
            c0=float(b.get("c0", 0.0)),
            c1=float(_num(b, "c1", where)),
            c2=float(b.get("c2", 0.0)),
        ))
    lines = []
    for k, ln in enumerate(data["lines"]):
        where = f"lines[{k}]"
        if not isinstance(ln, dict):
            raise CaseError(f"{where}: expected an object")
        src, dst = _num(ln, "from", where), _num(ln, "to", where)
        lines.append(Line(int(src), int(dst),
                          float(_num(ln, "g", where)), float(_num(ln, "b", where))))
    return PowerCase(buses, lines)


def serialize_case(case: PowerCase) -> str:
    data = {
        "buses": [{"id": b.id, "v_min": b.v_min, "v_max": b.v_max,
                   "c0": b.c0, "c1": b.c1, "c2": b.c2} for b in case.buses],
        "lines": [{"from": l.src, "to": l.dst, "g": l.g, "b": l.b} for l in case.lines],
    }
    return json.dumps(data, indent=2) + "\n"


def load_case(path) -> PowerCase:
    with open(path, "rb") as fh:
        return parse_case(fh.read())


def save_case(case: PowerCase, path) -> None:
    with open(path, "w") as fh:
        fh.write(serialize_case(case))


# --- random instances ----------------------------------------------------

def generate_radial(n: int, seed: int, tree: bool = False) -> PowerCase:
    """Random radial network.

    Star topology with bus ``n`` as the hub and power source by default; with
    ``tree=True`` a random recursive tree whose source is a random bus.  The
    source cost is uniform in (0, 10), every other bus in (-10, 0).  Each bus
    draws xi in (0.9, 1.1) and gets magnitude bounds (0.95 xi, 1.05 xi).  Line
    conductance and susceptance magnitudes are uniform in (0, 10); lines are
    inductive, ``y = g - j|b|``.
    """
    if n < 2:
        raise ValueError("need at least two buses")
    rng = np.random.default_rng(seed)
    if tree:
        parents = [int(rng.integers(0, k)) for k in range(1, n)]
        pairs = [(p + 1, k + 1) for k, p in zip(range(1, n), parents)]
        source = int(rng.integers(0, n))
    else:
        pairs = [(l, n) for l in range(1, n)]
        source = n - 1
    c1 = rng.uniform(-10.0, 0.0, size=n)
    c1[source] = rng.uniform(0.0, 10.0)
    xi = rng.uniform(0.9, 1.1, size=n)
    gb = rng.uniform(0.0, 10.0, size=(n - 1, 2))
    buses = [Bus(k + 1, 0.95 * xi[k], 1.05 * xi[k], 0.0, float(c1[k]), 0.0)
             for k in range(n)]
    lines = [Line(a, b, float(g), -float(s)) for (a, b), (g, s) in zip(pairs, gb)]
    return PowerCase(buses, lines)
