"""The lattices Z^n and H3(Z): group law, word metrics, ball growth.

Heisenberg elements use integer coordinates (a, b, c) with the polarized law

    (a1, b1, c1) (a2, b2, c2) = (a1 + a2, b1 + b2, c1 + c2 + a1 b2),

so that a = (1,0,0), b = (0,1,0) satisfy [a, b] = a b a^-1 b^-1 = t = (0,0,1).
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from .errors import BoundedSearchError, InputError

ABELIAN = "abelian"
HEISENBERG = "heisenberg3"

DEFAULT_BUDGET = 40_000_000  # elements held by one BFS at any time


@dataclass(frozen=True)
class GroupElement:
    tag: str
    coords: tuple

    def __post_init__(self):
        if self.tag not in (ABELIAN, HEISENBERG):
            raise InputError(f"unknown group tag {self.tag!r}")
        object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))
        if self.tag == HEISENBERG and len(self.coords) != 3:
            raise InputError("Heisenberg elements have three coordinates")

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        return multiply(self, other)

    def inverse(self) -> "GroupElement":
        if self.tag == ABELIAN:
            return GroupElement(ABELIAN, tuple(-c for c in self.coords))
        a, b, c = self.coords
        return GroupElement(HEISENBERG, (-a, -b, -c + a * b))

    @property
    def is_identity(self) -> bool:
        return not any(self.coords)


def identity(tag: str, n: int = 3) -> GroupElement:
    return GroupElement(tag, (0,) * (3 if tag == HEISENBERG else n))


def multiply(g1: GroupElement, g2: GroupElement) -> GroupElement:
    if g1.tag != g2.tag or len(g1.coords) != len(g2.coords):
        raise InputError("cannot multiply elements of different groups")
    if g1.tag == ABELIAN:
        return GroupElement(ABELIAN, tuple(x + y for x, y in zip(g1.coords, g2.coords)))
    a1, b1, c1 = g1.coords
    a2, b2, c2 = g2.coords
    return GroupElement(HEISENBERG, (a1 + a2, b1 + b2, c1 + c2 + a1 * b2))


def commutator(g: GroupElement, h: GroupElement) -> GroupElement:
    return g * h * g.inverse() * h.inverse()


@dataclass(frozen=True)
class GroupPresentation:
    tag: str
    generators: tuple  # symmetric
    ranks: tuple  # ranks of the lower central series quotients

    def __post_init__(self):
        gens = set(self.generators)
        for s in self.generators:
            if s.tag != self.tag:
                raise InputError("generator from another group")
            if s.inverse() not in gens:
                raise InputError("generating set must be symmetric")
            if s.is_identity:
                raise InputError("identity is not a generator")
        expected = (self.dim,) if self.tag == ABELIAN else (2, 1)
        if tuple(self.ranks) != expected:
            raise InputError(f"ranks {self.ranks} do not match {self.tag}")

    @property
    def dim(self) -> int:
        return len(self.generators[0].coords)

    @property
    def bass_dimension(self) -> int:
        """Homogeneous dimension sum_k k * rank(G^(k)/G^(k+1))."""
        return sum(k * r for k, r in enumerate(self.ranks, start=1))

    @classmethod
    def abelian(cls, n: int, generators=None) -> "GroupPresentation":
        if generators is None:
            generators = [tuple(int(i == j) for j in range(n)) for i in range(n)]
        gens = []
        for g in generators:
            if len(g) != n:
                raise InputError("generator has wrong length")
            for s in (1, -1):
                e = GroupElement(ABELIAN, tuple(s * c for c in g))
                if e not in gens:
                    gens.append(e)
        pres = cls(ABELIAN, tuple(gens), (n,))
        if np.linalg.matrix_rank(np.array([e.coords for e in gens])) < n:
            raise InputError("generators do not span Z^n")
        return pres

    @classmethod
    def heisenberg(cls, include_center: bool = False) -> "GroupPresentation":
        base = [(1, 0, 0), (0, 1, 0)] + ([(0, 0, 1)] if include_center else [])
        gens = []
        for g in base:
            e = GroupElement(HEISENBERG, g)
            gens += [e, e.inverse()]
        return cls(HEISENBERG, tuple(gens), (2, 1))

    @classmethod
    def from_tag(cls, name: str, generators=None, include_center: bool = False) -> "GroupPresentation":
        name = name.upper()
        if name == "H3":
            return cls.heisenberg(include_center)
        if name.startswith("Z") and name[1:].isdigit():
            return cls.abelian(int(name[1:]), generators)
        raise InputError(f"unknown group {name!r}")


# ---------------------------------------------------------------- vectorized BFS


def _right_multiply(tag: str, elems: np.ndarray, s: tuple) -> np.ndarray:
    out = elems + np.asarray(s, dtype=np.int64)
    if tag == HEISENBERG:
        out[:, 2] += elems[:, 0] * s[1]
    return out


class _Encoder:
    """Packs bounded integer coordinate rows into single int64 keys."""

    def __init__(self, bounds):
        self.bounds = [int(b) for b in bounds]
        width = 1
        for b in self.bounds:
            width *= 2 * b + 1
        if width >= 2**62:
            raise BoundedSearchError("coordinate range too large to encode")

    def encode(self, rows: np.ndarray) -> np.ndarray:
        key = np.zeros(len(rows), dtype=np.int64)
        for j, b in enumerate(self.bounds):
            key = key * (2 * b + 1) + (rows[:, j] + b)
        return key


def _coord_bounds(p: GroupPresentation, start: GroupElement, radius: int):
    step = [max(abs(s.coords[j]) for s in p.generators) for j in range(p.dim)]
    base = [abs(c) for c in start.coords]
    bounds = [base[j] + step[j] * radius + 1 for j in range(p.dim)]
    if p.tag == HEISENBERG:
        # |c| grows at most like |a| * |b| plus linear increments
        bounds[2] = base[2] + (bounds[0] + 1) * (bounds[1] + 1) + step[2] * radius + 1
    return bounds


def bfs_spheres(p: GroupPresentation, radius: int, start: GroupElement | None = None,
                budget: int = DEFAULT_BUDGET) -> Iterator[np.ndarray]:
    """Yield the spheres S(start, r), r = 0..radius, of the Cayley graph.

    Edges join g and g s (right multiplication), so distances are those of
    the left-invariant word metric. Only two spheres are held at a time.
    """
    start = start or identity(p.tag, p.dim)
    enc = _Encoder(_coord_bounds(p, start, radius))
    gens = [s.coords for s in p.generators]
    current = np.array([start.coords], dtype=np.int64)
    cur_keys = enc.encode(current)
    prev_keys = np.empty(0, dtype=np.int64)
    yield current
    for _ in range(radius):
        cand = np.concatenate([_right_multiply(p.tag, current, s) for s in gens])
        if len(cand) > budget:
            raise BoundedSearchError(f"BFS frontier of {len(cand)} elements exceeds the budget")
        keys = enc.encode(cand)
        keys, first = np.unique(keys, return_index=True)
        fresh = ~(np.isin(keys, cur_keys, assume_unique=True) | np.isin(keys, prev_keys, assume_unique=True))
        prev_keys, cur_keys = cur_keys, keys[fresh]
        current = cand[first[fresh]]
        yield current


def word_norm(p: GroupPresentation, g: GroupElement, radius_cap: int) -> int:
    """Exact word length of ``g``; BoundedSearchError if it exceeds ``radius_cap``."""
    if radius_cap < 0:
        raise InputError("radius_cap must be non-negative")
    if g.tag != p.tag:
        raise InputError("element does not belong to the presented group")
    target = np.asarray(g.coords, dtype=np.int64)
    for r, sphere in enumerate(bfs_spheres(p, radius_cap)):
        if np.any(np.all(sphere == target, axis=1)):
            return r
    raise BoundedSearchError(f"word norm of {g.coords} exceeds cap {radius_cap}")


def word_norms(p: GroupPresentation, elements, radius_cap: int) -> dict:
    """Word lengths of several elements from a single BFS."""
    pending = {tuple(int(c) for c in (e.coords if isinstance(e, GroupElement) else e)) for e in elements}
    found = {}
    for r, sphere in enumerate(bfs_spheres(p, radius_cap)):
        if not pending:
            break
        for row in map(tuple, sphere.tolist()):
            if row in pending:
                found[row] = r
                pending.discard(row)
    if pending:
        raise BoundedSearchError(f"{len(pending)} elements beyond radius cap {radius_cap}")
    return found


def ball(p: GroupPresentation, radius: int, start: GroupElement | None = None) -> dict:
    """Mapping coords -> distance from ``start`` for the closed ball."""
    out = {}
    for r, sphere in enumerate(bfs_spheres(p, radius, start)):
        for row in map(tuple, sphere.tolist()):
            out[row] = r
    return out


@dataclass
class GrowthTable:
    radii: np.ndarray
    counts: np.ndarray  # |B(r)|, closed balls
    fitted_exponent: float
    bass_dimension: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("r,count\n")
        for r, c in zip(self.radii, self.counts):
            buf.write(f"{int(r)},{int(c)}\n")
        return buf.getvalue()


def ball_growth(p: GroupPresentation, r_max: int, budget: int = DEFAULT_BUDGET) -> GrowthTable:
    """|B(r)| for r = 1..r_max and the log-log slope over [r_max/2, r_max]."""
    if r_max < 2:
        raise InputError("r_max must be at least 2")
    counts = []
    total = 0
    for r, sphere in enumerate(bfs_spheres(p, r_max, budget=budget)):
        total += len(sphere)
        if r >= 1:
            counts.append(total)
    radii = np.arange(1, r_max + 1)
    counts = np.asarray(counts, dtype=np.int64)
    sel = radii >= r_max / 2
    slope = np.polyfit(np.log(radii[sel]), np.log(counts[sel]), 1)[0]
    return GrowthTable(radii, counts, float(slope), p.bass_dimension)


# ---------------------------------------------------------------- orbit metric


def euclidean(p: np.ndarray, q: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)))


def orbit_metric(x0, g1: GroupElement, g2: GroupElement,
                 metric: Callable[[np.ndarray, np.ndarray], float] = euclidean) -> float:
    """d(g1 x0, g2 x0) for the translation action of Z^n on R^n."""
    if g1.tag != ABELIAN or g2.tag != ABELIAN:
        raise InputError("orbit metric is only available for Z^n acting on R^n")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    return metric(x0 + np.asarray(g1.coords), x0 + np.asarray(g2.coords))


def write_growth_csv(table: GrowthTable, path):
    Path(path).write_text(table.to_csv())
