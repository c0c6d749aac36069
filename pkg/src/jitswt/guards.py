"""Interned halfspace library and guard sets with closed-cell semantics.

A guard is an oriented halfspace {x : a^T x <= d} with a unit-length normal.
Each geometric plane is stored once in canonical orientation together with its
reverse; both orientations have distinct ids and are linked via `reverse_id`.
A GuardSet is an ordered duplicate-free set of guard ids whose cell is the
intersection of the closed halfspaces.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from ._util import ZERO_EPS, first_nonzero_sign, quant_key
from .errors import NumericalFailure, ZeroNormal

if TYPE_CHECKING:
    from .oracle import InputDomain, LinearOracle

INTERN_TOL = 1e-9
WITNESS_SLACK = 1e-8


@dataclass(frozen=True)
class Halfspace:
    """One oriented halfspace a^T x <= d with ||a||_2 = 1."""

    normal: tuple[float, ...]
    offset: float
    id: int
    reverse_id: int

    def holds(self, x: np.ndarray, slack: float = WITNESS_SLACK) -> bool:
        return float(np.dot(self.normal, x)) <= self.offset + slack


def canonicalize_halfspace(a: np.ndarray, d: float) -> tuple[np.ndarray, float, bool]:
    """Scale to a unit normal and orient so the first nonzero entry is >= 0.

    Returns (normal, offset, flipped); `flipped` is True when the input
    orientation is the reverse of the canonical one. Raises ZeroNormal when
    ||a||_2 is numerically zero.
    """
    a = np.asarray(a, dtype=float)
    norm = float(np.linalg.norm(a))
    if norm <= ZERO_EPS:
        raise ZeroNormal("halfspace normal has zero length")
    normal = a / norm
    offset = float(d) / norm
    if first_nonzero_sign(normal) < 0:
        return -normal, -offset, True
    return normal, offset, False


@dataclass(frozen=True)
class GuardSet:
    """Ordered, duplicate-free tuple of guard ids; cell C(S) is closed."""

    ids: tuple[int, ...] = ()

    def add(self, gid: int) -> "GuardSet":
        if gid in self.ids:
            return self
        return GuardSet(self.ids + (gid,))

    def key(self) -> frozenset[int]:
        # C(S) does not depend on insertion order.
        return frozenset(self.ids)

    def __contains__(self, gid: int) -> bool:
        return gid in self.ids

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)


@dataclass
class FeasibilityResult:
    status: str  # "feasible" | "infeasible"
    witness: np.ndarray | None = None


class GuardLibrary:
    """Tolerance-interned store of halfspaces plus a feasibility cache."""

    def __init__(self) -> None:
        self._halfspaces: list[Halfspace] = []
        self._index: dict[tuple[int, ...], int] = {}
        self._feas_cache: dict[tuple, FeasibilityResult] = {}

    def __len__(self) -> int:
        return len(self._halfspaces)

    @property
    def oriented_count(self) -> int:
        return len(self._halfspaces)

    @property
    def plane_count(self) -> int:
        return len(self._halfspaces) // 2

    def get(self, gid: int) -> Halfspace:
        return self._halfspaces[gid]

    def register(self, a: np.ndarray, d: float) -> int:
        """Intern the plane of {a^T x <= d}; return the id of that orientation.

        Both orientations are stored on first contact; re-registering either
        orientation returns the existing id.
        """
        normal, offset, flipped = canonicalize_halfspace(a, d)
        key = quant_key(np.append(normal, offset), INTERN_TOL)
        base = self._index.get(key)
        if base is None:
            base = len(self._halfspaces)
            fwd = Halfspace(tuple(normal), offset, base, base + 1)
            rev = Halfspace(tuple(-normal), -offset, base + 1, base)
            self._halfspaces.append(fwd)
            self._halfspaces.append(rev)
            self._index[key] = base
        return base + 1 if flipped else base

    def lookup(self, a: np.ndarray, d: float) -> int | None:
        """Id of the orientation {a^T x <= d} if already interned, else None."""
        normal, offset, flipped = canonicalize_halfspace(a, d)
        key = quant_key(np.append(normal, offset), INTERN_TOL)
        base = self._index.get(key)
        if base is None:
            return None
        return base + 1 if flipped else base

    def reverse(self, gid: int) -> int:
        return self._halfspaces[gid].reverse_id

    def halfspace_rows(self, s: GuardSet) -> tuple[np.ndarray, np.ndarray]:
        """Stack C(S) as (A, d) with rows a_i^T x <= d_i."""
        if len(s) == 0:
            return np.zeros((0, 0)), np.zeros(0)
        rows = [self._halfspaces[g].normal for g in s]
        offs = [self._halfspaces[g].offset for g in s]
        return np.asarray(rows, dtype=float), np.asarray(offs, dtype=float)

    def check_feasible(
        self, s: GuardSet, domain: "InputDomain", oracle: "LinearOracle"
    ) -> FeasibilityResult:
        """Decide whether C(S) meets the domain; cache by (S, domain)."""
        key = (s.key(), domain.key())
        hit = self._feas_cache.get(key)
        if hit is not None:
            return hit
        res = oracle.feasible_point(s, domain)
        if res is None:
            out = FeasibilityResult("infeasible")
        else:
            a_rows, d_offs = self.halfspace_rows(s)
            if len(s) and np.any(a_rows @ res - d_offs > WITNESS_SLACK):
                raise NumericalFailure("feasibility witness violates a guard")
            out = FeasibilityResult("feasible", res)
        self._feas_cache[key] = out
        return out

    def contains_point(self, s: GuardSet, x: np.ndarray, slack: float = WITNESS_SLACK) -> bool:
        return all(self._halfspaces[g].holds(x, slack) for g in s)

    def to_json(self) -> str:
        payload = [
            {"normal": list(h.normal), "offset": h.offset} for h in self._halfspaces
        ]
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "GuardLibrary":
        lib = cls()
        data = json.loads(text)
        for i, row in enumerate(data):
            normal = np.asarray(row["normal"], dtype=float)
            offset = float(row["offset"])
            gid = lib.register(normal, offset)
            if gid != i:
                raise ValueError(f"dump is not in registration order at id {i}")
        return lib
