"""Input domains and the exact linear oracle.

The oracle answers affine min/max queries over C(S) intersected with an input
domain, finds feasible points, and computes minimum-norm elements of convex
hulls. Domains with a polyhedral encoding go through the embedded simplex;
the l2 ball has a closed form and only supports an empty guard set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import Infeasible, Unbounded, Unsupported
from .guards import GuardLibrary, GuardSet
from .lp import DenseSimplex, LpResult

OPT_TOL = 1e-7
FEAS_SLACK = 1e-8
FW_MAX_ITERS = 500
FW_GAP_TOL = 1e-10


@dataclass
class Counters:
    """Work accounting shared by the oracle, the engine and the driver."""

    lp_calls: int = 0
    closed_form_calls: int = 0
    splits: int = 0
    new_guards: int = 0

    def snapshot(self) -> dict[str, int]:
        return {
            "splits": self.splits,
            "new_guards": self.new_guards,
            "lp_calls": self.lp_calls,
            "closed_form_calls": self.closed_form_calls,
        }


class InputDomain:
    """Base class; concrete domains define dim, key() and membership."""

    kind = "abstract"
    dim: int

    def key(self) -> tuple:
        raise NotImplementedError

    def contains(self, x: np.ndarray, slack: float = FEAS_SLACK) -> bool:
        raise NotImplementedError

    def rows(self) -> tuple[np.ndarray, np.ndarray]:
        """Halfspace rows (A, b) with A x <= b, when polyhedral in x."""
        raise Unsupported(f"domain {self.kind} has no direct row encoding")


@dataclass(frozen=True)
class Box(InputDomain):
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    kind = "box"

    def __post_init__(self) -> None:
        lo, up = np.asarray(self.lower, float), np.asarray(self.upper, float)
        if lo.shape != up.shape or np.any(lo > up):
            raise ValueError("box needs lower <= upper componentwise")
        object.__setattr__(self, "lower", tuple(map(float, lo)))
        object.__setattr__(self, "upper", tuple(map(float, up)))

    @property
    def dim(self) -> int:
        return len(self.lower)

    def key(self) -> tuple:
        return ("box", self.lower, self.upper)

    def contains(self, x: np.ndarray, slack: float = FEAS_SLACK) -> bool:
        lo, up = np.asarray(self.lower), np.asarray(self.upper)
        return bool(np.all(x >= lo - slack) and np.all(x <= up + slack))

    def rows(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.dim
        eye = np.eye(n)
        a = np.vstack([eye, -eye])
        b = np.concatenate([np.asarray(self.upper), -np.asarray(self.lower)])
        return a, b


@dataclass(frozen=True)
class LinfBall(InputDomain):
    center: tuple[float, ...]
    radius: float
    kind = "linf_ball"

    def __post_init__(self) -> None:
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        object.__setattr__(
            self, "center", tuple(float(v) for v in np.asarray(self.center, float))
        )

    @property
    def dim(self) -> int:
        return len(self.center)

    def key(self) -> tuple:
        return ("linf_ball", self.center, self.radius)

    def contains(self, x: np.ndarray, slack: float = FEAS_SLACK) -> bool:
        c = np.asarray(self.center)
        return bool(np.max(np.abs(x - c)) <= self.radius + slack)

    def rows(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center)
        n = self.dim
        eye = np.eye(n)
        a = np.vstack([eye, -eye])
        b = np.concatenate([c + self.radius, -(c - self.radius)])
        return a, b


@dataclass(frozen=True)
class L1Ball(InputDomain):
    center: tuple[float, ...]
    radius: float
    kind = "l1_ball"

    def __post_init__(self) -> None:
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        object.__setattr__(
            self, "center", tuple(float(v) for v in np.asarray(self.center, float))
        )

    @property
    def dim(self) -> int:
        return len(self.center)

    def key(self) -> tuple:
        return ("l1_ball", self.center, self.radius)

    def contains(self, x: np.ndarray, slack: float = FEAS_SLACK) -> bool:
        c = np.asarray(self.center)
        return bool(np.sum(np.abs(x - c)) <= self.radius + slack)


@dataclass(frozen=True)
class L2Ball(InputDomain):
    center: tuple[float, ...]
    radius: float
    kind = "l2_ball"

    def __post_init__(self) -> None:
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        object.__setattr__(
            self, "center", tuple(float(v) for v in np.asarray(self.center, float))
        )

    @property
    def dim(self) -> int:
        return len(self.center)

    def key(self) -> tuple:
        return ("l2_ball", self.center, self.radius)

    def contains(self, x: np.ndarray, slack: float = FEAS_SLACK) -> bool:
        c = np.asarray(self.center)
        return bool(np.linalg.norm(x - c) <= self.radius + slack)


class Polytope(InputDomain):
    """A x <= b domain, certified bounded at construction."""

    kind = "polytope"

    def __init__(self, a: np.ndarray, b: np.ndarray) -> None:
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float).reshape(-1)
        if self.a.ndim != 2 or self.a.shape[0] != self.b.size:
            raise ValueError("polytope rows malformed")
        backend = DenseSimplex()
        n = self.a.shape[1]
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            for sense in ("max", "min"):
                res = backend.solve(e, self.a, self.b, sense)
                if res.status == "unbounded":
                    raise Unbounded(f"polytope unbounded along coordinate {i}")
                if res.status == "infeasible":
                    break  # empty set is bounded

    @property
    def dim(self) -> int:
        return self.a.shape[1]

    def key(self) -> tuple:
        return ("polytope", self.a.tobytes(), self.b.tobytes())

    def contains(self, x: np.ndarray, slack: float = FEAS_SLACK) -> bool:
        return bool(np.all(self.a @ x - self.b <= slack))

    def rows(self) -> tuple[np.ndarray, np.ndarray]:
        return self.a, self.b


@dataclass
class ExtremumResult:
    value: float
    x: np.ndarray


class LinearOracle:
    """Exact affine optimization over C(S) ∩ domain with work accounting."""

    def __init__(
        self,
        library: GuardLibrary,
        backend: DenseSimplex | None = None,
        counters: Counters | None = None,
    ) -> None:
        self.library = library
        self.backend = backend or DenseSimplex()
        self.counters = counters or Counters()

    # -- assembly ----------------------------------------------------------

    def _stack(
        self, s: GuardSet, domain: InputDomain
    ) -> tuple[np.ndarray, np.ndarray]:
        a_d, b_d = domain.rows()
        n = domain.dim
        if len(s):
            a_s, b_s = self.library.halfspace_rows(s)
            return np.vstack([a_d, a_s]), np.concatenate([b_d, b_s])
        return a_d.reshape(-1, n), b_d

    def _lifted_l1(
        self, s: GuardSet, domain: L1Ball
    ) -> tuple[np.ndarray, np.ndarray]:
        """Rows over (x, t): |x - c| <= t componentwise, sum t <= r, S on x."""
        n = domain.dim
        c = np.asarray(domain.center)
        eye = np.eye(n)
        rows = [
            np.hstack([eye, -eye]),  # x - t <= c
            np.hstack([-eye, -eye]),  # -x - t <= -c
            np.hstack([np.zeros((1, n)), np.ones((1, n))]),  # sum t <= r
        ]
        rhs = [c, -c, np.array([domain.radius])]
        if len(s):
            a_s, b_s = self.library.halfspace_rows(s)
            rows.append(np.hstack([a_s, np.zeros((a_s.shape[0], n))]))
            rhs.append(b_s)
        return np.vstack(rows), np.concatenate(rhs)

    # -- queries -----------------------------------------------------------

    def affine_extremum(
        self,
        w: np.ndarray,
        b: float,
        s: GuardSet,
        domain: InputDomain,
        sense: str,
    ) -> ExtremumResult:
        """Exact extremum of w^T x + b over C(S) ∩ domain."""
        w = np.asarray(w, dtype=float)
        if isinstance(domain, L2Ball):
            if len(s):
                raise Unsupported("l2 ball with guards needs conic programming")
            self.counters.closed_form_calls += 1
            c = np.asarray(domain.center)
            nrm = float(np.linalg.norm(w))
            sign = 1.0 if sense == "max" else -1.0
            x = c if nrm == 0 else c + sign * domain.radius * w / nrm
            return ExtremumResult(float(w @ x + b), x)
        if isinstance(domain, L1Ball):
            a_all, b_all = self._lifted_l1(s, domain)
            obj = np.concatenate([w, np.zeros(domain.dim)])
            self.counters.lp_calls += 1
            res = self.backend.solve(obj, a_all, b_all, sense)
            return self._finish(res, w, b, sense, lifted=domain.dim)
        a_all, b_all = self._stack(s, domain)
        self.counters.lp_calls += 1
        res = self.backend.solve(w, a_all, b_all, sense)
        return self._finish(res, w, b, sense)

    @staticmethod
    def _finish(
        res: LpResult, w: np.ndarray, b: float, sense: str, lifted: int = 0
    ) -> ExtremumResult:
        if res.status == "infeasible":
            raise Infeasible("empty cell")
        if res.status == "unbounded":
            raise Unbounded(f"affine {sense} unbounded")
        x = res.x[: w.size] if lifted else res.x
        return ExtremumResult(float(w @ x + b), x)

    def feasible_point(self, s: GuardSet, domain: InputDomain) -> np.ndarray | None:
        """A point of C(S) ∩ domain, or None when the set is empty."""
        if isinstance(domain, L2Ball):
            if len(s):
                raise Unsupported("l2 ball with guards needs conic programming")
            return np.asarray(domain.center, dtype=float)
        try:
            res = self.affine_extremum(
                np.zeros(domain.dim), 0.0, s, domain, "max"
            )
        except Infeasible:
            return None
        return res.x

    def interval(
        self, w: np.ndarray, b: float, s: GuardSet, domain: InputDomain
    ) -> tuple[float, float, np.ndarray, np.ndarray]:
        lo = self.affine_extremum(w, b, s, domain, "min")
        hi = self.affine_extremum(w, b, s, domain, "max")
        return lo.value, hi.value, lo.x, hi.x


def min_norm_in_hull(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Minimum l2-norm element of conv{rows of points} by Frank-Wolfe.

    Away-step variant with exact line search (plain FW zigzags on faces and
    cannot meet the accuracy contract in the iteration cap). Stops on duality
    gap <= FW_GAP_TOL or after FW_MAX_ITERS rounds.
    """
    p = np.asarray(points, dtype=float)
    if p.ndim == 1:
        p = p.reshape(1, -1)
    k = p.shape[0]
    if k == 0:
        raise ValueError("empty point set")
    lam = np.zeros(k)
    lam[0] = 1.0
    x = p[0].copy()
    for _ in range(FW_MAX_ITERS):
        scores = p @ x
        fw = int(np.argmin(scores))
        gap = 2.0 * (float(x @ x) - float(scores[fw]))
        if gap <= FW_GAP_TOL:
            break
        active = np.nonzero(lam > 0)[0]
        away = int(active[np.argmax(scores[active])])
        d_fw = p[fw] - x
        d_aw = x - p[away]
        if -(x @ d_fw) >= -(x @ d_aw):
            d, cap = d_fw, 1.0
            is_away = False
        else:
            d = d_aw
            cap = lam[away] / (1.0 - lam[away]) if lam[away] < 1.0 else np.inf
            is_away = True
        denom = float(d @ d)
        if denom <= 0:
            break
        step = min(cap, max(0.0, float(-(x @ d)) / denom))
        if step <= 0:
            break
        if is_away:
            lam *= 1.0 + step
            lam[away] -= step
        else:
            lam *= 1.0 - step
            lam[fw] += step
        lam = np.maximum(lam, 0.0)
        lam /= lam.sum()
        x = lam @ p
    return x, float(np.linalg.norm(x))
