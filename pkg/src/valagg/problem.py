"""Decision set, two-argument objective and per-round cost snapshots.

An instance describes ``F(y, x)``: ``y`` fixes the state distribution (the
policy that generated the data) and ``x`` is the policy being scored.  Every
gradient in this package is taken with respect to the second argument.
"""

from __future__ import annotations

import abc
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when a point does not have the dimension an instance expects."""

    def __init__(self, expected: int, actual: int, what: str = "point"):
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what} has dimension {actual}, expected {expected}")


class DomainError(ValueError):
    pass


class CapabilityError(TypeError):
    """An operation needs a capability the instance does not provide."""

    def __init__(self, capability: str, instance: object):
        self.capability = capability
        name = getattr(instance, "name", type(instance).__name__)
        super().__init__(f"instance {name!r} does not support {capability!r}")


class MissingConstantError(KeyError):
    def __init__(self, constant: str, bound: str | None = None):
        self.constant = constant
        msg = f"constant {constant!r} is required"
        if bound:
            msg += f" by bound {bound!r}"
        super().__init__(msg)

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return self.args[0]


def as_point(x, dimension: int | None = None, domain: "Domain | None" = None) -> np.ndarray:
    """Validate and return ``x`` as a finite 1-D float array."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise DimensionError(dimension or arr.size, arr.ndim, "point rank")
    if dimension is not None and arr.shape[0] != dimension:
        raise DimensionError(dimension, arr.shape[0])
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"point has non-finite coordinates: {arr}")
    if domain is not None and not domain.contains(arr):
        raise DomainError(f"point {arr} lies outside {domain}")
    return arr


@dataclass(frozen=True)
class Domain:
    """Box ``lower <= x <= upper`` in Euclidean space (bounds may be infinite)."""

    dimension: int
    lower: np.ndarray = None
    upper: np.ndarray = None
    norm_kind: str = "euclidean"

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        lo = np.full(self.dimension, -np.inf) if self.lower is None else np.broadcast_to(
            np.asarray(self.lower, dtype=float), (self.dimension,)).copy()
        hi = np.full(self.dimension, np.inf) if self.upper is None else np.broadcast_to(
            np.asarray(self.upper, dtype=float), (self.dimension,)).copy()
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo >= hi):
            raise DomainError(f"invalid box bounds lower={lo} upper={hi}")
        if self.norm_kind != "euclidean":
            raise DomainError(f"unsupported norm {self.norm_kind!r}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def box(cls, lower, upper, dimension: int = 1) -> "Domain":
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        dimension = max(dimension, lower.size, np.atleast_1d(upper).size)
        return cls(dimension, lower, upper)

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    @property
    def unconstrained(self) -> bool:
        return bool(np.all(np.isinf(self.lower)) and np.all(np.isinf(self.upper)))

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def project(self, x) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def corners(self) -> np.ndarray:
        if not self.bounded:
            raise DomainError("corners of an unbounded box")
        return np.array(list(itertools.product(*zip(self.lower, self.upper))), dtype=float)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if not self.bounded:
            raise DomainError("cannot sample an unbounded box")
        return rng.uniform(self.lower, self.upper, size=(size, self.dimension))

    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def __repr__(self) -> str:
        return f"Domain(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


@dataclass(frozen=True)
class StructuralConstants:
    """alpha: strong convexity in x; beta: Lipschitz modulus of grad_x F in y;
    g2: Lipschitz modulus of F in x over the reference box; eps_tilde: local
    approximation error. ``value_bound`` (an upper bound on F over the box) is
    only needed by the mixing bound."""

    alpha: float
    beta: float
    g2: float
    eps_tilde: float = 0.0
    value_bound: float | None = None
    theta: float = field(init=False)

    def __post_init__(self):
        for name in ("alpha", "beta", "g2", "eps_tilde"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.value_bound is not None:
            object.__setattr__(self, "value_bound", float(self.value_bound))
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.beta >= 0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")
        if not self.g2 > 0:
            raise ValueError(f"g2 must be positive, got {self.g2}")
        object.__setattr__(self, "theta", self.beta / self.alpha)

    def replace(self, **changes) -> "StructuralConstants":
        kw = dict(alpha=self.alpha, beta=self.beta, g2=self.g2,
                  eps_tilde=self.eps_tilde, value_bound=self.value_bound)
        kw.update(changes)
        return StructuralConstants(**kw)

    def to_dict(self) -> dict:
        return dict(alpha=self.alpha, beta=self.beta, g2=self.g2, eps_tilde=self.eps_tilde,
                    value_bound=self.value_bound, theta=self.theta)

    @classmethod
    def from_dict(cls, d: dict) -> "StructuralConstants":
        return cls(alpha=d["alpha"], beta=d["beta"], g2=d["g2"],
                   eps_tilde=d.get("eps_tilde", 0.0), value_bound=d.get("value_bound"))


@dataclass(frozen=True)
class QuadraticForm:
    """``0.5 x'Px + q'x + r`` with symmetric positive definite ``P``."""

    P: np.ndarray
    q: np.ndarray
    r: float = 0.0

    def value(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.P @ x + self.q @ x + self.r)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.P @ x + self.q

    def minimizer(self) -> np.ndarray:
        return np.linalg.solve(self.P, -self.q)

    def __add__(self, other: "QuadraticForm") -> "QuadraticForm":
        return QuadraticForm(self.P + other.P, self.q + other.q, self.r + other.r)

    def scaled(self, c: float) -> "QuadraticForm":
        return QuadraticForm(c * self.P, c * self.q, c * self.r)

    @property
    def curvature_bounds(self) -> tuple[float, float]:
        eig = np.linalg.eigvalsh(self.P)
        return float(eig[0]), float(eig[-1])


@dataclass(frozen=True, eq=False)
class PerRoundCost:
    """Frozen cost ``f(x) = F(anchor, x)`` or a finite-sample surrogate of it.

    Either ``quadratic`` is given (fast exact path), or ``fn``/``grad`` plus
    ``smoothness`` for the iterative solver.
    """

    anchor: np.ndarray
    strong_convexity: float
    quadratic: QuadraticForm | None = None
    fn: Callable[[np.ndarray], float] | None = None
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    smoothness: float | None = None
    sample_count: int = 0

    def __post_init__(self):
        if not self.strong_convexity > 0:
            raise ValueError(f"strong convexity modulus must be positive, got {self.strong_convexity}")
        if self.quadratic is None and (self.fn is None or self.grad is None):
            raise ValueError("a cost needs a quadratic form or value/gradient callables")
        if self.smoothness is None:
            if self.quadratic is None:
                raise ValueError("non-quadratic costs must declare a smoothness constant")
            object.__setattr__(self, "smoothness", self.quadratic.curvature_bounds[1])

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.quadratic is not None:
            return self.quadratic.value(x)
        return float(self.fn(x))

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.quadratic is not None:
            return self.quadratic.gradient(x)
        return np.asarray(self.grad(x), dtype=float)


class ProblemInstance(abc.ABC):
    """Base class for ``F(y, x)`` with declared structural constants.

    Subclasses implement :meth:`value`, :meth:`grad2` and usually
    :meth:`quadratic`.  ``reference_box`` is the bounded box over which G2 and
    the other constants are declared; ``domain`` is where runs take place.
    """

    name: str = "instance"
    horizon: int = 1

    def __init__(self, dimension: int, reference_box: Domain, domain: Domain | None = None,
                 expert=None):
        self.dimension = dimension
        if reference_box.dimension != dimension:
            raise DimensionError(dimension, reference_box.dimension, "reference box")
        if not reference_box.bounded:
            raise DomainError("reference box must be bounded")
        self.reference_box = reference_box
        self.domain = domain if domain is not None else Domain(dimension)
        self.expert = None if expert is None else as_point(expert, dimension)

    @property
    @abc.abstractmethod
    def constants(self) -> StructuralConstants:
        ...

    @abc.abstractmethod
    def value(self, y: np.ndarray, x: np.ndarray) -> float:
        ...

    @abc.abstractmethod
    def grad2(self, y: np.ndarray, x: np.ndarray) -> np.ndarray:
        ...

    def quadratic(self, y: np.ndarray) -> QuadraticForm | None:
        return None

    def strong_convexity_at(self, y: np.ndarray) -> float:
        return self.constants.alpha

    def smoothness_at(self, y: np.ndarray) -> float:
        raise CapabilityError("smoothness", self)

    def performance(self, x: np.ndarray) -> float:
        """``F(x, x)`` of the problem the user cares about (the untransformed one)."""
        return self.value(x, x)

    def mixed(self, q: float) -> "ProblemInstance":
        raise CapabilityError("mixing", self)

    def sample_cost(self, anchor: np.ndarray, count: int, seed) -> PerRoundCost:
        raise CapabilityError("sampling", self)

    @property
    def stochastic(self) -> bool:
        return False

    def describe(self) -> dict:
        return {"instance": self.name}

    def freeze(self, anchor: np.ndarray) -> PerRoundCost:
        anchor = np.array(anchor, dtype=float)
        anchor.flags.writeable = False
        quad = self.quadratic(anchor)
        alpha = self.strong_convexity_at(anchor)
        if quad is not None:
            return PerRoundCost(anchor, alpha, quadratic=quad)
        return PerRoundCost(anchor, alpha,
                            fn=lambda x, y=anchor: self.value(y, x),
                            grad=lambda x, y=anchor: self.grad2(y, x),
                            smoothness=self.smoothness_at(anchor))


def _check_args(instance: ProblemInstance, y, x) -> tuple[np.ndarray, np.ndarray]:
    return as_point(y, instance.dimension), as_point(x, instance.dimension)


def evaluate_F(instance: ProblemInstance, y, x) -> float:
    y, x = _check_args(instance, y, x)
    val = instance.value(y, x)
    if not math.isfinite(val):
        raise DomainError(f"F({y}, {x}) is not finite")
    return val


def grad2_F(instance: ProblemInstance, y, x) -> np.ndarray:
    y, x = _check_args(instance, y, x)
    return np.asarray(instance.grad2(y, x), dtype=float)


def freeze_cost(instance: ProblemInstance, anchor) -> PerRoundCost:
    anchor = as_point(anchor, instance.dimension)
    if not instance.domain.contains(anchor):
        raise DomainError(f"anchor {anchor} outside {instance.domain}")
    return instance.freeze(anchor)


def fd_step(x: np.ndarray) -> float:
    return 1e-5 * max(1.0, float(np.linalg.norm(x)))


def finite_difference_grad(fun: Callable[[np.ndarray], float], x: np.ndarray) -> np.ndarray:
    """Central differences with step ``1e-5 * max(1, |x|)``."""
    x = np.asarray(x, dtype=float)
    h = fd_step(x)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def gradient_relative_error(instance: ProblemInstance, y, x) -> float:
    y, x = _check_args(instance, y, x)
    analytic = instance.grad2(y, x)
    numeric = finite_difference_grad(lambda z: instance.value(y, z), x)
    scale = max(1.0, float(np.linalg.norm(analytic)))
    return float(np.linalg.norm(analytic - numeric) / scale)


def _probe_points(box: Domain, rng: np.random.Generator, probes: int) -> np.ndarray:
    pts = box.sample(rng, probes)
    if box.dimension <= 8:
        pts = np.vstack([box.corners(), pts])
    return pts


def measure_constants(instance: ProblemInstance, box: Domain | None = None, probes: int = 200,
                      seed: int = 0) -> StructuralConstants:
    """Estimate alpha, beta, g2 and eps_tilde by sampling ``box``.

    Every estimate is a supremum (or, for alpha, an infimum) over finitely many
    probes, so beta and g2 are underestimated and alpha overestimated.  Probes
    include the box corners plus, for beta and alpha, pairs at small separation
    so that local slopes are captured.
    """
    from .ftl import CostAggregate, ftl_step  # local: ftl depends on this module

    box = instance.reference_box if box is None else box
    if not box.bounded:
        raise DomainError("measure_constants needs a bounded box")
    if probes < 2:
        raise ValueError("probes must be at least 2")
    if box.dimension != instance.dimension:
        raise DimensionError(instance.dimension, box.dimension, "box")
    rng = np.random.default_rng(seed)
    pts = _probe_points(box, rng, probes)
    diam = box.diameter()

    def local_partner(p):
        d = rng.normal(size=p.shape)
        d /= np.linalg.norm(d)
        return box.project(p + 1e-4 * diam * d)

    # beta: first-argument slope of grad_x F, with x at probe points and corners
    beta = 0.0
    zs = pts
    for i in range(probes):
        y = pts[rng.integers(len(pts))]
        y2 = pts[rng.integers(len(pts))] if i % 2 == 0 else local_partner(y)
        dy = np.linalg.norm(y - y2)
        if dy < 1e-12 * max(1.0, diam):
            continue
        z_candidates = zs[rng.integers(len(zs), size=4)]
        for z in z_candidates:
            slope = np.linalg.norm(instance.grad2(y, z) - instance.grad2(y2, z)) / dy
            beta = max(beta, float(slope))
    if box.dimension <= 4:
        # sweep corner pairs and local pairs at corners: the sup is usually there
        corners = box.corners()
        for y in corners:
            y2 = local_partner(y)
            dy = np.linalg.norm(y - y2)
            if dy == 0:
                continue
            for z in corners:
                slope = np.linalg.norm(instance.grad2(y, z) - instance.grad2(y2, z)) / dy
                beta = max(beta, float(slope))
        for y, y2 in itertools.combinations(corners, 2):
            for z in corners:
                slope = np.linalg.norm(instance.grad2(y, z) - instance.grad2(y2, z)) / np.linalg.norm(y - y2)
                beta = max(beta, float(slope))

    g2 = 0.0
    for z in pts:
        for x in pts[rng.integers(len(pts), size=4)]:
            g2 = max(g2, float(np.linalg.norm(instance.grad2(z, x))))
    if box.dimension <= 4:
        for z in box.corners():
            for x in box.corners():
                g2 = max(g2, float(np.linalg.norm(instance.grad2(z, x))))

    alpha = math.inf
    for i in range(probes):
        y = pts[rng.integers(len(pts))]
        x1 = pts[rng.integers(len(pts))]
        x2 = pts[rng.integers(len(pts))] if i % 2 == 0 else local_partner(x1)
        dx = x2 - x1
        nd = float(dx @ dx)
        if nd < 1e-24:
            continue
        curv = float((instance.grad2(y, x2) - instance.grad2(y, x1)) @ dx) / nd
        alpha = min(alpha, curv)

    eps = -math.inf
    for y in pts[: max(2, min(len(pts), 50))]:
        agg = CostAggregate.from_costs([instance.freeze(y)])
        rep = ftl_step(agg, instance.domain, warm_start=box.project(y))
        eps = max(eps, rep.value)

    return StructuralConstants(alpha=alpha, beta=beta, g2=max(g2, 1e-300), eps_tilde=eps)


def box_corner_sup(fun: Callable[[np.ndarray, np.ndarray], float], box: Domain) -> float:
    """Supremum of a jointly convex ``fun(y, x)`` over ``box x box`` (attained at corners)."""
    corners = box.corners()
    return max(fun(y, x) for y in corners for x in corners)


def strong_convexity_gap(instance: ProblemInstance, y, x1, x2) -> float:
    """``F(y,x2) - F(y,x1) - <grad, x2-x1> - alpha/2 |x2-x1|^2`` (nonnegative)."""
    y, x1 = _check_args(instance, y, x1)
    x2 = as_point(x2, instance.dimension)
    d = x2 - x1
    return (instance.value(y, x2) - instance.value(y, x1) - float(instance.grad2(y, x1) @ d)
            - 0.5 * instance.constants.alpha * float(d @ d))


def points(seq: Sequence) -> np.ndarray:
    """Stack a sequence of points into an ``(n, d)`` array."""
    arr = np.asarray(seq, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr
