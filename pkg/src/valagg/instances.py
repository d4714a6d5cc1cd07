"""Concrete problem instances and the wrappers that transform them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .problem import (
    CapabilityError,
    Domain,
    DomainError,
    PerRoundCost,
    ProblemInstance,
    QuadraticForm,
    StructuralConstants,
    as_point,
    box_corner_sup,
)


def operator_norm(M, tol: float = 1e-12, restarts: int = 10, seed: int = 0,
                  max_iter: int = 100_000) -> float:
    """Largest singular value of ``M`` by power iteration on ``M'M``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if not np.any(M):
        return 0.0
    A = M.T @ M
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(restarts):
        v = rng.normal(size=A.shape[0])
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(max_iter):
            w = A @ v
            lam = float(v @ w)
            if np.linalg.norm(w - lam * v) <= tol * max(1.0, abs(lam)):
                break
            nw = np.linalg.norm(w)
            if nw == 0.0:
                break
            v = w / nw
        best = max(best, lam)
    return math.sqrt(max(best, 0.0))


# --------------------------------------------------------------------------
# Two-stage counterexample


@dataclass(frozen=True)
class CounterexampleSpec:
    theta: float
    box: tuple[float, float] = (-2.0, 2.0)


class Counterexample(ProblemInstance):
    """``F(y, x) = (x - theta*y)^2``: open-loop policy on the two-stage problem
    ``s2 = theta*(s1 + a1)``, ``c2 = (s2 - a2)^2`` with the feedback expert ``a* = s``.
    """

    name = "counterexample"
    horizon = 2

    def __init__(self, spec: CounterexampleSpec):
        if spec.theta < 0:
            raise ValueError("theta must be nonnegative")
        super().__init__(1, Domain.box(*spec.box), expert=[0.0])
        self.spec = spec
        self.theta = float(spec.theta)
        th = self.theta
        self._constants = StructuralConstants(
            alpha=2.0, beta=2.0 * th,
            g2=box_corner_sup(lambda y, x: abs(2 * (x[0] - th * y[0])), self.reference_box),
            eps_tilde=0.0,
            value_bound=box_corner_sup(lambda y, x: (x[0] - th * y[0]) ** 2, self.reference_box),
        )

    @property
    def constants(self):
        return self._constants

    def value(self, y, x):
        return float((x[0] - self.theta * y[0]) ** 2)

    def grad2(self, y, x):
        return np.array([2.0 * (x[0] - self.theta * y[0])])

    def quadratic(self, y):
        ty = self.theta * y[0]
        return QuadraticForm(np.array([[2.0]]), np.array([-2.0 * ty]), ty * ty)

    def J(self, x) -> float:
        """Total cost of the open-loop policy: ``(theta - 1)^2 x^2``."""
        x = as_point(x, 1)
        return (self.theta - 1.0) ** 2 * float(x[0]) ** 2

    def mixed(self, q):
        return ContractedMixing(self, q)

    def describe(self):
        return {"instance": self.name, "theta": self.theta}


def make_counterexample(spec: CounterexampleSpec | float) -> Counterexample:
    if not isinstance(spec, CounterexampleSpec):
        spec = CounterexampleSpec(theta=float(spec))
    return Counterexample(spec)


# --------------------------------------------------------------------------
# Affine-quadratic family


@dataclass(frozen=True)
class AffineQuadraticSpec:
    M: np.ndarray
    b: np.ndarray | None = None
    alpha: float = 2.0
    offset: float = 0.0
    box: tuple[float, float] = (-2.0, 2.0)
    horizon: int = 1
    expert: np.ndarray | None = None


class AffineQuadratic(ProblemInstance):
    """``F(y, x) = alpha/2 |x - M y - b|^2 + c``; ``theta = |M|_op``."""

    name = "affine"

    def __init__(self, spec: AffineQuadraticSpec):
        M = np.atleast_2d(np.asarray(spec.M, dtype=float))
        if M.shape[0] != M.shape[1]:
            raise ValueError(f"M must be square, got shape {M.shape}")
        if not spec.alpha > 0:
            raise ValueError("alpha must be positive")
        if spec.offset < 0:
            raise ValueError("offset must be nonnegative")
        d = M.shape[0]
        b = np.zeros(d) if spec.b is None else as_point(spec.b, d)
        if spec.expert is not None:
            expert = spec.expert
        else:
            try:
                expert = np.linalg.solve(np.eye(d) - M, b)
            except np.linalg.LinAlgError:
                expert = np.zeros(d)
        super().__init__(d, Domain(d, spec.box[0], spec.box[1]), expert=expert)
        self.spec = spec
        self.M, self.b = M, b
        self.alpha, self.offset = float(spec.alpha), float(spec.offset)
        self.horizon = int(spec.horizon)
        self.op_norm = operator_norm(M)
        resid = lambda y, x: float(np.linalg.norm(x - M @ y - b))
        if d <= 6:
            sup_r = box_corner_sup(resid, self.reference_box)
        else:
            r = float(np.max(np.abs(self.reference_box.corners()[[0, -1]]))) * math.sqrt(d)
            sup_r = r * (1 + self.op_norm) + float(np.linalg.norm(b))
        self._constants = StructuralConstants(
            alpha=self.alpha, beta=self.alpha * self.op_norm, g2=self.alpha * sup_r,
            eps_tilde=self.offset, value_bound=0.5 * self.alpha * sup_r ** 2 + self.offset)

    @property
    def constants(self):
        return self._constants

    def target(self, y) -> np.ndarray:
        return self.M @ y + self.b

    def value(self, y, x):
        r = x - self.target(y)
        return float(0.5 * self.alpha * (r @ r) + self.offset)

    def grad2(self, y, x):
        return self.alpha * (x - self.target(y))

    def quadratic(self, y):
        c = self.target(y)
        d = self.dimension
        return QuadraticForm(self.alpha * np.eye(d), -self.alpha * c,
                             0.5 * self.alpha * float(c @ c) + self.offset)

    def fixed_point(self) -> np.ndarray:
        return np.linalg.solve(np.eye(self.dimension) - self.M, self.b)

    def mixed(self, q):
        return ContractedMixing(self, q)

    def describe(self):
        return {"instance": self.name, "M": self.M.tolist(), "b": self.b.tolist(),
                "alpha": self.alpha, "offset": self.offset, "theta": self.constants.theta}


def make_affine_quadratic(spec: AffineQuadraticSpec) -> AffineQuadratic:
    return AffineQuadratic(spec)


# --------------------------------------------------------------------------
# Linear-dynamics imitation instance


@dataclass(frozen=True)
class LinearImitationSpec:
    """Scalar system ``s' = a s + a_b u`` under linear policy ``u = x s``;
    the learner is scored by ``(x s - k_star s)^2`` summed over ``T`` steps."""

    a: float
    a_b: float
    k_star: float
    sigma0_sq: float = 1.0
    T: int = 3
    gain_box: tuple[float, float] = (-2.0, 2.0)


def _interval_abs_sup(p: Polynomial, lo: float, hi: float) -> float:
    cands = [lo, hi]
    dp = p.deriv()
    if dp.degree() >= 1 or np.any(dp.coef):
        for r in dp.roots():
            if abs(r.imag) < 1e-12 and lo <= r.real <= hi:
                cands.append(r.real)
    return float(max(abs(p(c)) for c in cands))


class LinearImitation(ProblemInstance):
    """Squared-loss imitation of a linear feedback expert with exact second
    moments: ``F(y, x) = sum_t m_t(y) (x - k_star)^2``, where ``m_0 = sigma0_sq``
    and ``m_{t+1} = rho(y) m_t``.  With mixing rate ``q`` each step is driven by
    the expert with probability ``q``, so ``rho = q (a + a_b k*)^2 + (1-q)(a + a_b y)^2``.
    """

    name = "imitation"
    supports_native_mixing = True

    def __init__(self, spec: LinearImitationSpec, mixing_q: float = 0.0):
        if not spec.sigma0_sq > 0:
            raise ValueError("sigma0_sq must be positive")
        if spec.T < 1:
            raise ValueError("horizon T must be at least 1")
        lo, hi = spec.gain_box
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise DomainError(f"invalid gain box {spec.gain_box}")
        if not 0.0 <= mixing_q <= 1.0:
            raise ValueError("mixing rate must lie in [0, 1]")
        super().__init__(1, Domain.box(lo, hi), expert=[spec.k_star])
        self.spec = spec
        self.q = float(mixing_q)
        self.horizon = spec.T
        rho_star = (spec.a + spec.a_b * spec.k_star) ** 2
        learner = Polynomial([spec.a, spec.a_b]) ** 2
        self.rho = self.q * rho_star + (1.0 - self.q) * learner
        w = Polynomial([0.0])
        for t in range(spec.T):
            w = w + self.rho ** t
        self.weight = spec.sigma0_sq * w
        dev = max(abs(lo - spec.k_star), abs(hi - spec.k_star))
        sup_w = _interval_abs_sup(self.weight, lo, hi)
        sup_dw = _interval_abs_sup(self.weight.deriv(), lo, hi)
        self._constants = StructuralConstants(
            alpha=2.0 * spec.sigma0_sq, beta=2.0 * sup_dw * dev, g2=2.0 * sup_w * dev,
            eps_tilde=0.0, value_bound=sup_w * dev ** 2)

    @property
    def constants(self):
        return self._constants

    def moments(self, y) -> np.ndarray:
        """State second moments ``m_0 .. m_{T-1}`` under the (mixed) policy ``y``."""
        r = float(self.rho(float(np.ravel(y)[0])))
        return self.spec.sigma0_sq * r ** np.arange(self.spec.T)

    def _w(self, y) -> float:
        return float(self.moments(y).sum())

    def value(self, y, x):
        return self._w(y) * float(x[0] - self.spec.k_star) ** 2

    def grad2(self, y, x):
        return np.array([2.0 * self._w(y) * (x[0] - self.spec.k_star)])

    def quadratic(self, y):
        w = self._w(y)
        k = self.spec.k_star
        return QuadraticForm(np.array([[2.0 * w]]), np.array([-2.0 * w * k]), w * k * k)

    def strong_convexity_at(self, y):
        return 2.0 * self._w(y)

    def mixed(self, q):
        if self.q != 0.0:
            raise CapabilityError("repeated mixing", self)
        return LinearImitation(self.spec, mixing_q=q)

    def describe(self):
        s = self.spec
        return {"instance": self.name, "a": s.a, "a_b": s.a_b, "k_star": s.k_star,
                "sigma0_sq": s.sigma0_sq, "T": s.T, "gain_box": list(s.gain_box), "q": self.q}


def make_linear_imitation(spec: LinearImitationSpec) -> LinearImitation:
    return LinearImitation(spec)


# --------------------------------------------------------------------------
# Wrappers


class _Wrapper(ProblemInstance):
    def __init__(self, base: ProblemInstance):
        super().__init__(base.dimension, base.reference_box, base.domain, base.expert)
        self.base = base
        self.horizon = base.horizon

    def performance(self, x):
        return self.base.performance(x)


class ContractedMixing(_Wrapper):
    """Mixing for synthetic families: the first argument is pulled toward the
    expert, ``F_hat(y, x) = F((1-k) y + k y*, x)`` with ``k = q^T``, which scales
    beta by exactly ``1 - q^T``."""

    def __init__(self, base: ProblemInstance, q: float):
        if not 0.0 <= q <= 1.0:
            raise ValueError("mixing rate must lie in [0, 1]")
        if base.expert is None:
            raise CapabilityError("mixing (no expert parameter)", base)
        super().__init__(base)
        self.q = float(q)
        self.kappa = self.q ** base.horizon
        self.name = base.name + "+mixing"
        c = base.constants
        if not base.reference_box.contains(base.expert):
            raise DomainError("mixing needs the expert inside the reference box")
        self._constants = c.replace(beta=(1.0 - self.kappa) * c.beta)

    @property
    def constants(self):
        return self._constants

    def _pull(self, y):
        return (1.0 - self.kappa) * y + self.kappa * self.base.expert

    def value(self, y, x):
        return self.base.value(self._pull(y), x)

    def grad2(self, y, x):
        return self.base.grad2(self._pull(y), x)

    def quadratic(self, y):
        return self.base.quadratic(self._pull(y))

    def strong_convexity_at(self, y):
        return self.base.strong_convexity_at(self._pull(y))

    def describe(self):
        return {**self.base.describe(), "q": self.q}


@dataclass(frozen=True, eq=False)
class Regularizer:
    """Quadratic regularizer ``R(x)`` with strong convexity ``strong_convexity``."""

    form: QuadraticForm
    strong_convexity: float
    nonnegative: bool
    label: str = "quadratic"

    def value(self, x) -> float:
        return self.form.value(np.asarray(x, dtype=float))

    def gradient(self, x) -> np.ndarray:
        return self.form.gradient(np.asarray(x, dtype=float))

    @classmethod
    def squared_distance(cls, strength: float, center) -> "Regularizer":
        """``R(x) = strength/2 |x - center|^2`` (nonnegative)."""
        c = np.atleast_1d(np.asarray(center, dtype=float))
        d = c.size
        form = QuadraticForm(strength * np.eye(d), -strength * c, 0.5 * strength * float(c @ c))
        return cls(form, float(strength), True, "squared_distance")

    @classmethod
    def expert_cost(cls, instance: ProblemInstance) -> "Regularizer":
        """``R(x) = F(y*, x)``: the cost under the expert's own distribution.
        Treated as possibly negative regardless of the instance."""
        if instance.expert is None:
            raise CapabilityError("expert regularizer (no expert parameter)", instance)
        form = instance.quadratic(instance.expert)
        if form is None:
            raise CapabilityError("expert regularizer (non-quadratic cost)", instance)
        return cls(form, instance.strong_convexity_at(instance.expert), False, "expert_cost")


class WeightedRegularization(_Wrapper):
    """``F_tilde(y, x) = F(y, x) + lam R(x)``: strong convexity grows to
    ``alpha + lam alpha_R`` while beta is unchanged."""

    def __init__(self, base: ProblemInstance, lam: float, regularizer: Regularizer):
        if lam < 0:
            raise ValueError("lambda must be nonnegative")
        super().__init__(base)
        self.lam = float(lam)
        self.regularizer = regularizer
        self.name = base.name + "+weighted"
        c = base.constants
        box = base.reference_box
        if box.dimension <= 6:
            gR = max(float(np.linalg.norm(regularizer.gradient(z))) for z in box.corners())
            vR = max(regularizer.value(z) for z in box.corners())
        else:
            gR = math.inf
            vR = math.inf
        eps = c.eps_tilde
        if self.lam > 0:
            eps = self._local_error_sup()
        self._constants = StructuralConstants(
            alpha=c.alpha + self.lam * regularizer.strong_convexity, beta=c.beta,
            g2=c.g2 + self.lam * gR, eps_tilde=eps,
            value_bound=None if c.value_bound is None else c.value_bound + self.lam * vR)

    def _local_error_sup(self) -> float:
        # sup_y min_x F_tilde(y, x) over corners and a grid of the reference box
        box = self.reference_box
        rng = np.random.default_rng(0)
        probes = np.vstack([box.corners(), box.sample(rng, 64)]) if box.dimension <= 6 \
            else box.sample(rng, 256)
        best = -math.inf
        for y in probes:
            form = self.quadratic(y)
            if form is None:
                return math.nan
            best = max(best, form.value(form.minimizer()))
        return best

    @property
    def constants(self):
        return self._constants

    def value(self, y, x):
        return self.base.value(y, x) + self.lam * self.regularizer.value(x)

    def grad2(self, y, x):
        return self.base.grad2(y, x) + self.lam * self.regularizer.gradient(x)

    def quadratic(self, y):
        form = self.base.quadratic(y)
        if form is None:
            return None
        return form + self.regularizer.form.scaled(self.lam)

    def strong_convexity_at(self, y):
        return self.base.strong_convexity_at(y) + self.lam * self.regularizer.strong_convexity

    def describe(self):
        return {**self.base.describe(), "lambda": self.lam, "regularizer": self.regularizer.label}


NOISE_KINDS = ("uniform", "scaled_bernoulli", "gaussian")


@dataclass(frozen=True)
class StochasticWrapperSpec:
    noise: str = "uniform"
    sigma: float = 1.0
    unchecked: bool = False


class StochasticInstance(_Wrapper):
    """Sampled costs ``f(x; w) = F(y, x) - alpha <w, x - c(y)> + alpha/2 |w|^2``
    where ``c(y) = argmin_x F(y, x)``.  For the counterexample this is
    ``(x - theta y - w)^2``: a noisy expert label.  ``E f(x; w) = F(y, x) + const``.
    """

    def __init__(self, base: ProblemInstance, spec: StochasticWrapperSpec = StochasticWrapperSpec()):
        if spec.noise not in NOISE_KINDS:
            raise ValueError(f"unknown noise {spec.noise!r}; expected one of {NOISE_KINDS}")
        if spec.noise == "gaussian" and not spec.unchecked:
            raise ValueError("gaussian noise is unbounded; pass unchecked=True to allow it")
        if spec.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        super().__init__(base)
        self.spec = spec
        self.name = base.name + "+noise"
        c = base.constants
        bump = c.alpha * spec.sigma * math.sqrt(self.dimension)
        self._constants = c if spec.noise == "gaussian" else c.replace(g2=c.g2 + bump)

    @property
    def constants(self):
        return self._constants

    @property
    def stochastic(self):
        return True

    def value(self, y, x):
        return self.base.value(y, x)

    def grad2(self, y, x):
        return self.base.grad2(y, x)

    def quadratic(self, y):
        return self.base.quadratic(y)

    def strong_convexity_at(self, y):
        return self.base.strong_convexity_at(y)

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        shape = (count, self.dimension)
        s = self.spec.sigma
        if self.spec.noise == "uniform":
            return rng.uniform(-s, s, size=shape)
        if self.spec.noise == "scaled_bernoulli":
            return s * (2.0 * rng.integers(0, 2, size=shape) - 1.0)
        return rng.normal(0.0, s, size=shape)

    def sample_cost(self, anchor, count, seed) -> PerRoundCost:
        if count < 1:
            raise ValueError("sample count must be at least 1")
        anchor = as_point(anchor, self.dimension)
        form = self.base.quadratic(anchor)
        if form is None:
            raise CapabilityError("sampling (non-quadratic base)", self.base)
        alpha = self.base.strong_convexity_at(anchor)
        rng = np.random.default_rng(seed)
        w = self.draw(rng, count)
        w_bar = w.mean(axis=0)
        c = form.minimizer()
        noisy = QuadraticForm(form.P, form.q - alpha * w_bar,
                              form.r + alpha * float(w_bar @ c) + 0.5 * alpha * float(np.mean(np.sum(w * w, axis=1))))
        anchor = anchor.copy()
        anchor.flags.writeable = False
        return PerRoundCost(anchor, alpha, quadratic=noisy, sample_count=int(count))

    def describe(self):
        return {**self.base.describe(), "noise": self.spec.noise, "sigma": self.spec.sigma}


def sample_cost(wrapper: ProblemInstance, anchor, count: int, seed) -> PerRoundCost:
    if not wrapper.stochastic:
        raise CapabilityError("sampling", wrapper)
    return wrapper.sample_cost(anchor, count, seed)
