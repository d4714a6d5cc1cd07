"""Concentration statistics, inequality checks along traces and rate fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .loop import RunTrace
from .problem import MissingConstantError, StructuralConstants

BOUND_IDS = ("thm1", "thm2", "thm3_lower", "lemma3", "perturbation", "prop2",
             "corollary1", "corollary2", "corollary3")


def _as_matrix(iterates) -> np.ndarray:
    X = np.asarray(iterates, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X


def compute_S(iterates, n: int) -> float:
    """Mean distance from ``x_n`` to ``x_1..x_{n-1}`` (1-based ``n >= 2``)."""
    return compute_S_windowed(iterates, 1, n)


def compute_S_windowed(iterates, m: int, n: int) -> float:
    """``sum_{k=m}^{n-1} |x_n - x_k| / (n - m)`` for ``1 <= m < n``."""
    X = _as_matrix(iterates)
    if n < 2:
        raise ValueError(f"S_n needs n >= 2, got {n}")
    if not 1 <= m < n <= len(X):
        raise ValueError(f"bad window m={m}, n={n} for {len(X)} iterates")
    return float(np.sqrt(((X[m - 1:n - 1] - X[n - 1]) ** 2).sum(axis=1)).sum() / (n - m))


def mean_policy_gap(iterates, n: int | None = None) -> float:
    """``|x_n - mean(x_1..x_n)|``."""
    X = _as_matrix(iterates)
    n = len(X) if n is None else n
    return float(np.linalg.norm(X[n - 1] - X[:n].mean(axis=0)))


def path_length(trace: RunTrace, n: int) -> float:
    """``sum_{k=1}^{n} |x_{k+1} - x_k|``."""
    return float(np.sum(trace.step_norms[:n]))


def step_tail_bound(theta: float, s2: float, n1: int, n2: int) -> float:
    """Upper bound on ``sum_{k=n1}^{n2-1} |x_{k+1} - x_k|`` for ``theta < 1``:
    each step is at most ``theta e^{1-theta} S_2 k^{theta-2}``, summed by an
    integral from ``n1 - 1``."""
    if not theta < 1:
        raise ValueError("tail bound needs theta < 1")
    if theta == 0:
        return 0.0
    c = theta * math.exp(1 - theta) * s2
    return c * ((n1 - 1) ** (theta - 1) - (n2 - 1) ** (theta - 1)) / (1 - theta)


@dataclass(frozen=True)
class BoundCheckRecord:
    bound_id: str
    indices: np.ndarray
    per_iterate_margin: np.ndarray
    passed: bool
    constants_used: StructuralConstants
    asymptotic: bool = False
    tol: float = 1e-9
    detail: dict = field(default_factory=dict)

    @property
    def worst_margin(self) -> float:
        vals = [float(np.min(self.per_iterate_margin))] if len(self.per_iterate_margin) else []
        vals += [v for k, v in self.detail.items() if k.endswith("_margin")]
        return min(vals) if vals else math.inf

    def summary(self) -> str:
        tag = " (asymptotic)" if self.asymptotic else ""
        return (f"{self.bound_id}{tag}: {'PASS' if self.passed else 'FAIL'} "
                f"worst margin {self.worst_margin:.3e} over {len(self.indices)} points")


def _record(bound_id, idx, margins, rhs, constants, tol, asymptotic=False, **detail):
    idx = np.asarray(idx, dtype=int)
    margins = np.asarray(margins, dtype=float)
    scale = np.maximum(1.0, np.abs(np.asarray(rhs, dtype=float)))
    ok = bool(np.all(margins >= -tol * scale))
    for k, v in detail.items():
        if k.endswith("_margin"):
            ok = ok and v >= -tol
    return BoundCheckRecord(bound_id, idx, margins, ok, constants, asymptotic, tol, detail)


def envelope_thm2(constants: StructuralConstants, n) -> np.ndarray:
    """``eps + (theta e^{1-theta} G2)^2 / (2 alpha) n^{2(theta-1)}``."""
    th = constants.theta
    n = np.asarray(n, dtype=float)
    return constants.eps_tilde + (th * math.exp(1 - th) * constants.g2) ** 2 / (2 * constants.alpha) \
        * n ** (2 * (th - 1))


def envelope_prop2(theta: float, s2: float, n) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    return math.exp(1 - theta) * n ** (theta - 1) * s2


def _delta(theta: float, alpha: float, g2: float, n) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    return (theta * math.exp(1 - theta) * g2) ** 2 / (2 * alpha) * n ** (2 * (theta - 1))


def _need(value, name, bound):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        raise MissingConstantError(name, bound)
    return value


def check_bounds(trace: RunTrace, constants: StructuralConstants, which=("thm1", "thm2", "lemma3", "prop2"),
                 tol: float = 1e-9, base_constants: StructuralConstants | None = None) -> list[BoundCheckRecord]:
    """Evaluate the requested inequalities along ``trace``.

    ``constants`` govern the problem that was actually run (transformed, if a
    transformer was used).  The regularization corollaries bound the original
    objective and additionally need ``base_constants``.  A record passes when
    every margin (rhs - lhs) is at least ``-tol * max(1, |rhs|)``.
    """
    if isinstance(which, str):
        which = (which,)
    unknown = set(which) - set(BOUND_IDS)
    if unknown:
        raise ValueError(f"unknown bound ids {sorted(unknown)}; known: {BOUND_IDS}")
    if constants is None:
        raise MissingConstantError("constants")
    N = trace.n_rounds
    n_all = np.arange(1, N + 1)
    th, al, g2 = constants.theta, constants.alpha, constants.g2
    S = trace.s_values
    steps = trace.step_norms
    F = trace.self_values
    out = []
    for bid in which:
        if bid in ("thm2", "prop2") and trace.aborted:
            raise ValueError(f"{bid} needs a completed trace; run aborted: {trace.abort_reason}")
        if bid == "thm1":
            avg = np.cumsum(trace.per_round_values) / n_all
            best = np.minimum.accumulate(F)
            rhs = trace.leader_values / n_all + g2 ** 2 * (np.log(n_all) + 1) / (2 * al * n_all)
            margins = np.minimum(rhs - avg, avg - best)
            out.append(_record(bid, n_all, margins, rhs, constants, tol,
                               eps_class=float(trace.leader_values[-1] / N)))
        elif bid == "thm2":
            idx = n_all[1:]
            rhs = envelope_thm2(constants, idx)
            out.append(_record(bid, idx, rhs - F[1:], rhs, constants, tol))
        elif bid == "lemma3":
            idx = n_all[1:]
            ok = ~np.isnan(steps[1:])
            idx = idx[ok]
            rhs = th * S[idx - 1] / idx
            out.append(_record(bid, idx, rhs - steps[idx - 1], rhs, constants, tol))
        elif bid == "perturbation":
            ok = ~np.isnan(steps)
            idx = n_all[ok]
            rhs = trace.grad_norms[idx - 1] / (idx * al)
            out.append(_record(bid, idx, rhs - steps[idx - 1], rhs, constants, tol))
        elif bid == "prop2":
            idx = n_all[1:]
            if N < 2:
                out.append(_record(bid, idx, [], [], constants, tol))
                continue
            s2 = S[1]
            rhs = envelope_prop2(th, s2, idx)
            out.append(_record(bid, idx, rhs - S[1:], rhs, constants, tol,
                               s2=float(s2), s2_bound_margin=float(g2 / al - s2)))
        elif bid == "corollary1":
            out.append(_corollary1(trace, constants, tol))
        elif bid == "thm3_lower":
            out.append(_thm3_lower(trace, constants, tol))
        elif bid == "corollary2":
            out.append(_corollary2(trace, constants, base_constants, tol))
        elif bid == "corollary3":
            out.append(_corollary3(trace, constants, base_constants, tol))
    return out


def _corollary1(trace: RunTrace, constants: StructuralConstants, tol: float) -> BoundCheckRecord:
    # S_{m:n} <= C (theta/((n-m) m^{2-theta}) + n^{theta-1}): C fitted on n <= N/10,
    # then required to hold within a factor 2 for larger n.
    th = constants.theta
    X = trace.iterates
    N = len(X)
    ms = np.unique(np.geomspace(2, max(2, N // 4), 8).astype(int))
    pairs = []
    for m in ms:
        for n in np.unique(np.geomspace(m + 1, N, 8).astype(int)):
            if m < n <= N:
                pairs.append((int(m), int(n)))
    if not pairs:
        return BoundCheckRecord("corollary1", np.array([], int), np.array([]), True, constants, True)
    ratios, shapes = [], []
    for m, n in pairs:
        h = th / ((n - m) * m ** (2 - th)) + n ** (th - 1)
        shapes.append(h)
        ratios.append(compute_S_windowed(X, m, n) / h)
    ratios = np.array(ratios)
    shapes = np.array(shapes)
    small = np.array([n <= max(3, N // 10) for _, n in pairs])
    C = float(ratios[small].max()) if small.any() else float(ratios.max())
    large = ~small
    margins = 2 * C * shapes[large] - ratios[large] * shapes[large]
    idx = np.array([n for (_, n), big in zip(pairs, large) if big], dtype=int)
    return _record("corollary1", idx, margins, 2 * C * shapes[large], constants, tol, asymptotic=True,
                   fitted_constant=C, pairs=len(pairs))


def lower_envelope_shape(theta: float, n) -> np.ndarray:
    """Ratio ``x_n^2 / x_2^2`` lower bound for the counterexample recursion.

    For ``theta > 1``: ``((n - 1 + theta) / (1 + theta))^{2(theta-1)}``.
    For ``theta < 1``: ``((n + theta - 2) / theta)^{2(theta-1)}``.
    """
    n = np.asarray(n, dtype=float)
    if theta == 1:
        return np.ones_like(n)
    if theta > 1:
        return ((n - 1 + theta) / (1 + theta)) ** (2 * (theta - 1))
    if theta == 0:
        return np.where(n <= 2, 1.0, 0.0)
    return ((n + theta - 2) / theta) ** (2 * (theta - 1))


def _thm3_lower(trace: RunTrace, constants: StructuralConstants, tol: float) -> BoundCheckRecord:
    # valid for problems whose F(x, x) is proportional to x^2 along the
    # counterexample recursion; c = F(x_2, x_2) is the positive constant
    th = constants.theta
    F = trace.self_values
    N = len(F)
    idx = np.arange(2, N + 1)
    c = float(F[1]) if N >= 2 else 0.0
    lower = c * lower_envelope_shape(th, idx)
    margins = F[1:] - lower
    detail = {"c": c}
    if th > 1 and N >= 3:
        inc = np.diff(F[1:])
        margins = margins.copy()
        margins[:-1] = np.minimum(margins[:-1], inc)
        detail["nondecreasing"] = bool(np.all(inc >= 0))
    detail["c_positive_margin"] = c if c > 0 else -1.0
    return _record("thm3_lower", idx, margins, F[1:], constants, tol, **detail)


def _transform_param(trace: RunTrace, kind: str, bound: str):
    t = trace.transformer
    if t is None or t.kind != kind:
        raise MissingConstantError(f"{kind} transformer", bound)
    return t


def _corollary2(trace, constants, base, tol) -> BoundCheckRecord:
    t = _transform_param(trace, "mixing", "corollary2")
    base = _need(base, "base_constants", "corollary2")
    M = _need(base.value_bound, "value_bound", "corollary2")
    idx = np.arange(2, trace.n_rounds + 1)
    q, T = t.mixing_q, trace.horizon
    rhs = _delta(constants.theta, base.alpha, base.g2, idx) + base.eps_tilde + 2 * M * min(1.0, T * q)
    return _record("corollary2", idx, rhs - trace.base_values[1:], rhs, constants, tol,
                   q=q, horizon=T, theta_hat=constants.theta)


def _corollary3(trace, constants, base, tol) -> BoundCheckRecord:
    t = _transform_param(trace, "weighted_regularization", "corollary3")
    base = _need(base, "base_constants", "corollary3")
    lam = t.lam
    idx = np.arange(2, trace.n_rounds + 1)
    th = constants.theta
    if t.r_nonneg:
        rhs = (1 + lam) * base.eps_tilde + (1 + lam) * _delta(th, base.alpha, base.g2, idx)
    else:
        d = (1 + lam) * _delta(th, base.alpha, base.g2, idx)
        rhs = d + base.eps_tilde + lam * base.g2 * (2 * lam * base.g2 / base.alpha + np.sqrt(2 * d / base.alpha))
    return _record("corollary3", idx, rhs - trace.base_values[1:], rhs, constants, tol,
                   lam=lam, r_nonneg=t.r_nonneg, theta_tilde=th)


@dataclass(frozen=True)
class RateFit:
    fitted_exponent: float
    theoretical_exponent: float
    r_squared: float
    fit_window: tuple[int, int]
    offset_used: float
    points: int = 0

    def to_dict(self) -> dict:
        return dict(fitted_exponent=self.fitted_exponent, theoretical_exponent=self.theoretical_exponent,
                    r_squared=self.r_squared, fit_window=list(self.fit_window),
                    offset_used=self.offset_used, points=self.points)


def fit_rate(trace, eps_tilde: float | None = None, window: tuple[int, int] | None = None,
             theta: float | None = None, grid_points: int = 25) -> RateFit:
    """Least-squares slope of ``log(F(x_n,x_n) - eps)`` against ``log n``.

    ``trace`` may be a :class:`RunTrace` or a plain array of values indexed by
    ``n = 1, 2, ...``.  The default window is ``(N/100, N)`` sampled on a
    geometric grid of ``grid_points`` integers.
    """
    if isinstance(trace, RunTrace):
        values = trace.self_values
        if theta is None:
            theta = trace.effective_constants.theta
        if eps_tilde is None:
            eps_tilde = trace.effective_constants.eps_tilde
    else:
        values = np.asarray(trace, dtype=float)
    eps_tilde = 0.0 if eps_tilde is None else float(eps_tilde)
    N = len(values)
    if window is None:
        window = (max(1, N // 100), N)
    lo, hi = int(window[0]), min(int(window[1]), N)
    if lo < 1 or hi <= lo:
        raise ValueError(f"bad fit window {window} for {N} values")
    ns = np.unique(np.round(np.geomspace(lo, hi, grid_points)).astype(int))
    excess = values[ns - 1] - eps_tilde
    keep = excess > 1e-14
    ns, excess = ns[keep], excess[keep]
    if len(ns) < 5:
        raise ValueError(f"only {len(ns)} usable points in window ({lo}, {hi}); need 5")
    lx, ly = np.log(ns), np.log(excess)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    theo = 2 * (theta - 1) if theta is not None else math.nan
    return RateFit(float(slope), theo, min(1.0, max(0.0, r2)), (lo, hi), eps_tilde, int(len(ns)))
