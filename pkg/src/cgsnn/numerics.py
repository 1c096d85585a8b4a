"""Small deterministic numerical substrate shared by the rest of the package.

Dense matrices are plain ``numpy.ndarray`` objects (row-major float64). The
helpers here cover seeded random streams, the regression and fit routines used
by the analysis layer, a two-sample Welch test, and a central-difference
gradient oracle used by the test-suite.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np


class NumericsError(ValueError):
    """Base class for numerical-routine failures."""


class SingularDesign(NumericsError):
    pass


class DegenerateSample(NumericsError):
    pass


class NonFinite(NumericsError):
    pass


SLOPE_CAP = 50.0


# --------------------------------------------------------------------------
# random streams
# --------------------------------------------------------------------------

_PURPOSES: dict[str, int] = {}


def _purpose_key(purpose: str) -> int:
    # stable across interpreter runs, unlike hash()
    key = _PURPOSES.get(purpose)
    if key is None:
        key = int.from_bytes(purpose.encode("utf-8")[:8].ljust(8, b"\0"), "little")
        key ^= len(purpose) * 0x9E3779B97F4A7C15 & 0xFFFFFFFFFFFFFFFF
        _PURPOSES[purpose] = key
    return key


@dataclass(frozen=True)
class RngStream:
    """Seeded random stream with splittable named sub-streams.

    Backed by numpy's Philox counter-based bit generator so draws are bit-exact
    across platforms for a given seed and sub-stream path.
    """

    seed: int
    path: tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(ss))

    def child(self, purpose: str | int) -> RngStream:
        key = purpose if isinstance(purpose, int) else _purpose_key(purpose)
        return RngStream(self.seed, self.path + (int(key),))


def rng(seed: int, *purposes: str | int) -> np.random.Generator:
    """Return a fresh generator for ``seed`` split along ``purposes``."""
    stream = RngStream(seed)
    for p in purposes:
        stream = stream.child(p)
    return stream.generator()


# --------------------------------------------------------------------------
# elementary functions
# --------------------------------------------------------------------------


def sigmoid(x):
    """Logistic function, overflow-free for large ``|x|``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def finite_diff_grad(f: Callable[[np.ndarray], float], x, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.array(x, dtype=float, ndmin=1)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = float(f(x))
        flat[i] = old - eps
        fm = float(f(x))
        flat[i] = old
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise NonFinite(f"f is not finite near coordinate {i}")
        g[i] = (fp - fm) / (2.0 * eps)
    return grad


# --------------------------------------------------------------------------
# regression
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    coefficients: np.ndarray
    t_statistics: np.ndarray
    residual_variance: float


def ols_fit(design, targets) -> FitResult:
    """Ordinary least squares with per-coefficient t statistics.

    Raises
    ------
    SingularDesign
        If the design has too few rows or rank-deficient columns.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(targets, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("design and targets do not conform")
    n, p = X.shape
    if n < p + 1:
        raise SingularDesign(f"need at least {p + 1} rows, got {n}")
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise SingularDesign("design columns are linearly dependent")
    coef = np.linalg.solve(r, q.T @ y)
    resid = y - X @ coef
    dof = n - p
    s2 = float(resid @ resid) / dof
    r_inv = np.linalg.solve(r, np.eye(p))
    var = s2 * np.sum(r_inv * r_inv, axis=1)
    se = np.sqrt(var)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, coef / np.where(se > 0, se, 1.0), np.sign(coef) * np.inf)
    t = np.where(coef == 0, 0.0, t)
    return FitResult(coefficients=coef, t_statistics=t, residual_variance=max(s2, 0.0))


@dataclass(frozen=True)
class LogisticFit:
    bias: float
    slope: float
    separable: bool = False
    iterations: int = 0

    def __iter__(self):
        return iter((self.bias, self.slope))


def _logistic_nll(bias: float, slope: float, x: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    z = bias + slope * x
    # log(1 + e^z) - y z, stable
    return float(np.sum(w * (np.logaddexp(0.0, z) - y * z)))


def logistic_fit(x, y, weights=None, max_iter: int = 200, tol: float = 1e-8) -> LogisticFit:
    """Maximum-likelihood fit of ``P(y=1) = sigmoid(bias + slope * x)``.

    ``y`` may hold fractional values (proportions) when ``weights`` carries
    trial counts. Uses damped Newton steps; when the classes are separable the
    slope is capped at ``SLOPE_CAP`` in magnitude and ``separable`` is set.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
    if x.size != y.size or x.size != w.size:
        raise ValueError("x, y and weights must have equal length")
    if x.size < 2:
        raise ValueError("need at least two points")
    pos = float(np.sum(w * y))
    neg = float(np.sum(w * (1.0 - y)))
    if pos <= 0 or neg <= 0:
        raise ValueError("y must contain both classes")

    theta = np.zeros(2)
    X = np.column_stack([np.ones_like(x), x])
    nll = _logistic_nll(theta[0], theta[1], x, y, w)
    separable = False
    it = 0
    for it in range(1, max_iter + 1):
        p = sigmoid(X @ theta)
        grad = X.T @ (w * (p - y))
        if np.max(np.abs(grad)) < tol:
            break
        h = X.T @ (X * (w * p * (1.0 - p))[:, None]) + 1e-12 * np.eye(2)
        try:
            step = np.linalg.solve(h, grad)
        except np.linalg.LinAlgError:
            step = grad
        t = 1.0
        while t > 1e-10:
            cand = theta - t * step
            cand_nll = _logistic_nll(cand[0], cand[1], x, y, w)
            if cand_nll <= nll:
                break
            t *= 0.5
        else:
            break
        theta = cand
        nll = cand_nll
        if abs(theta[1]) > SLOPE_CAP:
            separable = True
            break
    if not separable:
        # Newton stalls on (quasi-)separated data once the gradient underflows;
        # saturated fits of every pure 0/1 point give that away
        p = sigmoid(X @ theta)
        pure = (w > 0) & ((y == 0.0) | (y == 1.0))
        separable = bool(
            np.any(pure & (y == 1.0)) and np.any(pure & (y == 0.0))
            and np.all(np.abs(p[pure] - y[pure]) < 1e-6)
        )
    if separable or abs(theta[1]) > SLOPE_CAP:
        # re-fit the bias at the capped slope
        slope = math.copysign(SLOPE_CAP, theta[1])
        bias = _bias_at_slope(slope, x, y, w)
        return LogisticFit(bias=bias, slope=slope, separable=True, iterations=it)
    return LogisticFit(bias=float(theta[0]), slope=float(theta[1]), separable=False, iterations=it)


def _bias_at_slope(slope: float, x, y, w) -> float:
    b = 0.0
    for _ in range(200):
        p = sigmoid(b + slope * x)
        g = float(np.sum(w * (p - y)))
        h = float(np.sum(w * p * (1.0 - p))) + 1e-12
        if abs(g) < 1e-10:
            break
        b -= float(np.clip(g / h, -5.0, 5.0))
    return b


# --------------------------------------------------------------------------
# Welch t-test
# --------------------------------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 10000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    lbeta = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    front = math.exp(lbeta + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, dof: float) -> float:
    """Two-sided tail probability ``P(|T| >= |t|)`` for Student's t."""
    if not math.isfinite(t):
        return 0.0
    x = dof / (dof + t * t)
    return betainc_regularized(0.5 * dof, 0.5, x)


def welch_t(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Welch's unequal-variance t test; returns ``(t, two_sided_p)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise DegenerateSample("each sample needs at least two values")
    va = float(np.var(a, ddof=1)) / a.size
    vb = float(np.var(b, ddof=1)) / b.size
    diff = float(a.mean() - b.mean())
    if va + vb == 0.0:
        if diff == 0.0:
            return 0.0, 1.0
        raise DegenerateSample("both samples have zero variance")
    t = diff / math.sqrt(va + vb)
    dof = (va + vb) ** 2 / (
        (va * va / (a.size - 1) if va > 0 else 0.0) + (vb * vb / (b.size - 1) if vb > 0 else 0.0)
    )
    return t, t_sf_two_sided(t, dof)


def welch_one_sided(a, b) -> tuple[float, float]:
    """One-sided Welch test of ``mean(a) > mean(b)``."""
    t, p2 = welch_t(a, b)
    p = 0.5 * p2 if t > 0 else 1.0 - 0.5 * p2
    return t, p
