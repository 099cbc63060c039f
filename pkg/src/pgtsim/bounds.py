"""Closed-form rates, thresholds and auxiliary quantities of the lower-bound argument.

Rates are test counts divided by n. All formulas are evaluated in double
precision; binomial coefficients go through log-gamma.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .core import LOG2, LOG2_SQ, round_half_up


def sufficient_rate(lam: float, eps: float = 0.0) -> float:
    """Test rate achieved by near-constant tests-per-item + COMP, capped by individual testing."""
    if lam <= 0 or eps < 0:
        raise ValueError("need lambda > 0 and eps >= 0")
    return min(1.0, (1.0 + eps) * lam / LOG2_SQ)


def necessary_rate(lam: float, eps: float = 0.0) -> float:
    """Test rate below which every scheme fails with probability 1 - o(1)."""
    if lam <= 0 or not 0 <= eps < 1:
        raise ValueError("need lambda > 0 and eps in [0, 1)")
    return (1.0 - eps) * lam / (lam + LOG2_SQ)


def log2_binomial(n: int, k: int) -> float:
    if not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n")
    return (math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)) / LOG2


def counting_rate(n: int, k: int) -> float:
    """log2 C(n, k) / n, the counting-bound test rate."""
    return max(0.0, log2_binomial(n, k)) / n


def crossover_p(n: int) -> float:
    """Conjectured defect probability below which pooling beats individual testing."""
    if n <= 1:
        raise ValueError("need n > 1")
    return LOG2_SQ / math.log(n)


def lp_term(x: int, p: float) -> float:
    # log1p keeps precision when (1-p)^(x-1) is tiny
    return x * math.log1p(-((1.0 - p) ** (x - 1)))


def default_x_cap(p: float, n: int | None = None) -> int:
    cap = math.ceil(10 * LOG2 / p)
    cap = max(cap, 2)
    return cap if n is None else max(2, min(n, cap))


def lp_min(p: float, x_cap: int | None = None) -> tuple[int, float]:
    """Minimise x * log(1 - (1-p)^(x-1)) over integers x = 2..x_cap.

    Ties go to the smaller x. Returns (argmin, value).
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    x_cap = default_x_cap(p) if x_cap is None else x_cap
    if x_cap < 2:
        raise ValueError("x_cap must be >= 2")
    best_x, best = 2, lp_term(2, p)
    for x in range(3, x_cap + 1):
        v = lp_term(x, p)
        if v < best:
            best_x, best = x, v
    return best_x, best


def lstar_lower(T: int, n: int, eps: float, gamma: float, p: float,
                x_cap: int | None = None) -> float:
    """Lower bound on the per-item disguise probability, exp((1+gamma) T L_p / (eps n))."""
    if not 0 < eps < 1 or gamma <= 0:
        raise ValueError("need eps in (0, 1) and gamma > 0")
    _, lp = lp_min(p, x_cap if x_cap is not None else default_x_cap(p, n))
    return math.exp((1.0 + gamma) * T * lp / (eps * n))


def z_value(p: float) -> float:
    """Test-size scale z = 2 / log(1/(1-p))."""
    return 2.0 / -math.log1p(-p)


def t_max(n: int) -> float:
    """Very-present threshold: items in more than log^3 n tests."""
    return math.log(n) ** 3


def n_vp_upper(n: int, p: float) -> float:
    """Upper bound n z / log^2 n on the number of very-present items."""
    return n * z_value(p) / math.log(n) ** 2


@dataclass(frozen=True)
class WLower:
    value: float
    z: float
    t_max: float
    n_vp_upper: float

    @property
    def binding(self) -> bool:
        # the formula is asymptotic; a non-positive value says nothing at this n
        return self.value > 0


def w_lower(n: int, eps: float, gamma: float, p: float) -> WLower:
    """Lower bound on the size of the independent disguise set, reported unclamped."""
    if not 0 < eps < 1 or gamma <= 0 or not 0 < p < 1 or n < 3:
        raise ValueError("need eps in (0,1), gamma > 0, p in (0,1), n >= 3")
    z = z_value(p)
    log_n = math.log(n)
    num = gamma * eps * n / (1.0 + gamma) - n * z / log_n ** 2
    return WLower(num / (z ** 2 * log_n ** 8), z, t_max(n), n_vp_upper(n, p))


def expected_disguised_conjecture(T: int, n: int, p: float,
                                  x_cap: int | None = None) -> tuple[float, float]:
    """(n exp((T/n) L_p), n 2^(-(T/n) log2 / p)) for the mean number of disguised items."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    _, lp = lp_min(p, x_cap if x_cap is not None else default_x_cap(p, n))
    rate = T / n
    return n * math.exp(rate * lp), n * 2.0 ** (-rate * LOG2 / p)


@dataclass(frozen=True)
class BoundReport:
    lam: float
    n: int
    alpha: float
    sufficient_rate: float
    necessary_rate: float
    counting_rate: float
    crossover_p: float
    lp_value: float
    lp_argmin: int
    lstar_lower: float
    w_lower: float
    w_lower_binding: bool
    z: float
    t_max: float
    n_vp_upper: float
    e_d_conjecture: float
    e_d_simplified: float

    def to_dict(self) -> dict:
        return asdict(self)


def bound_report(n: int, lam: float, eps_upper: float = 0.1, eps_lower: float = 0.1,
                 gamma: float = 0.1, alpha: float | None = None) -> BoundReport:
    """Every bound quantity at one (n, lambda).

    The lower-bound argument sets T = (1 - eps) n, so the T-dependent
    quantities use eps = 1 - alpha, with alpha defaulting to the necessary rate.
    """
    p = lam / math.log(n)
    if not 0 < p < 1:
        raise ValueError("lambda / log n must lie in (0, 1)")
    k = min(max(round_half_up(lam * n / math.log(n)), 1), n - 1)
    if alpha is None:
        alpha = necessary_rate(lam, eps_lower)
    T = round_half_up(alpha * n)
    eps_stop = 1.0 - alpha
    argmin, lp = lp_min(p, default_x_cap(p, n))
    w = w_lower(n, eps_stop, gamma, p)
    e_exact, e_simple = expected_disguised_conjecture(T, n, p)
    return BoundReport(
        lam=lam, n=n, alpha=alpha,
        sufficient_rate=sufficient_rate(lam, eps_upper),
        necessary_rate=necessary_rate(lam, eps_lower),
        counting_rate=counting_rate(n, k),
        crossover_p=crossover_p(n),
        lp_value=lp, lp_argmin=argmin,
        lstar_lower=lstar_lower(T, n, eps_stop, gamma, p),
        w_lower=w.value, w_lower_binding=w.binding,
        z=w.z, t_max=w.t_max, n_vp_upper=w.n_vp_upper,
        e_d_conjecture=e_exact, e_d_simplified=e_simple,
    )
