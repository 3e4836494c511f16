"""
标量特殊函数 (specfun)

职责：
  为整条流水线提供概率计算的底层函数，不依赖任何第三方库。
  • ln_gamma()          ← Lanczos 近似 (g=7, 9 个系数)
  • chi2_sf()           ← 卡方分布生存函数 = Q(df/2, x/2)
  • normal_cdf()        ← 标准正态分布函数
  • normal_quantile()   ← 有理逼近 + 一步 Newton 修正
  • poisson_pmf()       ← 对数空间计算，避免大 k 溢出
  • poisson_sf()        ← P(X > k)，直接求和

所有函数都是纯函数，可在任意线程并发调用。
"""

import logging
import math

from src.errors import DomainError

logger = logging.getLogger(__name__)

# ── Lanczos 系数 (g = 7, n = 9) ──────────────────────────────────────────────
_LANCZOS_G = 7.0
_LANCZOS_COEF: tuple[float, ...] = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LN_2PI = 0.5 * math.log(2.0 * math.pi)

# ── 逆正态有理逼近系数（相对误差约 1.15e-9） ────────────────────────────────
_Q_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
        1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_Q_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
        6.680131188771972e+01, -1.328068155288572e+01)
_Q_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
        -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_Q_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
        3.754408661907416e+00)
_Q_P_LOW = 0.02425

_EPS = 1e-15
_TINY = 1e-300


# ──────────────────────────────────────────────────────────────
# Gamma
# ──────────────────────────────────────────────────────────────

def ln_gamma(x: float) -> float:
    """
    ln Γ(x)，x > 0。

    x < 0.5 时用反射公式 Γ(x)Γ(1−x) = π / sin(πx)。
    """
    if not (x > 0.0) or math.isnan(x):
        raise DomainError(f"ln_gamma 要求 x > 0，收到 {x}")
    if math.isinf(x):
        return math.inf
    if x < 0.5:
        return math.log(math.pi / math.sin(math.pi * x)) - ln_gamma(1.0 - x)

    z = x - 1.0
    acc = _LANCZOS_COEF[0]
    for i in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LN_2PI + (z + 0.5) * math.log(t) - t + math.log(acc)


def _max_iterations(a: float) -> int:
    # 级数与连分式在 x ≈ a 附近都需要 O(√a) 项
    return 500 + int(50.0 * math.sqrt(a))


def _gamma_prefactor(a: float, x: float) -> float:
    return math.exp(-x + a * math.log(x) - ln_gamma(a))


def _lower_gamma_series(a: float, x: float) -> float:
    """P(a, x) 的级数展开，适用于 x < a + 1"""
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(_max_iterations(a)):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    else:
        logger.warning(f"⚠️ 不完全 Gamma 级数未收敛: a={a}, x={x}")
    return total * _gamma_prefactor(a, x)


def _upper_gamma_continued_fraction(a: float, x: float) -> float:
    """Q(a, x) 的连分式（修正 Lentz 算法），适用于 x ≥ a + 1"""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _max_iterations(a) + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        logger.warning(f"⚠️ 不完全 Gamma 连分式未收敛: a={a}, x={x}")
    return _gamma_prefactor(a, x) * h


def regularized_gamma_q(a: float, x: float) -> float:
    """正则化上不完全 Gamma 函数 Q(a, x) = Γ(a, x) / Γ(a)"""
    if not (a > 0.0):
        raise DomainError(f"regularized_gamma_q 要求 a > 0，收到 {a}")
    if not (x >= 0.0):
        raise DomainError(f"regularized_gamma_q 要求 x ≥ 0，收到 {x}")
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        q = 1.0 - _lower_gamma_series(a, x)
    else:
        q = _upper_gamma_continued_fraction(a, x)
    return min(1.0, max(0.0, q))


def chi2_sf(x: float, df: float) -> float:
    """P(Χ²_df > x)"""
    if not (df > 0.0):
        raise DomainError(f"chi2_sf 要求 df > 0，收到 {df}")
    if not (x >= 0.0):
        raise DomainError(f"chi2_sf 要求 x ≥ 0，收到 {x}")
    return regularized_gamma_q(0.5 * df, 0.5 * x)


# ──────────────────────────────────────────────────────────────
# 正态分布
# ──────────────────────────────────────────────────────────────

def normal_pdf(z: float) -> float:
    return math.exp(-0.5 * z * z - _HALF_LN_2PI)


def normal_cdf(z: float) -> float:
    """Φ(z)，用互补误差函数计算，尾部不丢精度"""
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _rational_quantile(p: float) -> float:
    if p < _Q_P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        num = ((((_Q_C[0] * q + _Q_C[1]) * q + _Q_C[2]) * q + _Q_C[3]) * q + _Q_C[4]) * q + _Q_C[5]
        den = (((_Q_D[0] * q + _Q_D[1]) * q + _Q_D[2]) * q + _Q_D[3]) * q + 1.0
        return num / den
    q = p - 0.5
    r = q * q
    num = (((((_Q_A[0] * r + _Q_A[1]) * r + _Q_A[2]) * r + _Q_A[3]) * r + _Q_A[4]) * r + _Q_A[5]) * q
    den = ((((_Q_B[0] * r + _Q_B[1]) * r + _Q_B[2]) * r + _Q_B[3]) * r + _Q_B[4]) * r + 1.0
    return num / den


def normal_quantile(p: float) -> float:
    """
    Φ⁻¹(p)，0 < p < 1。

    上半区用反对称 Φ⁻¹(p) = −Φ⁻¹(1−p)，使 Newton 修正总在下尾进行。
    """
    if not (0.0 < p < 1.0):
        raise DomainError(f"normal_quantile 要求 0 < p < 1，收到 {p}")
    if p == 0.5:
        return 0.0
    if p > 0.5:
        return -normal_quantile(1.0 - p)
    z = _rational_quantile(p)
    density = normal_pdf(z)
    if density > 0.0:
        z -= (normal_cdf(z) - p) / density
    return z


# ──────────────────────────────────────────────────────────────
# Poisson
# ──────────────────────────────────────────────────────────────

def _check_poisson_args(k: int, lam: float) -> None:
    if int(k) != k or k < 0:
        raise DomainError(f"Poisson 计数 k 必须是非负整数，收到 {k}")
    if not (lam > 0.0):
        raise DomainError(f"Poisson 均值 λ 必须 > 0，收到 {lam}")


def poisson_pmf(k: int, lam: float) -> float:
    _check_poisson_args(k, lam)
    k = int(k)
    return math.exp(k * math.log(lam) - lam - ln_gamma(k + 1.0))


def poisson_sf(k: int, lam: float) -> float:
    """
    P(X > k)。

    k < λ 时用 1 − Σ_{j≤k} pmf(j)；否则直接累加上尾，保留尾部的相对精度。
    """
    _check_poisson_args(k, lam)
    k = int(k)
    if k < lam:
        head = sum(poisson_pmf(j, lam) for j in range(k + 1))
        return min(1.0, max(0.0, 1.0 - head))

    term = poisson_pmf(k + 1, lam)
    total = 0.0
    j = k + 1
    while term > 0.0:
        total += term
        if term < total * 1e-17:
            break
        j += 1
        term *= lam / j
    return min(1.0, total)
