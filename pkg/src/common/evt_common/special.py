"""
Special functions used by the distribution layer.

Vectorized over numpy arrays. The error function follows the Cephes
rational approximations; ln Gamma uses the Lanczos (g=7, n=9) series and the
regularized incomplete gamma switches between the power series and the
Legendre continued fraction at x = a + 1.
"""

import math

import numpy as np
import numpy.typing as npt

ArrayLike = npt.ArrayLike

MAXLOG = 7.09782712893383996843e2
MACHEP = 1.11022302462515654042e-16
_TINY = 1.0e-300
_SQRT1_2 = 7.07106781186547524401e-1

# Cephes erf/erfc coefficients, highest degree first.
_ERF_T = (
    9.60497373987051638749e0,
    9.00260197203842689217e1,
    2.23200534594684319226e3,
    7.00332514112805075473e3,
    5.55923013010394962768e4,
)
_ERF_U = (
    1.00000000000000000000e0,
    3.35617141647503099647e1,
    5.21357949780152679795e2,
    4.59432382970980127987e3,
    2.26290000613890934246e4,
    4.92673942608635921086e4,
)
_ERFC_P = (
    2.46196981473530512524e-10,
    5.64189564831068821977e-1,
    7.46321056442269912687e0,
    4.86371970985681366614e1,
    1.96520832956077098242e2,
    5.26445194995477358631e2,
    9.34528527171957607540e2,
    1.02755188689515710272e3,
    5.57535335369399327526e2,
)
_ERFC_Q = (
    1.0,
    1.32281951154744992508e1,
    8.67072140885989742329e1,
    3.54937778887819891062e2,
    9.75708501743205489753e2,
    1.82390916687909736289e3,
    2.24633760818710981792e3,
    1.65666309194161350182e3,
    5.57535340817727675546e2,
)
_ERFC_R = (
    5.64189583547755073984e-1,
    1.27536670759978104416e0,
    5.01905042251180477414e0,
    6.16021097993053585195e0,
    7.40974269950448939160e0,
    2.97886665372100240670e0,
)
_ERFC_S = (
    1.00000000000000000000e0,
    2.26052863220117276590e0,
    9.39603524938001434673e0,
    1.20489539808096656605e1,
    1.70814450747565897222e1,
    9.60896809063285878198e0,
    3.36907645100081516050e0,
)

_LANCZOS_G = 7.0
_LANCZOS = (
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


def _polevl(x: np.ndarray, coef: tuple[float, ...]) -> np.ndarray:
    result = np.zeros_like(x)
    for c in coef:
        result = result * x + c
    return result


def _scalar_or_array(values: np.ndarray) -> float | np.ndarray:
    return float(values) if values.ndim == 0 else values


def _erf_small(a: np.ndarray) -> np.ndarray:
    z = a * a
    return a * _polevl(z, _ERF_T) / _polevl(z, _ERF_U)


def _erfc_large(a: np.ndarray) -> np.ndarray:
    """erfc for |a| >= 1."""
    x = np.abs(a)
    z = np.exp(np.maximum(-a * a, -MAXLOG))
    mid = x < 8.0
    p = np.where(mid, _polevl(x, _ERFC_P), _polevl(x, _ERFC_R))
    q = np.where(mid, _polevl(x, _ERFC_Q), _polevl(x, _ERFC_S))
    y = z * p / q
    y = np.where(a * a > MAXLOG, 0.0, y)
    return np.where(a < 0, 2.0 - y, y)


def erf(a: ArrayLike) -> float | np.ndarray:
    """Error function."""
    a = np.asarray(a, dtype=float)
    small = np.abs(a) <= 1.0
    out = np.where(small, _erf_small(np.where(small, a, 0.0)), 0.0)
    big = np.where(small, 1.0, a)
    out = np.where(small, out, 1.0 - _erfc_large(big))
    return _scalar_or_array(out)


def erfc(a: ArrayLike) -> float | np.ndarray:
    """Complementary error function, accurate in the far right tail."""
    a = np.asarray(a, dtype=float)
    small = np.abs(a) < 1.0
    out_small = 1.0 - _erf_small(np.where(small, a, 0.0))
    out_big = _erfc_large(np.where(small, 1.0, a))
    return _scalar_or_array(np.where(small, out_small, out_big))


def ndtr(x: ArrayLike) -> float | np.ndarray:
    """Standard normal CDF without input validation (internal hot path)."""
    x = np.asarray(x, dtype=float)
    return _scalar_or_array(0.5 * np.asarray(erfc(-x * _SQRT1_2)))


def std_normal_cdf(x: ArrayLike) -> float | np.ndarray:
    """
    Standard normal CDF Phi(x) = erfc(-x / sqrt(2)) / 2.

    Raises:
        ValueError: if any input is not finite.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("std_normal_cdf requires finite input")
    return ndtr(x)


def _ln_gamma_unchecked(x: np.ndarray) -> np.ndarray:
    reflect = x < 0.5
    z = np.where(reflect, 1.0 - x, x) - 1.0
    series = np.full_like(z, _LANCZOS[0])
    for i, c in enumerate(_LANCZOS[1:], start=1):
        series = series + c / (z + i)
    t = z + _LANCZOS_G + 0.5
    lg = 0.5 * math.log(2.0 * math.pi) + (z + 0.5) * np.log(t) - t + np.log(series)
    with np.errstate(divide="ignore", invalid="ignore"):
        reflected = math.log(math.pi) - np.log(np.abs(np.sin(math.pi * x))) - lg
    return np.where(reflect, reflected, lg)


def ln_gamma(x: ArrayLike) -> float | np.ndarray:
    """
    Natural log of the gamma function for positive arguments.

    Raises:
        ValueError: if any argument is not strictly positive.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(x > 0):
        raise ValueError("ln_gamma is only defined here for x > 0")
    return _scalar_or_array(_ln_gamma_unchecked(x))


def _gamma_series(a: np.ndarray, x: np.ndarray, max_iter: int) -> np.ndarray:
    """Lower regularized P(a, x) by power series (converges fast for x < a + 1)."""
    ap = a.copy()
    term = 1.0 / a
    total = term.copy()
    active = np.ones(a.shape, dtype=bool)
    for _ in range(max_iter):
        ap = ap + 1.0
        term = np.where(active, term * x / ap, 0.0)
        total = total + term
        active = np.abs(term) > np.abs(total) * MACHEP
        if not active.any():
            break
    log_front = a * np.log(x) - x - _ln_gamma_unchecked(a)
    return total * np.exp(log_front)


def _gamma_continued_fraction(a: np.ndarray, x: np.ndarray, max_iter: int) -> np.ndarray:
    """Upper regularized Q(a, x) by modified Lentz (converges fast for x >= a + 1)."""
    b = x + 1.0 - a
    c = np.full_like(x, 1.0 / _TINY)
    d = 1.0 / b
    h = d.copy()
    active = np.ones(a.shape, dtype=bool)
    for i in range(1, max_iter + 1):
        an = -i * (i - a)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < _TINY, _TINY, d)
        c = b + an / c
        c = np.where(np.abs(c) < _TINY, _TINY, c)
        d = 1.0 / d
        delta = np.where(active, d * c, 1.0)
        h = h * delta
        active = np.abs(delta - 1.0) > MACHEP
        if not active.any():
            break
    log_front = a * np.log(x) - x - _ln_gamma_unchecked(a)
    return np.exp(log_front) * h


def _regularized_gamma(a: ArrayLike, x: ArrayLike, upper: bool) -> np.ndarray:
    a, x = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(x, dtype=float))
    if not np.all(a > 0):
        raise ValueError("incomplete gamma requires a > 0")
    if np.any(x < 0):
        raise ValueError("incomplete gamma requires x >= 0")
    out = np.zeros(a.shape) if not upper else np.ones(a.shape)
    positive = x > 0
    use_series = positive & (x < a + 1.0)
    use_fraction = positive & ~use_series
    if use_series.any():
        p = _gamma_series(a[use_series], x[use_series], max_iter=1000)
        out[use_series] = 1.0 - p if upper else p
    if use_fraction.any():
        q = _gamma_continued_fraction(a[use_fraction], x[use_fraction], max_iter=1000)
        out[use_fraction] = q if upper else 1.0 - q
    return np.clip(out, 0.0, 1.0)


def regularized_gamma_p(a: ArrayLike, x: ArrayLike) -> float | np.ndarray:
    """Regularized lower incomplete gamma P(a, x)."""
    return _scalar_or_array(_regularized_gamma(a, x, upper=False))


def regularized_gamma_q(a: ArrayLike, x: ArrayLike) -> float | np.ndarray:
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    return _scalar_or_array(_regularized_gamma(a, x, upper=True))


def chi2_cdf(x: float, df: int) -> float:
    """Chi-square CDF with `df` degrees of freedom."""
    if x <= 0:
        return 0.0
    return float(regularized_gamma_p(df / 2.0, x / 2.0))


def _chi2_logpdf(x: float, df: int) -> float:
    k = df / 2.0
    return (k - 1.0) * math.log(x) - x / 2.0 - k * math.log(2.0) - float(ln_gamma(k))


def chi2_quantile(p: float, df: int, tol: float = 1e-12, max_iter: int = 200) -> float:
    """
    Lower-tail chi-square quantile by Newton steps safeguarded with bisection.

    Raises:
        ValueError: p outside (0, 1) or df < 1.
    """
    if not (0.0 < p < 1.0):
        raise ValueError(f"chi2_quantile requires 0 < p < 1, got {p}")
    if df < 1 or int(df) != df:
        raise ValueError(f"chi2_quantile requires a positive integer df, got {df}")

    lo, hi = 0.0, max(1.0, float(df))
    while chi2_cdf(hi, df) < p:
        lo, hi = hi, hi * 2.0

    # Wilson-Hilferty start, clamped into the bracket
    z = math.sqrt(2.0) * _inverse_erf(2.0 * p - 1.0)
    h = 2.0 / (9.0 * df)
    x = df * max(1.0 - h + z * math.sqrt(h), 1e-3) ** 3
    if not (lo < x < hi):
        x = 0.5 * (lo + hi)

    for _ in range(max_iter):
        f = chi2_cdf(x, df) - p
        if abs(f) < tol:
            return x
        if f > 0:
            hi = x
        else:
            lo = x
        step_ok = False
        if x > 0:
            dens = math.exp(_chi2_logpdf(x, df))
            if dens > 0:
                candidate = x - f / dens
                step_ok = lo < candidate < hi
        x = candidate if step_ok else 0.5 * (lo + hi)
        if hi - lo < tol * max(1.0, x):
            return x
    return x


def _inverse_erf(y: float) -> float:
    """Rough inverse error function used only for starting points."""
    if y <= -1.0:
        return -6.0
    if y >= 1.0:
        return 6.0
    a = 0.147
    ln = math.log(1.0 - y * y)
    first = 2.0 / (math.pi * a) + ln / 2.0
    return math.copysign(math.sqrt(math.sqrt(first * first - ln / a) - first), y)
