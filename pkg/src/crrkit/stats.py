"""Hypothesis-testing machinery for the certainty-hallucination analysis.

Two tests are reported per certainty type:

* Hypothesis 1 - one-sided Welch two-sample t-test that faithful
  responses carry higher certainty than hallucinated ones;
* Hypothesis 2 - point-biserial correlation between the binary
  hallucination label and the continuous certainty value, with a
  two-sided t-transform significance test.

The Student-t CDF underneath both p-values is computed here from scratch
via the regularized incomplete beta function, evaluated with a modified
Lentz continued fraction (relative tolerance 1e-12, at most 300
iterations). Non-convergence raises rather than returning a bad value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import DataError, NumericalError

_CF_EPS = 1e-12
_CF_MAX_ITER = 300
_TINY = 1e-300


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    degrees_of_freedom: float
    p_value_one_sided: float
    n_group1: int
    n_group0: int


@dataclass(frozen=True)
class PbccResult:
    r: float
    p_value_two_sided: float
    n: int


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta, by modified Lentz."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        # even step
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        # odd step
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise NumericalError(
        f"incomplete beta continued fraction did not converge for "
        f"a={a}, b={b}, x={x} within {_CF_MAX_ITER} iterations"
    )


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # Use the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) on the side where the
    # continued fraction converges fast.
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_cdf(t: float, df: float) -> float:
    """P(T <= t) for Student's t with ``df`` degrees of freedom."""
    if not df > 0:
        raise ValueError(f"degrees of freedom must be > 0, got {df}")
    if t == 0.0:
        return 0.5
    x = df / (df + t * t)
    tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x)
    return tail if t < 0 else 1.0 - tail


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs)


def _sample_variance(xs: Sequence[float], mean: float) -> float:
    return math.fsum((x - mean) ** 2 for x in xs) / (len(xs) - 1)


def welch_t_test_greater(
    sample_a: Sequence[float], sample_b: Sequence[float]
) -> TTestResult:
    """One-sided Welch test of mean(a) > mean(b), unequal variances.

    Degrees of freedom follow Welch-Satterthwaite. Raises
    :class:`NumericalError` when both samples are constant, which leaves
    the statistic undefined.
    """
    na, nb = len(sample_a), len(sample_b)
    if na < 2 or nb < 2:
        raise ValueError("each sample needs at least 2 observations")
    ma, mb = _mean(sample_a), _mean(sample_b)
    va = _sample_variance(sample_a, ma)
    vb = _sample_variance(sample_b, mb)
    sa2, sb2 = va / na, vb / nb
    se2 = sa2 + sb2
    if se2 == 0.0:
        raise NumericalError("both samples are constant; variance undefined")
    t = (ma - mb) / math.sqrt(se2)
    df = se2 * se2 / (sa2 * sa2 / (na - 1) + sb2 * sb2 / (nb - 1))
    p = 1.0 - student_t_cdf(t, df)
    return TTestResult(
        t_statistic=t,
        degrees_of_freedom=df,
        p_value_one_sided=p,
        n_group1=na,
        n_group0=nb,
    )


def point_biserial(binary: Sequence[int], values: Sequence[float]) -> PbccResult:
    """Point-biserial correlation between a 0/1 variable and reals.

    r = (M1 - M0) / s_n * sqrt(n1 * n0 / n^2) with the population
    (divide-by-n) standard deviation of ``values``; significance from the
    t-transform with n - 2 degrees of freedom, two-sided.
    """
    n = len(binary)
    if n != len(values):
        raise ValueError("binary and values must have equal length")
    if n < 3:
        raise ValueError("need at least 3 observations for a p-value")
    if any(b not in (0, 1) for b in binary):
        raise ValueError("binary variable must contain only 0 and 1")
    group1 = [v for b, v in zip(binary, values) if b == 1]
    group0 = [v for b, v in zip(binary, values) if b == 0]
    if not group1 or not group0:
        raise ValueError("both classes must be present in the binary variable")
    mean_all = _mean(values)
    var_pop = math.fsum((v - mean_all) ** 2 for v in values) / n
    if var_pop == 0.0:
        raise ValueError("values are all equal; correlation undefined")
    n1, n0 = len(group1), len(group0)
    r = (_mean(group1) - _mean(group0)) / math.sqrt(var_pop) * math.sqrt(n1 * n0 / n**2)
    r = max(-1.0, min(1.0, r))
    if 1.0 - r * r <= 0.0:
        p = 0.0
    else:
        t = r * math.sqrt((n - 2) / (1.0 - r * r))
        p = 2.0 * (1.0 - student_t_cdf(abs(t), n - 2))
    return PbccResult(r=r, p_value_two_sided=p, n=n)


def run_hypothesis_suite(
    scored: Iterable[Mapping[str, float]],
    threshold: float = 0.5,
    alpha: float = 0.01,
) -> dict:
    """Run both hypotheses for both certainty types over scored candidates.

    Every record must carry ``prob_certainty``, ``sem_certainty`` and
    either ``hallucination_prob`` or a precomputed 0/1 ``hallucinated``
    flag; the probability is dichotomized at ``threshold``. The report
    layout groups results per certainty type, one t-test and one
    point-biserial entry each.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    prob_c: list[float] = []
    sem_c: list[float] = []
    labels: list[int] = []
    for i, rec in enumerate(scored):
        try:
            prob_c.append(float(rec["prob_certainty"]))
            sem_c.append(float(rec["sem_certainty"]))
            if "hallucinated" in rec:
                labels.append(int(rec["hallucinated"]))
            else:
                labels.append(1 if float(rec["hallucination_prob"]) >= threshold else 0)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"scored record {i} is missing a required field: {exc}")

    n1 = sum(labels)
    n0 = len(labels) - n1
    failures = []
    if n0 < 2:
        failures.append("t-test needs >= 2 faithful candidates")
    if n1 < 2:
        failures.append("t-test needs >= 2 hallucinated candidates")
    if n0 < 1 or n1 < 1 or len(labels) < 3:
        failures.append("point-biserial needs both classes and n >= 3")
    if failures:
        raise DataError("hypothesis suite preconditions failed: " + "; ".join(failures))

    def one_type(values: list[float]) -> dict:
        faithful = [v for lab, v in zip(labels, values) if lab == 0]
        hallucinated = [v for lab, v in zip(labels, values) if lab == 1]
        t_res = welch_t_test_greater(faithful, hallucinated)
        pb_res = point_biserial(labels, values)
        return {
            "t_test": {
                "t_statistic": t_res.t_statistic,
                "degrees_of_freedom": t_res.degrees_of_freedom,
                "p_value_one_sided": t_res.p_value_one_sided,
                "n_faithful": t_res.n_group1,
                "n_hallucinated": t_res.n_group0,
                "significant": t_res.p_value_one_sided < alpha,
            },
            "pbcc": {
                "r": pb_res.r,
                "p_value_two_sided": pb_res.p_value_two_sided,
                "n": pb_res.n,
                "significant": pb_res.p_value_two_sided < alpha,
            },
        }

    return {
        "alpha": alpha,
        "threshold": threshold,
        "n_candidates": len(labels),
        "probabilistic": one_type(prob_c),
        "semantic": one_type(sem_c),
    }
