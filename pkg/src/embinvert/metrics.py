"""Reconstruction scores (BLEU-1, ROUGE-1), trial aggregation and Welch's t-test."""
from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Sequence

from .errors import DegenerateVariance, EmptyReference, TooFewTrials


def clipped_overlap(candidate: Sequence[Hashable], reference: Sequence[Hashable]) -> int:
    """Size of the multiset intersection: sum over tokens of min(count_ref, count_cand)."""
    cand, ref = Counter(candidate), Counter(reference)
    return sum(min(c, ref[tok]) for tok, c in cand.items())


def brevity_penalty(cand_len: int, ref_len: int) -> float:
    if cand_len == 0:
        return 0.0
    if cand_len > ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / cand_len)


def bleu1(candidate: Sequence[Hashable], reference: Sequence[Hashable]) -> float:
    """Clipped unigram precision times the brevity penalty; empty candidates score 0."""
    if not candidate:
        return 0.0
    precision = clipped_overlap(candidate, reference) / len(candidate)
    return brevity_penalty(len(candidate), len(reference)) * precision


def rouge1(candidate: Sequence[Hashable], reference: Sequence[Hashable]) -> float:
    """Clipped unigram recall."""
    if not reference:
        raise EmptyReference("ROUGE-1 needs a non-empty reference")
    return clipped_overlap(candidate, reference) / len(reference)


METRICS: dict[str, Callable] = {"bleu1": bleu1, "rouge1": rouge1}


def corpus_score(pairs: Iterable[tuple[Sequence, Sequence]], metric: str | Callable = "bleu1") -> float:
    fn = METRICS[metric] if isinstance(metric, str) else metric
    scores = [fn(c, r) for c, r in pairs]
    return math.fsum(scores) / len(scores) if scores else 0.0


@dataclass(frozen=True)
class TrialStats:
    trials: tuple[float, ...]
    mean: float
    stderr: float

    @property
    def n_trials(self) -> int:
        return len(self.trials)


def aggregate_trials(scores: Sequence[float]) -> TrialStats:
    """Mean and Bessel-corrected standard error."""
    n = len(scores)
    if n < 2:
        raise TooFewTrials(f"need at least 2 trials, got {n}")
    mean = math.fsum(scores) / n
    var = math.fsum((x - mean) ** 2 for x in scores) / (n - 1)
    mean = min(max(mean, min(scores)), max(scores))
    return TrialStats(tuple(float(x) for x in scores), mean, math.sqrt(var / n))


# -- t distribution -------------------------------------------------------------

def _betacf(a: float, b: float, x: float, max_iter: int = 500, eps: float = 1e-15) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(ln_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(ln_front) * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    t2 = t * t
    if t2 < df:
        # df / (df + t^2) rounds to 1 for small |t|; use the complementary form
        p = 1.0 - betainc_regularized(0.5, df / 2.0, t2 / (df + t2))
    else:
        p = betainc_regularized(df / 2.0, 0.5, df / (df + t2))
    return min(1.0, max(0.0, p))


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    degrees_of_freedom: float
    p_value: float
    degenerate: bool = False

    @property
    def significant_at_005(self) -> bool:
        return self.p_value < 0.05


def ttest_unpaired(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom.

    When both samples have zero variance the statistic is undefined: a
    :class:`DegenerateVariance` warning is issued and the result is flagged,
    with p = 1 for equal means and p = 0 otherwise.
    """
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise TooFewTrials("each sample needs at least 2 observations")
    ma, mb = math.fsum(a) / na, math.fsum(b) / nb
    va = math.fsum((x - ma) ** 2 for x in a) / (na - 1)
    vb = math.fsum((x - mb) ** 2 for x in b) / (nb - 1)
    sa, sb = va / na, vb / nb
    if sa + sb == 0.0:
        warnings.warn("both samples have zero variance", DegenerateVariance, stacklevel=2)
        if ma == mb:
            return TTestResult(0.0, float(na + nb - 2), 1.0, True)
        return TTestResult(math.copysign(math.inf, ma - mb), float(na + nb - 2), 0.0, True)
    t = (ma - mb) / math.sqrt(sa + sb)
    # Welch-Satterthwaite written with variance shares so tiny variances cannot underflow
    ua, ub = sa / (sa + sb), sb / (sa + sb)
    df = 1.0 / (ua * ua / (na - 1) + ub * ub / (nb - 1))
    return TTestResult(t, df, t_two_sided_p(t, df))
