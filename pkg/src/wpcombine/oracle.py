"""Independent checks: Monte Carlo sampling and arbitrary-precision evaluation.

Nothing here shares arithmetic with the double-precision combiners.  The
sampler simulates the defining probability directly; the high-precision
path re-derives the closed forms with :mod:`mpmath` at a caller-chosen
number of decimal digits.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import mpmath
import numpy as np

from .clustering import ClusterSet
from .core_model import DomainError, LogTau, NormalizedInverseWeights, WeightedPValues, normalize_inverse_weights

__all__ = ["MonteCarloEstimate", "mc_estimate", "hp_evaluate", "SHARD_SIZE"]

# Samples per independent stream.  Fixed, so results do not depend on workers.
SHARD_SIZE = 1 << 18
_MAX_RETRIES = 8


@dataclass(frozen=True)
class MonteCarloEstimate:
    estimate: float
    standard_error: float
    samples: int
    seed: int
    hits: int = 0
    shard_size: int = SHARD_SIZE
    generator: str = "Philox"


def _normalized(source) -> NormalizedInverseWeights:
    if isinstance(source, NormalizedInverseWeights):
        return source
    if isinstance(source, WeightedPValues):
        return normalize_inverse_weights(source)
    return normalize_inverse_weights(list(source))


def _shard_hits(seed_seq: np.random.SeedSequence, n: int, weights: np.ndarray, t: float) -> int:
    rng = np.random.Generator(np.random.Philox(seed_seq))
    hits = 0
    for start in range(0, n, 1 << 16):
        size = min(1 << 16, n - start)
        x = 1.0 - rng.random((size, weights.size))  # uniform on (0, 1]
        stat = -np.log(x) @ weights
        hits += int(np.count_nonzero(stat >= t))
    return hits


def mc_estimate(
    source: WeightedPValues | NormalizedInverseWeights | Sequence[float],
    t_threshold: LogTau | float,
    samples: int,
    seed: int = 0,
    workers: int = 1,
) -> MonteCarloEstimate:
    """Estimate ``Prob(sum_j (-ln x_j) / r_j >= t)`` for uniform ``x_j``.

    ``source`` supplies the weights only (a plain sequence is read as raw
    weights).  Samples are split into fixed-size shards, each driven by its
    own ``SeedSequence`` child, so the answer is the same for any ``workers``.
    """
    if samples < 1000:
        raise ValueError("mc_estimate needs at least 1000 samples")
    t = t_threshold.t if isinstance(t_threshold, LogTau) else float(t_threshold)
    r = _normalized(source)
    weights = np.array([1.0 / v for v in r.values])
    n_shards = -(-samples // SHARD_SIZE)
    children = np.random.SeedSequence(seed).spawn(n_shards)
    sizes = [min(SHARD_SIZE, samples - i * SHARD_SIZE) for i in range(n_shards)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            hits = sum(pool.map(lambda a: _shard_hits(a[0], a[1], weights, t), zip(children, sizes)))
    else:
        hits = sum(_shard_hits(c, n, weights, t) for c, n in zip(children, sizes))
    est = hits / samples
    return MonteCarloEstimate(est, math.sqrt(est * (1.0 - est) / samples), samples, seed, hits)


def _compositions(m: int, total: int):
    # stars and bars: choose the m - 1 bar positions among total + m - 1 slots
    for bars in itertools.combinations(range(total + m - 1), m - 1):
        edges = (-1,) + bars + (total + m - 1,)
        yield tuple(edges[i + 1] - edges[i] - 1 for i in range(m))


def _grouped_upper_tail(rates, counts, t):
    """Survival function of a sum of Gamma(counts[k], rates[k]) variables.

    Returns ``(value, largest |term|)``.
    """
    total = mpmath.mpf(0)
    biggest = mpmath.mpf(0)
    m = len(rates)
    for k in range(m):
        rk = rates[k]
        for g in _compositions(m, counts[k] - 1):
            coeff = mpmath.mpf(1)
            for j in range(m):
                if j == k:
                    continue
                nj, gj, rj = counts[j], g[j], rates[j]
                coeff *= mpmath.binomial(nj - 1 + gj, gj) * (-rk) ** gj * rj**nj
                coeff /= (rj - rk) ** (nj + gj)
            term = coeff * mpmath.gammainc(g[k] + 1, rk * t, regularized=True)
            biggest = max(biggest, abs(term))
            total += term
    return total, biggest


def _good_upper_tail(rates, t):
    total = mpmath.mpf(0)
    biggest = mpmath.mpf(0)
    for l, rl in enumerate(rates):
        lam = mpmath.fprod(rk / (rk - rl) for k, rk in enumerate(rates) if k != l)
        term = lam * mpmath.exp(-rl * t)
        biggest = max(biggest, abs(term))
        total += term
    return total, biggest


def hp_evaluate(
    r: NormalizedInverseWeights | ClusterSet | Sequence[float],
    t: LogTau | float,
    digits: int = 60,
) -> mpmath.mpf:
    """Combined P-value to ``digits`` significant decimal digits.

    Distinct inverse weights go through Good's formula.  A
    :class:`ClusterSet` is evaluated on its original members, grouping the
    exactly equal ones.  Inputs are taken as the exact binary values given,
    and the working precision grows by the digits lost to cancellation.
    """
    if digits < 30:
        raise ValueError("hp_evaluate needs digits >= 30")
    tv = t.t if isinstance(t, LogTau) else float(t)
    if isinstance(r, ClusterSet):
        raw = sorted(r.members())
        grouped = True
    else:
        raw = sorted(r.values if isinstance(r, NormalizedInverseWeights) else r)
        grouped = False
        if any(a == b for a, b in zip(raw, raw[1:])):
            raise DomainError("degenerate weights: use general_combine or expansion_combine")

    if grouped:
        groups = [(v, len(list(grp))) for v, grp in itertools.groupby(raw)]

    # Alternating terms cancel; rerun with that many guard digits so the
    # result carries ``digits`` significant digits.
    guard = 10
    for _ in range(_MAX_RETRIES):
        with mpmath.workdps(digits + guard):
            tm = mpmath.mpf(tv)
            if grouped:
                value, biggest = _grouped_upper_tail(
                    [mpmath.mpf(v) for v, _ in groups], [n for _, n in groups], tm
                )
            else:
                value, biggest = _good_upper_tail([mpmath.mpf(v) for v in raw], tm)
            if value == 0 or biggest == 0:
                lost = 0
            else:
                lost = int(mpmath.ceil(mpmath.log10(biggest / abs(value))))
        if lost + 10 <= guard:
            break
        guard = lost + 20
    else:
        raise ArithmeticError("high-precision evaluation did not settle")
    with mpmath.workdps(digits):
        return +value
