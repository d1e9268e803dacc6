"""Closed-form combined P-values: Fisher, Good and the grouped-weight case.

The grouped case sums, for every anchor cluster ``k`` and every composition
``g`` of ``n_k - 1`` into ``m`` non-negative parts, the term

    H(r_k t, g_k) / r_k**(g_k + 1) * prod_{j != k} alpha(g_j; j, k)

with ``alpha(g; j, k) = C(n_j - 1 + g, g) (-1)**g / (r_j - r_k)**(n_j + g)``.
Every term is tracked in log space with an explicit sign, which guards
against overflow; where the pieces fit comfortably in a double the term is
also formed as a direct product, which rounds far less.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

from .clustering import ClusterSet
from .core_model import DomainError, LogTau, NormalizedInverseWeights, h_function, log_h_function

__all__ = [
    "Diagnostics",
    "CompositionTerm",
    "GoodResult",
    "GeneralResult",
    "fisher_combine",
    "good_combine",
    "general_combine",
    "enumerate_compositions",
    "scaled_f_tilde",
    "cancellation_index",
]

_TINY = sys.float_info.min
# |log| below which a product is formed directly rather than through exp
_SAFE_LOG = 600.0


def _t_value(t: LogTau | float) -> float:
    return t.t if isinstance(t, LogTau) else float(t)


def cancellation_index(terms: Sequence[float], result: float) -> float:
    """Decimal digits lost summing ``terms`` to ``result``."""
    biggest = max((abs(x) for x in terms), default=0.0)
    if biggest == 0.0:
        return 0.0
    return math.log10(biggest / max(abs(result), _TINY))


@dataclass(frozen=True)
class Diagnostics:
    terms: tuple[float, ...]
    max_abs_term: float
    cancellation_index: float
    nested_terms: tuple[float, ...] = ()

    @classmethod
    def of(cls, terms: Sequence[float], result: float, nested_terms: Sequence[float] = ()) -> "Diagnostics":
        terms = tuple(terms)
        return cls(
            terms=terms,
            max_abs_term=max((abs(x) for x in terms), default=0.0),
            cancellation_index=cancellation_index(terms, result),
            nested_terms=tuple(nested_terms),
        )


@dataclass(frozen=True)
class CompositionTerm:
    k: int
    g: tuple[int, ...]
    coefficient: float
    contribution: float


class GoodResult(NamedTuple):
    combined_p: float
    coefficients: tuple[float, ...]
    diagnostics: Diagnostics


class GeneralResult(NamedTuple):
    combined_p: float
    terms: tuple[CompositionTerm, ...]
    diagnostics: Diagnostics


def fisher_combine(t: LogTau | float, L: int) -> float:
    """Fisher's combined P-value ``H(t, L - 1)``, ``t = sum(-ln p_i)``."""
    if L < 1:
        raise DomainError("L must be at least 1")
    return h_function(_t_value(t), L - 1)


def _inverse_weight_values(r: NormalizedInverseWeights | Sequence[float]) -> tuple[float, ...]:
    values = r.values if isinstance(r, NormalizedInverseWeights) else tuple(sorted(r))
    for a, b in zip(values, values[1:]):
        if a == b:
            raise DomainError("degenerate weights: use general_combine or expansion_combine")
    return values


def good_combine(r: NormalizedInverseWeights | Sequence[float], t: LogTau | float) -> GoodResult:
    """Good's formula ``sum_l Lambda_l exp(-r_l t)`` for distinct inverse weights.

    Terms are reported in ascending order of ``r``.  Nearly equal inverse
    weights make the terms huge and alternating; the diagnostics expose
    this rather than hiding it.
    """
    values = _inverse_weight_values(r)
    tv = _t_value(t)
    logs = [math.log(v) for v in values]
    coefficients, terms = [], []
    for l, rl in enumerate(values):
        log_mag = math.fsum(
            logs[k] - math.log(abs(rk - rl)) for k, rk in enumerate(values) if k != l
        )
        # r_k - r_l < 0 exactly for the l smaller entries of the sorted list
        sign = -1.0 if l % 2 else 1.0
        coefficients.append(sign * math.exp(log_mag))
        terms.append(sign * math.exp(log_mag - rl * tv))
    p = math.fsum(terms)
    return GoodResult(p, tuple(coefficients), Diagnostics.of(terms, p))


def enumerate_compositions(m: int, total: int) -> Iterator[tuple[int, ...]]:
    """Yield all ``m``-vectors of non-negative integers summing to ``total``.

    Lexicographic order; there are ``C(total + m - 1, m - 1)`` of them.
    """
    if m < 1 or total < 0:
        raise ValueError("need m >= 1 and total >= 0")

    def rec(prefix: list[int], remaining: int, slots: int) -> Iterator[tuple[int, ...]]:
        if slots == 1:
            yield tuple(prefix) + (remaining,)
            return
        for g in range(remaining + 1):
            prefix.append(g)
            yield from rec(prefix, remaining - g, slots - 1)
            prefix.pop()

    yield from rec([], total, m)


def _log_alpha_table(centers, sizes, k, depth):
    """``(log|alpha|, sign, alpha)`` for every ``j != k`` and ``g <= depth``.

    ``alpha`` is the directly formed value, or ``None`` where it would leave
    the comfortable double range.
    """
    rk = centers[k]
    table = []
    for j, (rj, nj) in enumerate(zip(centers, sizes)):
        if j == k:
            table.append(None)
            continue
        gap = rj - rk
        log_gap = math.log(abs(gap))
        row = []
        for g in range(depth + 1):
            p = nj + g
            log_mag = math.lgamma(p) - math.lgamma(nj) - math.lgamma(g + 1) - p * log_gap
            negative = (g % 2 == 1) != (gap < 0 and p % 2 == 1)
            direct = None
            if abs(log_mag) < _SAFE_LOG:
                direct = (-1.0 if g % 2 else 1.0) * math.comb(p - 1, g) / gap**p
            row.append((log_mag, -1.0 if negative else 1.0, direct))
        table.append(row)
    return table


def _f_tilde_raw(centers, sizes, t):
    """All composition terms as ``(k, g, log|coef|, sign, coef, log H, H)``.

    ``coef`` and ``H`` are formed directly when safely representable (else
    ``None``); direct products round far less than exponentiated log sums.
    """
    m = len(centers)
    out = []
    for k in range(m):
        rk, nk = centers[k], sizes[k]
        alpha = _log_alpha_table(centers, sizes, k, nk - 1)
        log_rk = math.log(rk)
        log_h = [log_h_function(rk * t, gk) for gk in range(nk)]
        h = [h_function(rk * t, gk) if lh > -_SAFE_LOG else None for gk, lh in enumerate(log_h)]
        for g in enumerate_compositions(m, nk - 1):
            log_mag = -(g[k] + 1) * log_rk
            sign = 1.0
            direct = rk ** -(g[k] + 1) if abs(log_mag) < _SAFE_LOG else None
            for j in range(m):
                if j != k:
                    a, s, d = alpha[j][g[j]]
                    log_mag += a
                    sign *= s
                    direct = None if direct is None or d is None else direct * d
            if direct is not None and not abs(log_mag) < _SAFE_LOG:
                direct = None
            out.append((k, g, log_mag, sign, direct, log_h[g[k]], h[g[k]]))
    return out


def _check_centers(centers: Sequence[float]) -> None:
    for a, b in zip(centers, centers[1:]):
        if not a < b:
            raise DomainError("cluster centers must be pairwise distinct")


def scaled_f_tilde(
    centers: Sequence[float],
    sizes: Sequence[int],
    t: float,
    log_prefactor: float = 0.0,
) -> tuple[float, list[tuple[int, tuple[int, ...], float, float]]]:
    """``exp(log_prefactor) * F~(tau; sizes)`` and its composition terms.

    Each returned term is ``(k, g, coefficient, value)`` where ``value``
    already carries the prefactor; ``coefficient`` is the bare
    ``prod alpha / r_k**(g_k+1)`` part without ``H``.
    """
    _check_centers(centers)
    pref = math.exp(log_prefactor) if abs(log_prefactor) < _SAFE_LOG else None
    terms = []
    for k, g, log_mag, sign, coef, log_h, h in _f_tilde_raw(centers, sizes, t):
        log_value = log_mag + log_h + log_prefactor
        if coef is not None and h is not None and pref is not None and log_value > -_SAFE_LOG:
            value = coef * h * pref
        else:
            value = sign * math.exp(log_value)
            if coef is None:
                coef = sign * math.exp(log_mag)
        terms.append((k, g, coef, value))
    return math.fsum(v for *_, v in terms), terms


def _log_prefactor(values: Sequence[float]) -> float:
    return math.fsum(math.log(v) for v in values)


def general_combine(cs: ClusterSet, t: LogTau | float) -> GeneralResult:
    """Exact combined P-value for clusters of identical inverse weights.

    ``diagnostics.terms`` holds one summed contribution per anchor cluster;
    ``diagnostics.nested_terms`` holds the same anchors with only the
    leading factors ``prod_{l<=k} r_l**n_l`` of the prefactor applied, which
    are the summands of the nested accumulation
    ``S <- S * r_k**n_k + d_k`` over ``k``.
    """
    if not cs.zero_spread:
        raise DomainError("general_combine needs zero deviations; use expansion_combine")
    tv = _t_value(t)
    centers, sizes = cs.centers, cs.sizes
    log_pref = _log_prefactor(cs.members())
    p, raw_terms = scaled_f_tilde(centers, sizes, tv, log_pref)

    terms = tuple(CompositionTerm(k, g, c, v) for k, g, c, v in raw_terms)
    per_anchor = [math.fsum(x.contribution for x in terms if x.k == k) for k in range(cs.m)]
    log_block = [n * math.log(c) for c, n in zip(centers, sizes)]
    nested = []
    for k in range(cs.m):
        tail = math.fsum(log_block[k + 1 :])
        nested.append(per_anchor[k] * math.exp(-tail))
    return GeneralResult(p, terms, Diagnostics.of(per_anchor, p, nested))
