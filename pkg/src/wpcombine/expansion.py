"""Stable combined P-values for nearly degenerate weights.

Each cluster's members are written as ``center + deviation`` and the product
over members is expanded in the cluster moments ``Y[k][g]``.  A term of the
expansion is a multiset of factors ``(k, g)`` with ``g >= 2``; its
coefficient is ``prod Y[k][g]**mult / mult!`` and it multiplies the grouped
closed form evaluated at multiplicities shifted by ``sum g * mult`` per
cluster.  Because the centers are well separated, those closed forms do not
suffer from the cancellation that plagues the member-by-member formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

from .clustering import ClusterSet, MomentTable, moments
from .core_model import LogTau
from .exact import _log_prefactor, _t_value, cancellation_index, scaled_f_tilde

__all__ = [
    "ExpansionTerm",
    "CombinedResult",
    "generate_terms",
    "expansion_combine",
    "good_to_fisher_limit_check",
    "LimitCheck",
    "DEFAULT_ORDER",
    "MAX_ORDER",
]

DEFAULT_ORDER = 4
MAX_ORDER = 8
# orders max_order + 1 .. max_order + BOUND_ORDERS feed the truncation bound
BOUND_ORDERS = 2


@dataclass(frozen=True)
class ExpansionTerm:
    """One product of moments and the shifted closed form it multiplies.

    ``value`` includes the inverse-weight prefactor, so the values of all
    retained terms add up to the combined P-value.  It is ``None`` on the
    skeletons returned by :func:`generate_terms`.
    """

    order: int
    factors: tuple[tuple[int, int, int], ...]  # (cluster k, moment g, mult)
    coefficient: float
    shifted: tuple[int, ...]
    value: float | None = None

    @property
    def clusters(self) -> frozenset[int]:
        return frozenset(k for k, _, _ in self.factors)


@dataclass(frozen=True)
class CombinedResult:
    combined_p: float
    terms: tuple[ExpansionTerm, ...]
    prefactor: float
    truncation_bound: float
    cancellation_index: float
    method: str = "expansion"
    bound_terms: tuple[ExpansionTerm, ...] = ()
    warnings: tuple[str, ...] = field(default=())

    @property
    def order_insufficient(self) -> bool:
        return self.truncation_bound > abs(self.combined_p)

    def order_totals(self) -> dict[int, float]:
        totals: dict[int, list[float]] = {}
        for term in self.terms:
            totals.setdefault(term.order, []).append(term.value)
        return {order: math.fsum(v) for order, v in sorted(totals.items())}


def generate_terms(cs: ClusterSet, Y: MomentTable, max_order: int) -> list[ExpansionTerm]:
    """Every factor multiset of total order ``<= max_order``.

    Clusters whose members all coincide with the center have vanishing
    moments and contribute no factors.  Terms come out sorted by order.
    """
    if max_order < 0:
        raise ValueError("max_order must be non-negative")
    if max_order > Y.g_max and max_order >= 2:
        raise ValueError(f"moment table only reaches order {Y.g_max}")
    base = cs.sizes
    kinds = [
        (k, g)
        for k, c in enumerate(cs.clusters)
        if not c.degenerate
        for g in range(2, max_order + 1)
    ]

    out: list[ExpansionTerm] = []

    def rec(i, remaining, chosen):
        if i == len(kinds):
            shifted = list(base)
            coefficient = 1.0
            for k, g, mult in chosen:
                shifted[k] += g * mult
                coefficient *= Y.get(k, g) ** mult / math.factorial(mult)
            out.append(
                ExpansionTerm(
                    order=max_order - remaining,
                    factors=tuple(chosen),
                    coefficient=coefficient,
                    shifted=tuple(shifted),
                )
            )
            return
        k, g = kinds[i]
        rec(i + 1, remaining, chosen)
        for mult in range(1, remaining // g + 1):
            rec(i + 1, remaining - g * mult, chosen + [(k, g, mult)])

    rec(0, max_order, [])
    out.sort(key=lambda term: (term.order, len(term.clusters), term.factors))
    return out


def expansion_combine(cs: ClusterSet, t: LogTau | float, max_order: int = DEFAULT_ORDER) -> CombinedResult:
    """Combined P-value through order ``max_order`` of the moment expansion.

    The two following orders are evaluated as well and their absolute sum is
    reported as ``truncation_bound``.  With all deviations zero only the
    empty term survives and the result coincides with
    :func:`~wpcombine.exact.general_combine` bit for bit.
    """
    if not 0 <= max_order <= MAX_ORDER:
        raise ValueError(f"max_order must lie in [0, {MAX_ORDER}]")
    tv = _t_value(t)
    top = max_order + BOUND_ORDERS
    Y = moments(cs, max(2, top))
    centers = cs.centers
    # prefactor from the original inverse weights, never from powers of centers
    log_pref = _log_prefactor(cs.members())

    cache: dict[tuple[int, ...], tuple[float, float]] = {}

    def closed_form(shifted):
        if shifted not in cache:
            total, comps = scaled_f_tilde(centers, shifted, tv, log_pref)
            cache[shifted] = (total, max((abs(v) for *_, v in comps), default=0.0))
        return cache[shifted]

    kept, bound, biggest = [], [], 0.0
    for term in generate_terms(cs, Y, top):
        if term.coefficient == 0.0:
            value = 0.0
        else:
            total, peak = closed_form(term.shifted)
            value = term.coefficient * total
            if term.order <= max_order:
                biggest = max(biggest, abs(term.coefficient) * peak)
        term = replace(term, value=value)
        (kept if term.order <= max_order else bound).append(term)

    p = math.fsum(term.value for term in kept)
    truncation = math.fsum(abs(term.value) for term in bound)
    warnings = []
    if not 0.0 <= p <= 1.0:
        warnings.append(f"combined_p={p!r} outside [0, 1]: centers too close for double precision")
    if truncation > abs(p):
        warnings.append("order-insufficient: truncation bound exceeds the result")
    return CombinedResult(
        combined_p=p,
        terms=tuple(kept),
        prefactor=math.exp(log_pref),
        truncation_bound=truncation,
        cancellation_index=cancellation_index([biggest], p),
        bound_terms=tuple(bound),
        warnings=tuple(warnings),
    )


class LimitCheck(NamedTuple):
    good_value: float
    fisher_value: float
    difference: float


def good_to_fisher_limit_check(p1: float, p2: float, epsilon: float) -> LimitCheck:
    """Two-value Good formula at ``w1/w2 = 1 + epsilon`` against Fisher.

    The Good value is rearranged as
    ``p1 p2 [1 + ((1+eps) expm1(-eps ln p2/(1+eps)) - expm1(eps ln p1)) / eps]``
    so that small ``epsilon`` costs no precision.
    """
    if not (0.0 < p1 <= 1.0 and 0.0 < p2 <= 1.0):
        raise ValueError("P-values must lie in (0, 1]")
    if not epsilon > 0.0:
        raise ValueError("epsilon must be positive")
    l1, l2 = math.log(p1), math.log(p2)
    a = math.expm1(-epsilon * l2 / (1.0 + epsilon))
    b = math.expm1(epsilon * l1)
    good = p1 * p2 * (1.0 + ((1.0 + epsilon) * a - b) / epsilon)
    fisher = p1 * p2 * (1.0 - (l1 + l2))
    return LimitCheck(good, fisher, good - fisher)
