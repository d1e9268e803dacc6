"""Greedy closest-pair merging of normalized inverse weights.

Clusters are merged while the closest pair of current centers is within the
radius ``eta``.  A center is always the occurrence-weighted mean of the
original values it holds, so deviations from it sum to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .core_model import NormalizedInverseWeights

__all__ = ["Cluster", "ClusterSet", "MomentTable", "cluster", "moments", "DEFAULT_ETA"]

DEFAULT_ETA = 0.05


@dataclass(frozen=True)
class Cluster:
    """One cluster; ``members`` are the original inverse weights, ascending.

    ``center + deviations[j]`` reproduces ``members[j]`` exactly whenever the
    member lies within a factor of two of the center, and to 1 ulp otherwise.
    """

    center: float
    members: tuple[float, ...]
    deviations: tuple[float, ...]
    sources: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def spread(self) -> float:
        return self.members[-1] - self.members[0]

    @property
    def degenerate(self) -> bool:
        """True when every member equals the center exactly."""
        return all(d == 0.0 for d in self.deviations)


@dataclass(frozen=True)
class ClusterSet:
    clusters: tuple[Cluster, ...]
    eta: float

    @property
    def m(self) -> int:
        return len(self.clusters)

    @property
    def centers(self) -> tuple[float, ...]:
        return tuple(c.center for c in self.clusters)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(c.size for c in self.clusters)

    @property
    def total(self) -> int:
        return sum(self.sizes)

    @property
    def zero_spread(self) -> bool:
        return all(c.degenerate for c in self.clusters)

    def members(self) -> list[float]:
        return [v for c in self.clusters for v in c.members]


def _mean(values: Sequence[float]) -> float:
    first = values[0]
    if all(v == first for v in values):
        return first  # fsum(n*x)/n can miss x by an ulp
    return math.fsum(values) / len(values)


def _deviation(value: float, center: float) -> float:
    # value - center is exact when the two are within a factor of two
    # (Sterbenz) and then center + d == value.  Further out, step d toward a
    # reconstruction that hits value; the grid of d may be too coarse for it.
    d = value - center
    for _ in range(8):
        s = center + d
        if s == value:
            break
        d = math.nextafter(d, math.inf if s < value else -math.inf)
    else:
        d = value - center
    return d


def cluster(r: NormalizedInverseWeights | Sequence[float], eta: float = DEFAULT_ETA) -> ClusterSet:
    """Merge inverse weights into clusters of radius ``eta``.

    Identical values always share a cluster.  Otherwise the closest pair of
    adjacent centers is merged while its gap is ``<= eta``; equal gaps are
    broken in favour of the pair with the smaller lower center.
    """
    if math.isnan(eta) or eta < 0.0:
        raise ValueError(f"eta must be non-negative, got {eta!r}")
    if isinstance(r, NormalizedInverseWeights):
        values, index = r.values, r.index
    else:
        order = sorted(range(len(r)), key=lambda i: (r[i], i))
        values = tuple(float(r[i]) for i in order)
        index = tuple(order)

    # groups: list of (members, sources), kept sorted by center
    groups: list[tuple[list[float], list[int]]] = []
    for v, i in zip(values, index):
        if groups and groups[-1][0][0] == v:
            groups[-1][0].append(v)
            groups[-1][1].append(i)
        else:
            groups.append(([v], [i]))
    centers = [_mean(g[0]) for g in groups]

    while len(groups) > 1:
        best = None
        for j in range(len(groups) - 1):
            gap = centers[j + 1] - centers[j]
            if best is None or gap < best[0]:
                best = (gap, j)
        gap, j = best
        if gap > eta:
            break
        merged = (groups[j][0] + groups[j + 1][0], groups[j][1] + groups[j + 1][1])
        groups[j : j + 2] = [merged]
        centers[j : j + 2] = [_mean(merged[0])]

    clusters = []
    for (members, sources), center in zip(groups, centers):
        pairs = sorted(zip(members, sources))
        ms = tuple(p[0] for p in pairs)
        clusters.append(
            Cluster(
                center=center,
                members=ms,
                deviations=tuple(_deviation(v, center) for v in ms),
                sources=tuple(p[1] for p in pairs),
            )
        )
    return ClusterSet(tuple(clusters), float(eta))


@dataclass(frozen=True)
class MomentTable:
    """``Y[k][g] = sum_j (-eta_kj)**g / g`` for ``2 <= g <= g_max``.

    ``Y[k][1]`` vanishes by construction and is not stored; index with
    :meth:`get`.
    """

    rows: tuple[tuple[float, ...], ...]
    g_max: int

    def get(self, k: int, g: int) -> float:
        if g == 1:
            return 0.0
        if g < 2 or g > self.g_max:
            raise IndexError(f"moment order {g} outside [2, {self.g_max}]")
        return self.rows[k][g - 2]


def moments(cs: ClusterSet, g_max: int) -> MomentTable:
    if g_max < 2:
        raise ValueError("g_max must be at least 2")
    rows = []
    for c in cs.clusters:
        rows.append(
            tuple(math.fsum((-d) ** g for d in c.deviations) / g for g in range(2, g_max + 1))
        )
    return MomentTable(tuple(rows), g_max)
