"""Neuron merging: group similar feature dimensions and send group means.

The grouping is fitted offline on calibration tensors by greedy agglomeration.
Merging groups A and B raises the calibration within-group sum of squares by

    |A||B| / (|A| + |B|) * sum_c (mean_c(A) - mean_c(B))**2

and the cheapest pair is merged first, ties going to the lowest group indices.
This cost is reducible (a merged group is never closer to a third group than
the nearer of its parts), so caching each group's nearest neighbour and only
refreshing the groups that pointed at a merged pair gives the same sequence as
an exhaustive pair search.
"""

from __future__ import annotations

import base64
import heapq
import json
import math
import zlib
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np
from scipy.spatial import cKDTree

from ..core import FeatureTensor
from ..errors import InvalidConfigError, ShapeMismatchError

MERGEMAP_FORMAT = "megdt.mergemap"
MERGEMAP_VERSION = 1

_BRUTE_INIT_LIMIT = 4096
EXHAUSTIVE_LIMIT = 4096
_KD_NEIGHBOURS = 8


@dataclass(frozen=True, eq=False)
class MergeMap:
    original_dim: int
    merged_dim: int
    assignment: np.ndarray
    group_floor_mse: float = 0.0

    def __post_init__(self):
        n, m = int(self.original_dim), int(self.merged_dim)
        a = np.ascontiguousarray(self.assignment, dtype=np.int64).reshape(-1)
        if n < 1 or not 1 <= m <= n:
            raise InvalidConfigError(f"need 1 <= merged_dim ({m}) <= original_dim ({n})", "merge_map")
        if a.size != n:
            raise InvalidConfigError(f"assignment has {a.size} entries, expected {n}", "merge_map.assignment")
        if a.min() < 0 or a.max() >= m:
            raise InvalidConfigError("assignment refers to a group outside [0, merged_dim)", "merge_map.assignment")
        counts = np.bincount(a, minlength=m)
        if (counts == 0).any():
            raise InvalidConfigError("every group needs at least one member", "merge_map.assignment")
        if not self.group_floor_mse >= 0:
            raise InvalidConfigError("group_floor_mse must be >= 0", "merge_map.group_floor_mse")
        a.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "original_dim", n)
        object.__setattr__(self, "merged_dim", m)
        object.__setattr__(self, "assignment", a)
        object.__setattr__(self, "group_floor_mse", float(self.group_floor_mse))
        object.__setattr__(self, "_counts", counts)

    @classmethod
    def identity(cls, n: int) -> "MergeMap":
        return cls(n, n, np.arange(n), 0.0)

    @property
    def counts(self) -> np.ndarray:
        return self._counts

    def groups(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.merged_dim)]
        for i, g in enumerate(self.assignment.tolist()):
            out[g].append(i)
        return out

    def __eq__(self, other):
        if not isinstance(other, MergeMap):
            return NotImplemented
        return (
            self.original_dim == other.original_dim
            and self.merged_dim == other.merged_dim
            and np.array_equal(self.assignment, other.assignment)
            and self.group_floor_mse == other.group_floor_mse
        )

    __hash__ = None

    def to_dict(self) -> dict:
        raw = self.assignment.astype("<i4").tobytes()
        return {
            "format": MERGEMAP_FORMAT,
            "version": MERGEMAP_VERSION,
            "original_dim": self.original_dim,
            "merged_dim": self.merged_dim,
            "group_floor_mse": self.group_floor_mse,
            "assignment": base64.b64encode(zlib.compress(raw, 9)).decode("ascii"),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MergeMap":
        if doc.get("format") != MERGEMAP_FORMAT or doc.get("version") != MERGEMAP_VERSION:
            raise InvalidConfigError(
                f"unsupported merge map artifact {doc.get('format')!r} v{doc.get('version')!r}", "merge_map"
            )
        raw = zlib.decompress(base64.b64decode(doc["assignment"]))
        return cls(doc["original_dim"], doc["merged_dim"], np.frombuffer(raw, "<i4"), doc["group_floor_mse"])

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _calibration_matrix(calibration: Sequence[FeatureTensor]) -> np.ndarray:
    if not calibration:
        raise InvalidConfigError("calibration set is empty", "calibration")
    shape = calibration[0].shape
    for i, t in enumerate(calibration):
        if t.shape != shape:
            raise InvalidConfigError(f"tensor {i} has shape {list(t.shape)}, expected {list(shape)}", "calibration")
    # dims x samples, so one row is one neuron's calibration profile
    return np.ascontiguousarray(np.stack([t.values for t in calibration], axis=1))


@numba.njit(cache=True)
def _nearest(c, cent, size, active):
    n, k = cent.shape
    best = np.inf
    arg = -1
    sc = size[c]
    for j in range(n):
        if j == c or not active[j]:
            continue
        s = 0.0
        for q in range(k):
            t = cent[c, q] - cent[j, q]
            s += t * t
        d = sc * size[j] / (sc + size[j]) * s
        if d < best:
            best = d
            arg = j
    return arg, best


@numba.njit(cache=True)
def _pair_cost(a, b, cent, size):
    s = 0.0
    for q in range(cent.shape[1]):
        t = cent[a, q] - cent[b, q]
        s += t * t
    return size[a] * size[b] / (size[a] + size[b]) * s


@numba.njit(cache=True)
def _greedy(x, n_merges, nn, nd):
    n, k = x.shape
    cent = x.copy()
    size = np.ones(n)
    active = np.ones(n, dtype=np.bool_)
    parent = np.arange(n)
    heap = [(nd[i], min(i, nn[i]), max(i, nn[i]), i) for i in range(n)]
    heapq.heapify(heap)
    affected = np.empty(n, dtype=np.int64)
    for _ in range(n_merges):
        while True:
            d, lo, hi, i = heapq.heappop(heap)
            j = nn[i]
            if active[i] and j >= 0 and active[j] and nd[i] == d and min(i, j) == lo and max(i, j) == hi:
                break
        a, b = lo, hi
        sa, sb = size[a], size[b]
        for q in range(k):
            cent[a, q] = (sa * cent[a, q] + sb * cent[b, q]) / (sa + sb)
        size[a] = sa + sb
        active[b] = False
        parent[b] = a
        na = 0
        for j in range(n):
            if active[j] and j != a and (nn[j] == a or nn[j] == b):
                affected[na] = j
                na += 1
        best = np.inf
        arg = -1
        for j in range(n):
            if j == a or not active[j]:
                continue
            dj = _pair_cost(a, j, cent, size)
            if dj < best:
                best = dj
                arg = j
            if nn[j] != a and nn[j] != b and (dj < nd[j] or (dj == nd[j] and a < nn[j])):
                nn[j] = a
                nd[j] = dj
                heapq.heappush(heap, (dj, min(a, j), max(a, j), j))
        nn[a] = arg
        nd[a] = best
        if arg >= 0:
            heapq.heappush(heap, (best, min(a, arg), max(a, arg), a))
        for t in range(na):
            j = affected[t]
            arg_j, best_j = _nearest(j, cent, size, active)
            nn[j] = arg_j
            nd[j] = best_j
            if arg_j >= 0:
                heapq.heappush(heap, (best_j, min(j, arg_j), max(j, arg_j), j))
    # resolve every dimension to the surviving index of its group
    for i in range(n):
        r = i
        while parent[r] != r:
            r = parent[r]
        parent[i] = r
    return parent


def _initial_neighbours(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = x.shape[0]
    size = np.ones(n)
    active = np.ones(n, dtype=np.bool_)
    nn = np.empty(n, np.int64)
    nd = np.empty(n)
    if n <= _BRUTE_INIT_LIMIT:
        for i in range(n):
            nn[i], nd[i] = _nearest(i, x, size, active)
        return nn, nd
    k = min(n, _KD_NEIGHBOURS)
    kd_dist, kd_idx = cKDTree(x).query(x, k=k)
    for i in range(n):
        best, arg = math.inf, -1
        for j in sorted(int(v) for v in kd_idx[i] if v != i):
            d = _pair_cost(i, j, x, size)
            if d < best:
                best, arg = d, j
        # a candidate list saturated by ties may hide a lower index; fall back to a full scan
        if arg < 0 or 0.5 * kd_dist[i, -1] ** 2 <= best * (1 + 1e-9):
            arg, best = _nearest(i, x, size, active)
        nn[i], nd[i] = arg, best
    return nn, nd


def _ward_neighbours(cent: np.ndarray, size: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest neighbour of every cluster under the merge cost, via a KD-tree.

    The KD-tree ranks by plain distance; the weight ``|A||B|/(|A|+|B|)`` is
    bounded below by its value at the smallest cluster, so a row is settled once
    its k-th hit is too far to beat the best cost seen.  Unsettled rows are
    retried with a larger k, then with an exact ball query.
    """
    n = cent.shape[0]
    tree = cKDTree(cent)
    smin = size.min()
    wmin = size * smin / (size + smin)
    nn = np.empty(n, np.int64)
    nd = np.empty(n)
    todo = np.arange(n)
    for k in (_KD_NEIGHBOURS + 1, 4 * _KD_NEIGHBOURS + 1):
        k = min(n, k)
        kd_dist, kd_idx = tree.query(cent[todo], k=k)
        rows = np.repeat(todo, k)
        cols = kd_idx.reshape(-1)
        diff = cent[rows] - cent[cols]
        cost = size[rows] * size[cols] / (size[rows] + size[cols]) * np.einsum("ij,ij->i", diff, diff)
        cost = cost.reshape(todo.size, k)
        cost[kd_idx == todo[:, None]] = np.inf
        # lexicographic (cost, index) minimum per row
        pick = np.lexsort((kd_idx, cost), axis=1)[:, 0]
        r = np.arange(todo.size)
        nn[todo] = kd_idx[r, pick]
        nd[todo] = cost[r, pick]
        if k == n:
            return nn, nd
        todo = todo[wmin[todo] * kd_dist[:, -1] ** 2 <= nd[todo] * (1 + 1e-9)]
        if todo.size == 0:
            return nn, nd
    for i in todo:
        cand = np.array(tree.query_ball_point(cent[i], math.sqrt(nd[i] / wmin[i]) * (1 + 1e-9) + 1e-300))
        cand = cand[cand != i]
        diff = cent[cand] - cent[i]
        c = size[i] * size[cand] / (size[i] + size[cand]) * np.einsum("ij,ij->i", diff, diff)
        j = np.lexsort((cand, c))[0]
        nn[i], nd[i] = cand[j], c[j]
    return nn, nd


def _reciprocal_merges(x: np.ndarray, n_merges: int) -> np.ndarray:
    """Lowest ``n_merges`` merges of the greedy hierarchy, found by batch pairing.

    Every reciprocal nearest-neighbour pair is part of the hierarchy, so all of
    them can be merged in one round.  Later merges never cost less than the
    current cheapest pair, which certifies the cheap part of the hierarchy long
    before it is complete.  Returns the surviving root of each dimension.
    """
    cent = x.copy()
    size = np.ones(x.shape[0])
    rep = np.arange(x.shape[0])
    heights: list[np.ndarray] = []
    pairs: list[np.ndarray] = []
    found = np.empty(0)
    while cent.shape[0] > 1:
        nn, nd = _ward_neighbours(cent, size)
        floor = nd.min()
        found = np.concatenate([found, *heights]) if heights else found
        heights = []
        if np.count_nonzero(found < floor) >= n_merges:
            break
        idx = np.arange(cent.shape[0])
        a = idx[(nn[nn] == idx) & (idx < nn)]
        b = nn[a]
        heights.append(nd[a])
        pairs.append(np.stack([rep[a], rep[b]], axis=1))
        sa, sb = size[a][:, None], size[b][:, None]
        cent[a] = (sa * cent[a] + sb * cent[b]) / (sa + sb)
        size[a] += size[b]
        rep[a] = np.minimum(rep[a], rep[b])
        keep = np.ones(cent.shape[0], bool)
        keep[b] = False
        cent, size, rep = cent[keep], size[keep], rep[keep]
    found = np.concatenate([found, *heights]) if heights else found
    merges = np.concatenate(pairs) if pairs else np.empty((0, 2), np.int64)
    chosen = np.lexsort((merges.max(1), merges.min(1), found))[:n_merges]
    parent = np.arange(x.shape[0])

    def root(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for lo, hi in merges[chosen]:
        ra, rb = root(lo), root(hi)
        parent[max(ra, rb)] = min(ra, rb)
    return np.array([root(i) for i in range(x.shape[0])])


def fit_merge_map(calibration: Sequence[FeatureTensor], merged_dim: int) -> MergeMap:
    """Greedily merge dimensions of ``calibration`` down to ``merged_dim`` groups.

    Up to a few thousand dimensions the exhaustive greedy search runs directly;
    larger problems use reciprocal-pair batching, which yields the same groups
    whenever merge costs are free of exact ties.
    """
    x = _calibration_matrix(calibration)
    n = x.shape[0]
    merged_dim = int(merged_dim)
    if not 1 <= merged_dim <= n:
        raise InvalidConfigError(f"merged_dim must lie in [1, {n}], got {merged_dim}", "merged_dim")
    if merged_dim == n:
        return MergeMap.identity(n)
    if n <= EXHAUSTIVE_LIMIT:
        nn, nd = _initial_neighbours(x)
        roots = _greedy(x, n - merged_dim, nn, nd)
    else:
        roots = _reciprocal_merges(x, n - merged_dim)
    # groups are numbered by their lowest member, which is also the surviving root
    _, assignment = np.unique(roots, return_inverse=True)
    m = MergeMap(n, merged_dim, assignment)
    floor = float(np.mean([mse_floor(t, m) for t in calibration]))
    return MergeMap(n, merged_dim, assignment, floor)


def _check_dim(t: FeatureTensor, expected: int, what: str) -> None:
    if t.size != expected:
        raise ShapeMismatchError(f"{what}: tensor has {t.size} values, merge map expects {expected}")


def group_means(values: np.ndarray, m: MergeMap) -> np.ndarray:
    means = np.bincount(m.assignment, weights=values, minlength=m.merged_dim) / m.counts
    lo = np.full(m.merged_dim, np.inf)
    hi = np.full(m.merged_dim, -np.inf)
    np.minimum.at(lo, m.assignment, values)
    np.maximum.at(hi, m.assignment, values)
    # constant groups return their value exactly, so reduce is a projection
    return np.where(lo == hi, lo, means)


def merge_reduce(t: FeatureTensor, m: MergeMap) -> FeatureTensor:
    _check_dim(t, m.original_dim, "merge_reduce")
    return FeatureTensor((m.merged_dim,), group_means(t.values, m), t.role)


def merge_expand(reduced: FeatureTensor, m: MergeMap, shape: Sequence[int] | None = None) -> FeatureTensor:
    _check_dim(reduced, m.merged_dim, "merge_expand")
    out_shape = tuple(shape) if shape is not None else (m.original_dim,)
    return FeatureTensor(out_shape, reduced.values[m.assignment], reduced.role)


def mse_floor(t: FeatureTensor, m: MergeMap) -> float:
    """Within-group variance of ``t``: the error of expanding its group means."""
    _check_dim(t, m.original_dim, "mse_floor")
    dev = t.values - group_means(t.values, m)[m.assignment]
    return float(np.dot(dev, dev) / dev.size)
