"""Informative and baseline samplers over the user-item pair universe.

The walk sampler draws training pairs with frequency proportional to the
propagated confidence weights, without ever computing them: a walk starts at
user u, hops through the transition graph (continue with probability c, stop
with 1 - c), and on stopping at user v emits each of v's positive items
independently with probability 1/beta as a training pair (u, i, x_ui). Walks
that would exceed t_m transitions jump to a uniform user and stop, which
keeps every walk O(t_m) and every pair reachable. The expected emission
count of pair (u, i) over one walk is gamma_trunc[u, i] / beta (see
oracle.dense_gamma_truncated), so a batch of alpha walks per user turns
`(beta / alpha) * sum over batch` into an unbiased estimate of the full
confidence-weighted gradient.

Four baseline samplers over the same universe draw iid pairs from fixed
distributions; each reports exact per-pair probabilities so importance
weighting can correct them back to the same target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import InteractionMatrix
from .errors import EstimatorError
from .graphnet import (PseudoGraphParams, PseudoTransition, SocialGraphParams,
                       SocialTransition, normalize_edges)

BASELINE_KINDS = ("allunion", "balunion", "itempop", "cobias")


@dataclass
class SamplerConfig:
    alpha: int = 100
    beta: float = 20.0
    c: float = 0.9
    t_m: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError("alpha must be at least 1")
        if self.beta < 1:
            raise ValueError("beta must be at least 1")
        if not 0.0 <= self.c < 1.0:
            raise ValueError("c must lie in [0, 1)")
        if self.t_m < 0:
            raise ValueError("t_m must be nonnegative")


@dataclass
class SampleBatch:
    """Training pairs drawn by a sampler.

    expected_scale relates the batch to the full-sum target: for walk
    batches, scale * sum of per-pair gradients is unbiased for the
    confidence-weighted full gradient; for baseline batches it is 1/size and
    entries carry their exact draw probabilities in ``probs``.
    """

    users: np.ndarray
    items: np.ndarray
    labels: np.ndarray
    expected_scale: float
    probs: np.ndarray | None = None

    @property
    def size(self) -> int:
        return int(self.users.shape[0])


def _expand_ranges(starts: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Concatenate arange(s, s + k) for each (s, k); zero counts allowed."""
    keep = counts > 0
    starts, counts = starts[keep], counts[keep]
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    out = np.ones(total, dtype=np.int64)
    out[0] = starts[0]
    ends = np.cumsum(counts)[:-1]
    out[ends] = starts[1:] - starts[:-1] - counts[:-1] + 1
    return np.cumsum(out)


class _RowSampler:
    """Inverse-CDF draws from per-group categorical rows of a flat array.

    Group g's probabilities occupy probs[indptr[g]:indptr[g+1]] and sum to 1.
    The flattened cumulative array offset by the group id is globally
    nondecreasing, so one global searchsorted serves every group at once.
    """

    def __init__(self, probs: np.ndarray, indptr: np.ndarray):
        counts = np.diff(indptr)
        cs = np.concatenate([[0.0], np.cumsum(probs)])
        base = cs[indptr[:-1]]
        group_ids = np.repeat(np.arange(counts.shape[0]), counts)
        self.flat = cs[1:] - np.repeat(base, counts) + group_ids
        self.indptr = indptr

    def draw(self, groups: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One draw per entry of groups; returns flat positions."""
        target = groups + rng.random(groups.shape[0])
        idx = np.searchsorted(self.flat, target, side="left")
        return np.clip(idx, self.indptr[groups], self.indptr[groups + 1] - 1)


class WalkEngine:
    """Vectorized depth-limited walks with positive-item emission."""

    def __init__(self, graph, X: InteractionMatrix, cfg: SamplerConfig):
        if isinstance(graph, (SocialGraphParams, PseudoGraphParams)):
            graph = normalize_edges(graph)
        self.mat = graph
        self.X = X
        self.cfg = cfg
        self.n = graph.n
        if isinstance(graph, SocialTransition):
            self._soc = _RowSampler(graph.probs, graph.indptr)
        else:
            self._ui = _RowSampler(graph.ui_probs, graph.ui_indptr)
            self._iu = _RowSampler(graph.iu_probs, graph.iu_indptr)
            self._uc = _RowSampler(graph.uc_probs.ravel(),
                                   np.arange(graph.n + 1) * graph.K)
            self._cu = _RowSampler(graph.cu_probs.ravel(),
                                   np.arange(graph.K + 1) * graph.n)
        self.last_transition_steps = 0

    def _step(self, v: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if isinstance(self.mat, SocialTransition):
            return self.mat.targets[self._soc.draw(v, rng)]
        item_branch = rng.random(v.shape[0]) < self.mat.a[v]
        out = np.empty_like(v)
        vi = v[item_branch]
        if vi.size:
            i = self.mat.ui_items[self._ui.draw(vi, rng)]
            out[item_branch] = self.mat.iu_users[self._iu.draw(i, rng)]
        vc = v[~item_branch]
        if vc.size:
            comm = self._uc.draw(vc, rng) - vc * self.mat.K
            out[~item_branch] = self._cu.draw(comm, rng) - comm * self.n
        return out

    def stop_users(self, origins: np.ndarray, rng: np.random.Generator
                   ) -> np.ndarray:
        """Terminal user of one walk per origin; counts transition steps."""
        stops = np.empty(origins.shape[0], dtype=np.int64)
        alive = np.arange(origins.shape[0], dtype=np.int64)
        v = origins.astype(np.int64, copy=True)
        self.last_transition_steps = 0
        for depth in range(self.cfg.t_m + 1):
            halt = rng.random(alive.shape[0]) >= self.cfg.c
            stops[alive[halt]] = v[halt]
            alive, v = alive[~halt], v[~halt]
            if alive.size == 0:
                break
            if depth == self.cfg.t_m:
                # would exceed the depth cap: jump to a uniform user and stop
                stops[alive] = rng.integers(0, self.n, size=alive.shape[0])
                break
            v = self._step(v, rng)
            self.last_transition_steps += int(v.shape[0])
        return stops

    def emit(self, origins: np.ndarray, stops: np.ndarray,
             rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Thin each stop user's positives at 1/beta, labeled at the origin."""
        counts = self.X.row_counts[stops]
        cand_users = np.repeat(origins, counts)
        cand_items = self.X.row_items[
            _expand_ranges(self.X.row_indptr[stops], counts)]
        keep = rng.random(cand_items.shape[0]) < 1.0 / self.cfg.beta
        users, items = cand_users[keep], cand_items[keep]
        return users, items, self.X.labels(users, items)

    def sample_batch(self, rng: np.random.Generator | None = None) -> SampleBatch:
        """alpha walks per user, all emissions concatenated."""
        if rng is None:
            rng = np.random.default_rng(self.cfg.seed)
        origins = np.repeat(np.arange(self.n, dtype=np.int64), self.cfg.alpha)
        stops = self.stop_users(origins, rng)
        users, items, labels = self.emit(origins, stops, rng)
        return SampleBatch(users=users, items=items, labels=labels,
                           expected_scale=self.cfg.beta / self.cfg.alpha)


def sample_batch(graph, X: InteractionMatrix, cfg: SamplerConfig,
                 rng: np.random.Generator | None = None) -> SampleBatch:
    """One-shot batch draw; builds a WalkEngine and discards it."""
    return WalkEngine(graph, X, cfg).sample_batch(rng)


def walk_sample_user(graph, X: InteractionMatrix, u: int, cfg: SamplerConfig,
                     rng: np.random.Generator) -> list[tuple[int, int, int]]:
    """One walk from user u, as a readable scalar reference of the law.

    Returns the emitted (u, item, x_ui) triples. The vectorized engine follows
    the same law but consumes the rng stream in a different order.
    """
    if isinstance(graph, (SocialGraphParams, PseudoGraphParams)):
        graph = normalize_edges(graph)
    if not 0 <= u < graph.n:
        raise IndexError(f"user id {u} out of range [0, {graph.n})")
    v = u
    for depth in range(cfg.t_m + 1):
        if rng.random() >= cfg.c:
            break
        if depth == cfg.t_m:
            v = int(rng.integers(0, graph.n))
            break
        if isinstance(graph, SocialTransition):
            lo, hi = graph.indptr[v], graph.indptr[v + 1]
            v = int(rng.choice(graph.targets[lo:hi], p=graph.probs[lo:hi]))
        elif rng.random() < graph.a[v]:
            lo, hi = graph.ui_indptr[v], graph.ui_indptr[v + 1]
            i = int(rng.choice(graph.ui_items[lo:hi], p=graph.ui_probs[lo:hi]))
            lo, hi = graph.iu_indptr[i], graph.iu_indptr[i + 1]
            v = int(rng.choice(graph.iu_users[lo:hi], p=graph.iu_probs[lo:hi]))
        else:
            comm = int(rng.choice(graph.K, p=graph.uc_probs[v]))
            v = int(rng.choice(graph.n, p=graph.cu_probs[comm]))
    out = []
    for i in X.row(v):
        if rng.random() < 1.0 / cfg.beta:
            out.append((u, int(i), int(X.labels(np.array([u]), np.array([i]))[0])))
    return out


class AliasTable:
    """Constant-time draws from a fixed discrete distribution."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.shape[0] == 0:
            raise ValueError("weights must be a nonempty vector")
        if (w < 0).any() or w.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive sum")
        k = w.shape[0]
        scaled = w * (k / w.sum())
        prob = np.ones(k, dtype=np.float64)
        alias = np.arange(k, dtype=np.int64)
        small = [i for i in range(k) if scaled[i] < 1.0]
        large = [i for i in range(k) if scaled[i] >= 1.0]
        while small and large:
            s, l = small.pop(), large.pop()
            prob[s] = scaled[s]
            alias[s] = l
            scaled[l] -= 1.0 - scaled[s]
            (small if scaled[l] < 1.0 else large).append(l)
        self.prob, self.alias = prob, alias
        self.k = k

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = rng.integers(0, self.k, size=size)
        accept = rng.random(size) < self.prob[idx]
        return np.where(accept, idx, self.alias[idx])


def _nth_missing(sorted_present: np.ndarray, ranks: np.ndarray) -> np.ndarray:
    """rank-th smallest integer absent from sorted_present, vectorized."""
    gaps = sorted_present - np.arange(sorted_present.shape[0])
    return ranks + np.searchsorted(gaps, ranks, side="right")


class BaselineSampler:
    """Fixed iid pair distributions with exact per-pair probabilities.

    All four kinds put mass 1/2 on the positive class and 1/2 on the zero
    class (allunion excepted: fully uniform over the n*m universe), then
    spread each class's mass as:

      allunion  uniform over all pairs
      balunion  uniform within each class
      itempop   ones uniform; zero pair (u, i) proportional to item i's
                positive count
      cobias    pair (u, i) proportional to (count of u's opposite-class
                pairs) * (count of i's opposite-class pairs)
    """

    def __init__(self, kind: str, X: InteractionMatrix):
        if kind not in BASELINE_KINDS:
            raise ValueError(f"unknown sampler kind {kind!r}")
        self.kind = kind
        self.X = X
        n, m, nnz = X.n, X.m, X.nnz
        self.n_zero = n * m - nnz
        if nnz == 0:
            raise EstimatorError("no positive pairs to sample")
        rc = X.row_counts.astype(np.float64)
        cc = X.col_counts.astype(np.float64)
        if kind == "allunion":
            return
        if self.n_zero == 0:
            raise EstimatorError(f"{kind}: zero class is empty")
        if kind == "balunion":
            self._zero_user = AliasTable(m - rc)
        elif kind == "itempop":
            w = (n - cc) * cc
            if w.sum() <= 0:
                raise EstimatorError("itempop: zero class has no mass")
            self._zero_item = AliasTable(w)
            self._z0 = w.sum()
        elif kind == "cobias":
            w1 = (m - rc)[X.row_users] * (n - cc)[X.row_items]
            if w1.sum() <= 0:
                raise EstimatorError("cobias: positive class has no mass")
            self._one_pair = AliasTable(w1)
            self._z1 = w1.sum()
            total_cc = cc.sum()
            owned = segmented_sum_of(cc, X)  # sum of c_i over u's positives
            w0 = rc * (total_cc - owned)
            if w0.sum() <= 0:
                raise EstimatorError("cobias: zero class has no mass")
            self._zero_user = AliasTable(w0)
            self._z0 = w0.sum()
            self._item_pop = AliasTable(cc)
            self._cc = cc

    def prob(self, users, items) -> np.ndarray:
        """Exact draw probability of each (user, item) pair."""
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        X = self.X
        n, m, nnz = X.n, X.m, X.nnz
        x = X.labels(users, items).astype(bool)
        out = np.empty(users.shape[0], dtype=np.float64)
        if self.kind == "allunion":
            out[:] = 1.0 / (n * m)
            return out
        if self.kind == "balunion":
            out[x] = 0.5 / nnz
            out[~x] = 0.5 / self.n_zero
            return out
        cc = X.col_counts.astype(np.float64)
        if self.kind == "itempop":
            out[x] = 0.5 / nnz
            out[~x] = 0.5 * cc[items[~x]] / self._z0
            return out
        rc = X.row_counts.astype(np.float64)
        w1 = (m - rc[users]) * (n - cc[items])
        w0 = rc[users] * cc[items]
        out[x] = 0.5 * w1[x] / self._z1
        out[~x] = 0.5 * w0[~x] / self._z0
        return out

    def _sample_zero_items_for_users(self, users: np.ndarray,
                                     rng: np.random.Generator) -> np.ndarray:
        """Uniform item among each user's non-positives."""
        X = self.X
        items = np.empty(users.shape[0], dtype=np.int64)
        ranks = (rng.random(users.shape[0])
                 * (X.m - X.row_counts[users])).astype(np.int64)
        for u in np.unique(users):
            sel = users == u
            items[sel] = _nth_missing(X.row(u), ranks[sel])
        return items

    def sample(self, size: int, rng: np.random.Generator) -> SampleBatch:
        if size < 1:
            raise ValueError("size must be at least 1")
        X = self.X
        n, m, nnz = X.n, X.m, X.nnz
        users = np.empty(size, dtype=np.int64)
        items = np.empty(size, dtype=np.int64)
        if self.kind == "allunion":
            users[:] = rng.integers(0, n, size=size)
            items[:] = rng.integers(0, m, size=size)
        else:
            ones = rng.random(size) < 0.5
            k1 = int(ones.sum())
            users[ones], items[ones] = self._sample_ones(k1, rng)
            users[~ones], items[~ones] = self._sample_zeros(size - k1, rng)
        labels = X.labels(users, items)
        return SampleBatch(users=users, items=items, labels=labels,
                           expected_scale=1.0 / size,
                           probs=self.prob(users, items))

    def _sample_ones(self, k: int, rng: np.random.Generator):
        X = self.X
        if k == 0:
            return np.zeros(0, np.int64), np.zeros(0, np.int64)
        if self.kind == "cobias":
            e = self._one_pair.draw(rng, k)
        else:
            e = rng.integers(0, X.nnz, size=k)
        return X.row_users[e], X.row_items[e]

    def _sample_zeros(self, k: int, rng: np.random.Generator):
        X = self.X
        if k == 0:
            return np.zeros(0, np.int64), np.zeros(0, np.int64)
        if self.kind == "balunion":
            users = self._zero_user.draw(rng, k)
            return users, self._sample_zero_items_for_users(users, rng)
        if self.kind == "itempop":
            items = self._zero_item.draw(rng, k)
            users = np.empty(k, dtype=np.int64)
            ranks = (rng.random(k) * (X.n - X.col_counts[items])).astype(np.int64)
            for i in np.unique(items):
                sel = items == i
                users[sel] = _nth_missing(X.col(i), ranks[sel])
            return users, items
        # cobias: user by row weight, then item by popularity among the
        # user's non-positives via rejection against the global table
        users = self._zero_user.draw(rng, k)
        items = np.empty(k, dtype=np.int64)
        todo = np.arange(k)
        for _ in range(200):
            cand = self._item_pop.draw(rng, todo.shape[0])
            ok = X.labels(users[todo], cand) == 0
            items[todo[ok]] = cand[ok]
            todo = todo[~ok]
            if todo.size == 0:
                break
        for j in todo:  # pathological rows: enumerate exactly
            u = users[j]
            w = self._cc.copy()
            w[X.row(u)] = 0.0
            items[j] = AliasTable(w).draw(rng, 1)[0]
        return users, items


def segmented_sum_of(values: np.ndarray, X: InteractionMatrix) -> np.ndarray:
    """Per-user sum of values[i] over the user's positive items."""
    out = np.zeros(X.n, dtype=np.float64)
    np.add.at(out, X.row_users, values[X.row_items])
    return out


def baseline_sample(kind: str, X: InteractionMatrix, size: int,
                    rng: np.random.Generator | None = None) -> SampleBatch:
    """One-shot draw from a named baseline distribution."""
    if rng is None:
        rng = np.random.default_rng(0)
    return BaselineSampler(kind, X).sample(size, rng)
