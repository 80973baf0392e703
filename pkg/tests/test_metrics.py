"""Ranking metrics against hand values and a brute-force reference."""

import math

import numpy as np
import pytest

from walkrec import metrics
from walkrec.corpus import matrix_from_pairs
from walkrec.factors import PreferenceFactors
from walkrec.graphnet import build_social_graph
from walkrec.walker import SamplerConfig

from tests.conftest import random_factors, random_matrix, random_social


def single_user_setup():
    """One user, seven items; the train positive would top the list."""
    scores = np.array([3.0, 2.0, 1.5, 1.0, 0.5, 0.0, 10.0])
    f = PreferenceFactors(P=np.array([[1.0]]), Q=scores[:, None])
    train = matrix_from_pairs(1, 7, np.array([0]), np.array([6]))
    test = matrix_from_pairs(1, 7, np.array([0, 0]), np.array([0, 4]))
    return f, train, test


class TestHandExample:
    def test_exact_values(self):
        f, train, test = single_user_setup()
        report = metrics.evaluate(f, train, test, ks=(5,))
        # test items land at ranks 1 and 5 once the train item is excluded
        assert abs(report.recall[5] - 1.0) < 1e-9
        assert abs(report.precision[5] - 0.4) < 1e-9
        want_ndcg = (1.0 + 1.0 / math.log2(6)) / (1.0 + 1.0 / math.log2(3))
        assert abs(report.ndcg - want_ndcg) < 1e-9
        assert abs(report.mrr - 1.2) < 1e-9
        assert report.users == 1

    def test_mrr_is_a_sum_not_a_max(self):
        # both test items near the top: reciprocal ranks add up past 1
        f, train, test = single_user_setup()
        report = metrics.evaluate(f, train, test, ks=(2,))
        assert report.mrr == pytest.approx(1.2)

    def test_train_positive_excluded_from_ranking(self):
        f, train, test = single_user_setup()
        top = metrics.ranked_items(f, train, 0, k=3)
        assert 6 not in top.tolist()
        assert top.tolist() == [0, 1, 2]


class TestTieBreaking:
    def test_equal_scores_rank_by_item_id(self):
        f = PreferenceFactors(P=np.array([[1.0]]),
                              Q=np.array([[2.0], [2.0], [2.0], [5.0]]))
        train = matrix_from_pairs(1, 4, np.array([], dtype=np.int64),
                                  np.array([], dtype=np.int64))
        top = metrics.ranked_items(f, train, 0, k=4)
        assert top.tolist() == [3, 0, 1, 2]


def brute_force_report(factors, train, test, ks):
    """Per-user re-ranking with explicit python sorting."""
    recall = {k: [] for k in ks}
    precision = {k: [] for k in ks}
    ndcgs, mrrs = [], []
    users = 0
    for u in range(train.n):
        tset = set(test.row(u).tolist())
        if not tset:
            continue
        users += 1
        scores = factors.P[u] @ factors.Q.T
        excluded = set(train.row(u).tolist())
        cands = [i for i in range(train.m) if i not in excluded]
        cands.sort(key=lambda i: (-scores[i], i))
        rank_of = {i: r + 1 for r, i in enumerate(cands)}
        ranks = sorted(rank_of[i] for i in tset)
        for k in ks:
            hits = sum(1 for r in ranks if r <= k)
            recall[k].append(hits / len(tset))
            precision[k].append(hits / k)
        dcg = sum(1.0 / math.log2(r + 1) for r in ranks)
        idcg = sum(1.0 / math.log2(j + 2) for j in range(len(tset)))
        ndcgs.append(dcg / idcg)
        mrrs.append(sum(1.0 / r for r in ranks))
    out = {
        "recall": {k: float(np.mean(v)) for k, v in recall.items()},
        "precision": {k: float(np.mean(v)) for k, v in precision.items()},
        "ndcg": float(np.mean(ndcgs)),
        "mrr": float(np.mean(mrrs)),
        "users": users,
    }
    return out


class TestBruteForceAgreement:
    def test_random_instance(self):
        rng = np.random.default_rng(0)
        n, m = 30, 25
        f = random_factors(n, m, 4, seed=0)
        full = random_matrix(n, m, 0.3, seed=1, min_row=2)
        # carve a test set out of each user's positives
        tr_u, tr_i, te_u, te_i = [], [], [], []
        for u in range(n):
            row = full.row(u)
            take = rng.integers(0, len(row))
            picks = set(rng.choice(row, size=take, replace=False).tolist())
            for i in row:
                (te_u if int(i) in picks else tr_u).append(u)
                (te_i if int(i) in picks else tr_i).append(int(i))
        train = matrix_from_pairs(n, m, np.array(tr_u), np.array(tr_i))
        test = matrix_from_pairs(n, m, np.array(te_u), np.array(te_i))
        ks = (3, 7)
        report = metrics.evaluate(f, train, test, ks=ks)
        want = brute_force_report(f, train, test, ks)
        for k in ks:
            assert report.recall[k] == pytest.approx(want["recall"][k], abs=1e-12)
            assert report.precision[k] == pytest.approx(want["precision"][k], abs=1e-12)
        assert report.ndcg == pytest.approx(want["ndcg"], abs=1e-12)
        assert report.mrr == pytest.approx(want["mrr"], abs=1e-12)
        assert report.users == want["users"]

    def test_no_test_users_yields_zero_report(self):
        f = random_factors(3, 4, 2, seed=2)
        train = random_matrix(3, 4, 0.4, seed=3)
        empty = matrix_from_pairs(3, 4, np.array([], dtype=np.int64),
                                  np.array([], dtype=np.int64))
        report = metrics.evaluate(f, train, empty, ks=(2,))
        assert report.users == 0
        assert report.ndcg == 0.0 and report.mrr == 0.0


class TestReportShape:
    def test_rows_and_dict(self):
        f, train, test = single_user_setup()
        report = metrics.evaluate(f, train, test, ks=(2, 5))
        rows = list(report.rows())
        names = [(r[0], r[1]) for r in rows]
        assert ("recall", 2) in names and ("precision", 5) in names
        assert ("ndcg", None) in names and ("mrr", None) in names
        d = report.as_dict()
        assert "recall@2" in d and "ndcg" in d


class TestVarianceBench:
    def test_reports_all_kinds(self):
        train = random_matrix(10, 14, 0.3, seed=4)
        graph = build_social_graph(random_social(10, 3, seed=4), seed=4)
        f = random_factors(10, 14, 3, seed=4)
        cfg = SamplerConfig(alpha=30, beta=5.0, c=0.7, t_m=3, seed=0)
        out = metrics.variance_bench(f, graph, train, cfg, repeats=25,
                                     n_coords=12, seed=0)
        assert set(out["samplers"]) == {"walk", "allunion", "balunion",
                                        "itempop", "cobias"}
        for info in out["samplers"].values():
            assert info["variance"] >= 0.0
        assert out["batch_size"] >= 1

    def test_uniform_confidence_equalizes_walk_and_allunion(self):
        # all-ones interactions give gamma = 1 everywhere, so the walk law
        # collapses to the uniform law; the only residual gap is the
        # binomial-thinning factor (1 - 1/beta), here 0.95
        n, m = 6, 8
        us, its = np.indices((n, m))
        train = matrix_from_pairs(n, m, us.ravel(), its.ravel())
        graph = build_social_graph(random_social(n, 2, seed=5), seed=5)
        f = random_factors(n, m, 3, seed=5)
        cfg = SamplerConfig(alpha=100, beta=20.0, c=0.6, t_m=3, seed=0)
        out = metrics.variance_bench(f, graph, train, cfg,
                                     kinds=("walk", "allunion"),
                                     repeats=800, n_coords=20, seed=1)
        vw = out["samplers"]["walk"]["variance"]
        va = out["samplers"]["allunion"]["variance"]
        assert 0.8 < vw / va < 1.2
