"""Training loop behavior: updates, determinism, resume, and modes."""

import logging
import math

import numpy as np
import pytest

from walkrec import synth, trainer
from walkrec.corpus import matrix_from_pairs
from walkrec.errors import ConfigError
from walkrec.exposure import g_term
from walkrec.factors import ModelConfig, PreferenceFactors, bern_ll, sigmoid
from walkrec.walker import SampleBatch, SamplerConfig

from tests.conftest import random_factors, random_matrix, random_social


def quick_config(mode="samwalker_pp", **kwargs):
    defaults = dict(mode=mode, epochs=3, K=3, n_si=12, seed=0,
                    model=ModelConfig(d=4),
                    sampler=SamplerConfig(alpha=8, beta=4.0, c=0.7, t_m=2,
                                          seed=0))
    defaults.update(kwargs)
    return trainer.TrainConfig(**defaults)


class TestTrainConfig:
    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            quick_config(mode="gradient_descent_into_madness")

    def test_ablation_needs_pseudo_mode(self):
        with pytest.raises(ConfigError):
            quick_config(mode="samwalker", ablation="no_item")
        quick_config(mode="samwalker_pp", ablation="no_item")

    def test_positivity(self):
        quick_config(epochs=0)  # zero-epoch fit is allowed (init only)
        with pytest.raises(ConfigError):
            quick_config(epochs=-1)
        with pytest.raises(ConfigError):
            quick_config(K=0)
        with pytest.raises(ConfigError):
            quick_config(threads=0)
        with pytest.raises(ConfigError):
            quick_config(eval_ks=())


class TestThetaUpdate:
    def test_single_pair_hand_step(self):
        f = PreferenceFactors(P=np.array([[0.5, -0.2]]),
                              Q=np.array([[0.3, 0.4]]))
        P0, Q0 = f.P.copy(), f.Q.copy()
        batch = SampleBatch(users=np.array([0]), items=np.array([0]),
                            labels=np.array([1.0]), expected_scale=1.0)
        trainer.update_theta_from_batch(f, batch, lr=1.0, l2=0.0)
        r = 1.0 - sigmoid(float(P0[0] @ Q0[0]))
        np.testing.assert_allclose(f.P, P0 + r * Q0, rtol=1e-12)
        np.testing.assert_allclose(f.Q, Q0 + r * P0, rtol=1e-12)

    def test_duplicates_accumulate_at_fixed_point(self):
        f = random_factors(3, 4, 2, seed=0)
        users = np.array([1, 1, 2])
        items = np.array([0, 0, 3])
        labels = np.array([1.0, 1.0, 0.0])
        batch = SampleBatch(users=users, items=items, labels=labels,
                            expected_scale=1.0)
        P0, Q0 = f.P.copy(), f.Q.copy()
        trainer.update_theta_from_batch(f, batch, lr=0.1, l2=0.05)
        eP, eQ = np.zeros_like(P0), np.zeros_like(Q0)
        for u, i, x in zip(users, items, labels):
            r = x - sigmoid(float(P0[u] @ Q0[i]))
            eP[u] += r * Q0[i] - 0.05 * P0[u]
            eQ[i] += r * P0[u] - 0.05 * Q0[i]
        np.testing.assert_allclose(f.P, P0 + 0.1 * eP, rtol=1e-12)
        np.testing.assert_allclose(f.Q, Q0 + 0.1 * eQ, rtol=1e-12)

    def test_empty_batch_warns_and_skips(self, caplog):
        f = random_factors(2, 2, 2, seed=1)
        P0 = f.P.copy()
        empty = SampleBatch(users=np.array([], dtype=np.int64),
                            items=np.array([], dtype=np.int64),
                            labels=np.array([]), expected_scale=1.0)
        with caplog.at_level(logging.WARNING, logger="walkrec.trainer"):
            trainer.update_theta_from_batch(f, empty, lr=0.1)
        assert "empty" in caplog.text
        np.testing.assert_array_equal(f.P, P0)


class TestGammaStar:
    def test_matches_grid_search(self):
        grid = np.linspace(1e-4, 1 - 1e-4, 20_001)
        for x in (0.0, 1.0):
            for sig in (0.1, 0.4, 0.9):
                star = float(trainer.exmf_gamma_star(x, sig, 0.5, 0.001))
                values = grid * bern_ll(x, sig) + g_term(grid, x, 0.5, 0.001)
                best = grid[np.argmax(values)]
                assert abs(star - best) < 2e-4

    def test_observed_pairs_get_high_confidence(self):
        star = float(trainer.exmf_gamma_star(1.0, 0.3, 0.5, 0.001))
        assert star > 0.99  # a click is near-proof of exposure


class TestEpochStreams:
    def test_epoch_rng_is_stable_and_distinct(self):
        a = trainer._epoch_rng(7, 0).random(4)
        b = trainer._epoch_rng(7, 0).random(4)
        c = trainer._epoch_rng(7, 1).random(4)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)


class TestFitModes:
    def test_samwalker_requires_social(self):
        train = random_matrix(8, 10, 0.3, seed=2)
        with pytest.raises(ConfigError):
            trainer.fit(train, quick_config(mode="samwalker"))

    def test_pseudo_runs_and_records_history(self):
        train = random_matrix(10, 14, 0.3, seed=3)
        state = trainer.fit(train, quick_config(epochs=4))
        assert state.epoch == 4
        assert len(state.history) == 4
        rec = state.history[0]
        assert {"epoch", "phi_objective", "batch_size",
                "transition_steps"} <= set(rec)

    def test_social_runs(self):
        train = random_matrix(9, 12, 0.3, seed=4)
        social = random_social(9, 3, seed=4)
        state = trainer.fit(train, quick_config(mode="samwalker"),
                            social=social)
        assert state.epoch == 3

    def test_dense_mode_objective_climbs(self):
        train = random_matrix(12, 15, 0.25, seed=5)
        config = quick_config(mode="exmf_dense", epochs=12)
        state = trainer.fit(train, config)
        objectives = [rec["objective"] for rec in state.history]
        assert objectives[-1] > objectives[0]

    def test_dense_mode_guard(self):
        big = matrix_from_pairs(20_000, 600, np.array([0]), np.array([0]))
        from walkrec.errors import GuardError
        with pytest.raises(GuardError):
            trainer.fit(big, quick_config(mode="exmf_dense"))

    def test_ablations_freeze_the_gate(self):
        train = random_matrix(10, 12, 0.3, seed=6)
        for ablation, want in (("no_item", 0.0), ("no_community", 1.0)):
            config = quick_config(ablation=ablation, epochs=2)
            state = trainer.fit(train, config)
            from walkrec.graphnet import normalize_edges
            a = normalize_edges(state.graph).a
            users = np.flatnonzero(train.row_counts > 0)
            np.testing.assert_allclose(a[users], want, atol=1e-9)


class TestDeterminismAndResume:
    def test_same_seed_bitwise_equal(self):
        train = random_matrix(10, 13, 0.3, seed=7)
        a = trainer.fit(train, quick_config(epochs=4, seed=3))
        b = trainer.fit(train, quick_config(epochs=4, seed=3))
        assert np.array_equal(a.factors.P, b.factors.P)
        assert np.array_equal(a.factors.Q, b.factors.Q)
        assert np.array_equal(a.graph.ui_logits, b.graph.ui_logits)
        c = trainer.fit(train, quick_config(epochs=4, seed=4))
        assert not np.array_equal(a.factors.P, c.factors.P)

    def test_resume_replays_uninterrupted_run(self, tmp_path):
        train = random_matrix(10, 13, 0.3, seed=8)
        full = trainer.fit(train, quick_config(epochs=6, seed=1))
        half = trainer.fit(train, quick_config(epochs=3, seed=1))
        trainer.save_state(str(tmp_path), half)
        loaded = trainer.load_state(str(tmp_path), quick_config(epochs=3, seed=1),
                                    train)
        resumed = trainer.fit(train, quick_config(epochs=3, seed=1),
                              state=loaded)
        assert resumed.epoch == 6
        np.testing.assert_array_equal(resumed.factors.P, full.factors.P)
        np.testing.assert_array_equal(resumed.factors.Q, full.factors.Q)
        np.testing.assert_array_equal(resumed.graph.ui_logits,
                                      full.graph.ui_logits)
        np.testing.assert_array_equal(resumed.graph.mix_logits,
                                      full.graph.mix_logits)

    def test_save_load_round_trip(self, tmp_path):
        train = random_matrix(8, 10, 0.3, seed=9)
        social = random_social(8, 2, seed=9)
        config = quick_config(mode="samwalker", epochs=2)
        state = trainer.fit(train, config, social=social)
        trainer.save_state(str(tmp_path), state)
        back = trainer.load_state(str(tmp_path), config, train, social=social)
        assert back.epoch == 2
        np.testing.assert_array_equal(back.factors.P, state.factors.P)
        np.testing.assert_array_equal(back.graph.logits, state.graph.logits)

    def test_load_rejects_mode_mismatch(self, tmp_path):
        train = random_matrix(8, 10, 0.3, seed=10)
        state = trainer.fit(train, quick_config(epochs=1))
        trainer.save_state(str(tmp_path), state)
        with pytest.raises(ConfigError):
            trainer.load_state(str(tmp_path), quick_config(mode="exmf_dense"),
                               train)


class TestEvalLogging:
    def test_eval_every_writes_json_lines(self, tmp_path):
        inst = synth.planted_instance(n=40, m=60, d=4, groups=2, seed=11)
        log = tmp_path / "metrics.jsonl"
        config = quick_config(epochs=4, eval_every=2, eval_ks=(3,))
        trainer.fit(inst.train, config, test=inst.test, log_path=str(log))
        import json
        lines = [json.loads(s) for s in log.read_text().splitlines()]
        assert lines
        assert all({"epoch", "metric", "value"} <= set(rec) for rec in lines)
        epochs = {rec["epoch"] for rec in lines}
        assert epochs == {2, 4}
        metrics = {rec["metric"] for rec in lines}
        assert "recall@3" in metrics and "ndcg" in metrics


class TestUniformBaseline:
    def test_trains_and_matches_shapes(self):
        train = random_matrix(12, 16, 0.3, seed=12)
        config = quick_config(epochs=3)
        factors = trainer.fit_uniform_baseline(train, config)
        assert factors.P.shape == (12, 4)
        assert factors.Q.shape == (16, 4)

    def test_deterministic(self):
        train = random_matrix(10, 12, 0.3, seed=13)
        a = trainer.fit_uniform_baseline(train, quick_config(epochs=2, seed=5))
        b = trainer.fit_uniform_baseline(train, quick_config(epochs=2, seed=5))
        assert np.array_equal(a.P, b.P)
