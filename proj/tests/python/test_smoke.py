"""Smoke tests for the python bindings (module built by CMake)."""

import math

import numpy as np
import pytest

import alphamaml


def blobs_config(**overrides):
    cfg = {
        "task": "blobs",
        "algorithm": "maml",
        "n_way": 2,
        "k_shot": 5,
        "q_query": 5,
        "alpha0": 0.05,
        "beta0": 0.01,
        "meta_batch_size": 4,
        "max_iters": 10,
        "val_every": 0,
        "seed": 0,
    }
    cfg.update(overrides)
    return cfg


def test_train_returns_trace():
    trace = alphamaml.train(blobs_config())
    assert len(trace["iter"]) == 10
    assert not trace["diverged"]
    assert np.all(trace["alpha"] == 0.05)  # maml never moves the rates
    assert np.all(np.isfinite(trace["train_loss"]))
    assert len(trace["config_hash"]) == 40


def test_first_loss_is_chance_level():
    trace = alphamaml.train(blobs_config(n_way=5, max_iters=1))
    assert abs(trace["train_loss"][0] - math.log(5)) < 0.1


def test_determinism_and_reduction():
    a = alphamaml.train(blobs_config(seed=3))
    b = alphamaml.train(blobs_config(seed=3))
    assert np.array_equal(a["train_loss"], b["train_loss"])

    maml = alphamaml.train(blobs_config(seed=1))
    adaptive_off = alphamaml.train(
        blobs_config(seed=1, algorithm="alpha-maml", alpha_hyperlr=0.0, beta_hyperlr=0.0)
    )
    assert np.array_equal(maml["train_loss"], adaptive_off["train_loss"])
    assert np.array_equal(maml["beta"], adaptive_off["beta"])


def test_alpha_maml_moves_the_rates():
    trace = alphamaml.train(
        blobs_config(algorithm="alpha-maml", alpha_hyperlr=1e-3, beta_hyperlr=1e-3, max_iters=15)
    )
    assert trace["alpha"][-1] != trace["alpha"][0] or trace["beta"][-1] != trace["beta"][0]


def test_sample_episode_shapes():
    ep = alphamaml.sample_episode(blobs_config(n_way=3, k_shot=2, q_query=4), seed=7)
    assert ep["train_inputs"].shape == (6, 2)
    assert ep["train_targets"].shape == (6,)
    assert ep["test_inputs"].shape == (12, 2)
    assert set(ep["train_targets"]) == {0.0, 1.0, 2.0}


def test_grid_smoke():
    cells = alphamaml.grid(
        blobs_config(max_iters=5),
        {"alpha0": [0.05, 0.1], "beta0": [0.01]},
        workers=2,
    )
    assert len(cells) == 2
    assert {c["alpha0"] for c in cells} == {0.05, 0.1}


def test_train_save_and_evaluate(tmp_path):
    out = tmp_path / "run"
    alphamaml.train(blobs_config(output_dir=str(out), max_iters=5), save=True)
    assert (out / "trace.csv").exists()
    assert (out / "final.ckpt").exists()
    report = alphamaml.evaluate(str(out / "final.ckpt"), blobs_config(), n_episodes=20, n_steps=1)
    assert report["metric"] == "accuracy"
    assert 0.0 <= report["mean"] <= 1.0


def test_glyph_dataset_and_omniglot_pipeline(tmp_path):
    root = tmp_path / "glyphs"
    cache = tmp_path / "glyphs.cache"
    alphamaml.write_glyph_dataset(str(root), 2, 4, instances=20, canvas=28, seed=0)
    counts = alphamaml.ingest(str(root), str(cache), train_chars=6)
    assert counts["characters"] == 8
    assert counts["meta_train"] == 6

    cfg = blobs_config(task="omniglot", n_way=5, q_query=2, cache_path=str(cache))
    ep = alphamaml.sample_episode(cfg, seed=1)
    assert ep["train_inputs"].shape == (5 * 5, 1, 28, 28)


def test_bad_config_key_rejected():
    with pytest.raises(Exception):
        alphamaml.train({"not_a_key": 1})
