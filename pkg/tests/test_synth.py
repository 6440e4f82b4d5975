import numpy as np
import pytest

from facebias.debias import adversary_probe, chance_level
from facebias.synth import SynthConfig, generate, label_column, oracle_probe_accuracy


def test_config_validation():
    with pytest.raises(ValueError, match="d1 >= K_p"):
        SynthConfig(d1=10, K_p=10, sensitive=(5, 2))
    SynthConfig(d1=10, K_p=10, sensitive=(5, 2), mode="random")
    for bad in ({"rho": 1.5}, {"sigma": -1}, {"weights": (1.0,) * 9}, {"weights": (0.0,) + (1.0,) * 9}):
        with pytest.raises(ValueError):
            SynthConfig(**bad)


def test_sigma_zero_projection_recovers_primary_label():
    ds, gt = generate(SynthConfig(sigma=0.0, n=2000, seed=3))
    coords = ds.Z @ gt.M_p
    assert np.array_equal(coords.argmax(axis=1), ds.y_p)


def test_orthogonal_blocks():
    _, gt = generate(SynthConfig(n=10))
    M = np.hstack([gt.M_p, *gt.M_sens])
    assert np.allclose(M.T @ M, np.eye(M.shape[1]), atol=1e-12)


@pytest.mark.parametrize("i", [0, 1])
def test_rho_zero_labels_uncorrelated(i):
    ds, _ = generate(SynthConfig(rho=0.0, n=10_000, seed=1))
    r = np.corrcoef(ds.y_p, ds.y_sens[:, i])[0, 1]
    assert abs(r) < 0.05


def test_rho_one_is_deterministic_function():
    ds, _ = generate(SynthConfig(rho=1.0, n=500))
    assert np.array_equal(ds.y_sens[:, 0], ds.y_p % 5)
    assert np.array_equal(ds.y_sens[:, 1], ds.y_p % 2)


def test_same_seed_bit_identical():
    a, ga = generate(SynthConfig(n=300, seed=9))
    b, gb = generate(SynthConfig(n=300, seed=9))
    assert a == b and np.array_equal(ga.M_p, gb.M_p)
    c, _ = generate(SynthConfig(n=300, seed=10))
    assert not np.array_equal(a.Z, c.Z)


@pytest.mark.parametrize("seed", range(3))
def test_marginals_converge(seed):
    w = (5, 1, 1, 1, 1, 1, 1, 1, 1, 3)
    cfg = SynthConfig(n=10_000, seed=seed, weights=w)
    ds, _ = generate(cfg)
    emp = np.bincount(ds.y_p, minlength=10) / cfg.n
    assert np.abs(emp - cfg.primary_marginal()).sum() < 0.03
    for i, K in enumerate(cfg.sensitive):
        emp = np.bincount(ds.y_sens[:, i], minlength=K) / cfg.n
        assert np.abs(emp - cfg.sensitive_marginal(i)).sum() < 0.03


@pytest.mark.parametrize("which", ["y_p", "s1", "s2"])
def test_oracle_probe_separable(which):
    ds, _ = generate(SynthConfig(sigma=0.0, n=2000, rho=0.0))
    assert oracle_probe_accuracy(ds, which) >= 0.99


@pytest.mark.parametrize("seed", range(5))
def test_noise_dominated_probe_near_chance(seed):
    ds, _ = generate(SynthConfig(sigma=50.0, n=2000, rho=0.0, seed=seed))
    for which in ("y_p", "s1", "s2"):
        assert oracle_probe_accuracy(ds, which, seed) - chance_level(label_column(ds, which)) < 0.1


def test_shuffled_labels_near_chance():
    ds, _ = generate(SynthConfig(n=2000, rho=0.0))
    y = np.random.default_rng(0).permutation(ds.y_sens[:, 1])
    assert abs(adversary_probe(ds.Z, y) - chance_level(y)) < 0.1


@pytest.mark.parametrize("seed", range(3))
def test_ground_truth_debiased_code_does_not_leak_without_label_correlation(seed):
    ds, gt = generate(SynthConfig(rho=0.0, n=5000, seed=seed))
    zp = ds.Z @ gt.primary_projector()
    for i in range(2):
        y = ds.y_sens[:, i]
        assert adversary_probe(zp, y, seed) <= chance_level(y) + 0.05
    assert adversary_probe(zp, ds.y_p, seed) >= 0.99


def test_ground_truth_code_leaks_through_label_correlation():
    """With rho > 0 the sensitive label is predictable from y_p alone, so any
    representation that keeps y_p also reveals it."""
    ds, gt = generate(SynthConfig(rho=0.6, n=5000, seed=0))
    zp = ds.Z @ gt.primary_projector()
    for i in range(2):
        y = ds.y_sens[:, i]
        assert adversary_probe(zp, y) > chance_level(y) + 0.1


def test_metadata_and_ids():
    ds, _ = generate(SynthConfig(n=1000))
    assert ds[0].record_id == "r000" and ds[999].record_id == "r999"
    assert all(r.age_years is not None and r.gender in ("F", "M") for r in ds)


def test_ground_truth_save(tmp_path):
    import json

    _, gt = generate(SynthConfig(n=5))
    gt.save(tmp_path / "gt.json")
    doc = json.loads((tmp_path / "gt.json").read_text())
    assert np.allclose(np.array(doc["M_p"]), gt.M_p) and doc["config"]["seed"] == 0
