from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from granular_hs.ensemble import (
    DensityEstimator,
    Ensemble,
    EntropyCoverageWarning,
    default_probes,
    entropy_estimate,
    entropy_standard_error,
    kde_density,
    moments,
    read_snapshot,
    sample_initial,
    write_snapshot,
)


@pytest.mark.parametrize("kind", ["gaussian", "two_temperature", "shell"])
def test_initial_ensembles_are_normalised(kind):
    e = sample_initial(kind, 10_000, seed=7)
    m = moments(e)
    assert m.mass == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(m.momentum)) <= 1e-12
    assert m.energy == pytest.approx(1.0, abs=1e-12)


def test_shell_speeds_equal():
    e = sample_initial("shell", 1000, seed=1)
    sp = np.linalg.norm(e.velocities, axis=1)
    np.testing.assert_allclose(sp, 1.0, atol=1e-12)
    with pytest.raises(ValueError, match="even"):
        sample_initial("shell", 999, seed=1)


def test_sampling_is_deterministic():
    a = sample_initial("gaussian", 5000, seed=3)
    b = sample_initial("gaussian", 5000, seed=3)
    assert np.array_equal(a.velocities, b.velocities)
    c = sample_initial("gaussian", 5000, seed=4)
    assert not np.array_equal(a.velocities, c.velocities)
    with pytest.raises(ValueError, match="unknown initial kind"):
        sample_initial("uniform", 10, 0)


def test_two_particle_moments():
    e = Ensemble(np.array([[1.0, 0, 0], [-1.0, 0, 0]]), np.array([0.5, 0.5]))
    m = moments(e, (0.0, 2.0))
    assert (m.mass, m.energy) == (1.0, 1.0)
    assert np.array_equal(m.momentum, np.zeros(3))
    assert m.l1s_norms[0.0] == m.mass
    assert m.l1s_norms[2.0] == pytest.approx(m.mass + m.energy, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 60), st.integers(0, 2**31 - 1))
def test_l1s_identities(count, seed):
    rng = np.random.default_rng(seed)
    e = Ensemble(rng.standard_normal((count, 3)), rng.random(count) + 0.01)
    m = moments(e, (0.0, 2.0))
    assert m.l1s_norms[0.0] == pytest.approx(m.mass, rel=1e-13)
    assert m.l1s_norms[2.0] == pytest.approx(m.mass + m.energy, rel=1e-13)


def test_kde_examples():
    e = Ensemble(np.zeros((1, 3)), np.ones(1))
    est = DensityEstimator(1.0)
    assert kde_density(e, np.zeros(3), est) == pytest.approx((2 * math.pi) ** -1.5, rel=1e-14)
    assert kde_density(e, np.array([50.0, 0, 0]), est) <= 1e-300
    # mass of the estimate over a 12h ball, by radial Gauss-Legendre x a sphere rule
    from granular_hs.grid_oracle import sphere_rule

    rng = np.random.default_rng(0)
    e = Ensemble(rng.standard_normal((50, 3)) * 0.01, np.full(50, 1 / 50))
    est = DensityEstimator(0.2)
    x, w = np.polynomial.legendre.leggauss(80)
    R = 12 * est.bandwidth + 0.05
    r = 0.5 * R * (x + 1)
    q = sphere_rule(17)
    pts = (r[:, None, None] * q.nodes[None]).reshape(-1, 3)
    f = kde_density(e, pts, est).reshape(len(r), -1)
    total = float((0.5 * R * w * r * r) @ (f @ q.weights))
    assert total == pytest.approx(1.0, abs=1e-6)


def test_scott_bandwidth():
    e = sample_initial("gaussian", 10_000, seed=0)
    est = DensityEstimator.scott(e)
    assert est.bandwidth == pytest.approx(math.sqrt(1 / 3) * 10_000 ** (-1 / 7), rel=1e-12)
    with pytest.raises(ValueError):
        DensityEstimator(0.0)


def test_entropy_uniform_cube():
    rng = np.random.default_rng(2)
    L = 2.0
    v = rng.uniform(-L / 2, L / 2, (200_000, 3))
    e = Ensemble(v, np.full(len(v), 1 / len(v)))
    H = entropy_estimate(e, 16, box_halfwidth=1.0)
    assert H == pytest.approx(-math.log(L ** 3), rel=0.05)


def test_entropy_gaussian():
    e = sample_initial("gaussian", 100_000, seed=5)
    T = 1 / 3
    exact = -1.5 * math.log(2 * math.pi * math.e * T)
    assert entropy_estimate(e) == pytest.approx(exact, rel=0.05)
    assert 0 < entropy_standard_error(e) < 0.02


def test_entropy_concentration_and_coverage():
    v = np.tile([0.1, 0.2, 0.3], (100, 1))
    e = Ensemble(v, np.full(100, 0.01))
    H1 = entropy_estimate(e, 16, box_halfwidth=1.0)
    H2 = entropy_estimate(e, 64, box_halfwidth=1.0)
    assert H1 > 0 and H2 > H1
    far = Ensemble(np.vstack([np.zeros((99, 3)), [[100.0, 0, 0]]]), np.full(100, 0.01))
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        entropy_estimate(far, 16, box_halfwidth=1.0)
    assert any(issubclass(w.category, EntropyCoverageWarning) for w in rec)


def test_validation():
    with pytest.raises(ValueError, match="shape"):
        Ensemble(np.zeros((3, 2)), np.ones(3))
    with pytest.raises(ValueError, match="nonnegative"):
        Ensemble(np.zeros((2, 3)), np.array([1.0, -1.0]))


def test_snapshot_roundtrip(tmp_path):
    e = sample_initial("two_temperature", 500, seed=9)
    p = write_snapshot(e, tmp_path / "s.csv", alpha=0.8, seed=9)
    f, meta = read_snapshot(p)
    assert np.array_equal(f.velocities, e.velocities)
    assert np.array_equal(f.weights, e.weights)
    assert meta["alpha"] == 0.8 and meta["seed"] == 9 and "code_version" in meta
    assert p.read_text().splitlines()[0] == "vx,vy,vz,w"


def test_default_probes():
    p = default_probes(0)
    assert p.shape == (50, 3)
    assert np.array_equal(p[0], np.zeros(3))
    assert np.array_equal(p, default_probes(0))
    np.testing.assert_allclose(np.linalg.norm(p[1:9], axis=1), [0.125, 0.25, 0.5, 0.75, 1, 1.5, 2, 3])
