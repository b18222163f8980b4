from __future__ import annotations

import json
import math

import numpy as np
import pytest

from granular_hs.diagnostics import (
    FAIL,
    INCONCLUSIVE,
    MONITOR,
    PASS,
    BoundsReport,
    Check,
    check_conservation,
    check_cooling_time,
    check_energy_defect_identity,
    check_entropy_growth,
    check_gain_bounds,
    check_loss_bound,
    check_plane_growth,
    check_pointwise_growth,
    check_weak_identities,
    compare_series,
    default_planes,
    fit_haff,
    fit_maxwellian_envelope,
    haff_closure_slope,
    monitor_ratio,
)
from granular_hs.ensemble import Ensemble, sample_initial
from granular_hs.grid_oracle import VelocityGrid, sphere_rule
from granular_hs.kinematics import Plane, make_restitution
from granular_hs.series import TimeSeries


def series(times, energy, alpha=0.8, accepted=None, entropy=None, extra=None, **kw):
    n = len(times)
    return TimeSeries(
        times=times, mass=np.ones(n), momentum=np.zeros((n, 3)), energy=energy,
        entropy=np.zeros(n) if entropy is None else entropy,
        accepted=np.full(n, 10) if accepted is None else accepted,
        defect_sum=np.r_[0.0, np.diff(energy)], extra=extra or {},
        config={"alpha": alpha}, **kw,
    )


@pytest.fixture(scope="module")
def gauss():
    g = VelocityGrid.maxwellian(4.0, 13, 1 / 3)
    vals = g.values.copy()
    vals[vals < 1e-7] = 0.0
    return g.with_values(vals)


def test_single_output_is_vacuous_pass():
    checks = check_conservation(series([0.0], [1.0]))
    assert [c.verdict for c in checks] == [PASS] * 3
    assert check_entropy_growth(series([0.0], [1.0], alpha=1.0), 1.0).verdict == PASS


def test_conservation_verdicts():
    t = np.linspace(0, 1, 6)
    good = series(t, np.exp(-t))
    assert all(c.verdict == PASS for c in check_conservation(good))
    rising = series(t, np.r_[1.0, 0.9, 0.95, 0.8, 0.7, 0.6])
    assert check_conservation(rising)[2].verdict == FAIL
    # a flat interval with accepted collisions is not a strict decrease
    flat = series(t, np.r_[1.0, 0.9, 0.9, 0.8, 0.7, 0.6])
    assert check_conservation(flat)[2].verdict == FAIL
    idle = series(t, np.r_[1.0, 0.9, 0.9, 0.8, 0.7, 0.6], accepted=np.r_[0, 5, 0, 5, 5, 5])
    assert check_conservation(idle)[2].verdict == PASS
    drift = series(t, np.ones(6))
    drift.mass[3] += 1e-6
    assert check_conservation(drift)[0].verdict == FAIL


def test_elastic_energy_uses_standard_errors():
    t = np.linspace(0, 1, 4)
    e = np.r_[1.0, 1.001, 0.999, 1.0005]
    ok = series(t, e, alpha=1.0, extra={"energy_se": np.full(4, 1e-3)})
    assert check_conservation(ok)[2].verdict == PASS
    bad = series(t, e, alpha=1.0, extra={"energy_se": np.full(4, 1e-4)})
    assert check_conservation(bad)[2].verdict == FAIL
    exact = series(t, np.ones(4), alpha=1.0)
    assert check_conservation(exact)[2].verdict == PASS


def test_cooling_time():
    t = np.linspace(0, 1, 4)
    assert check_cooling_time(series(t, np.r_[1.0, 0.5, 0.2, 0.1])).verdict == PASS
    assert check_cooling_time(series(t, np.r_[1.0, 0.5, 0.0, 0.0])).verdict == FAIL
    with pytest.raises(ValueError):
        check_cooling_time(series(t, np.ones(4)), floor=0.0)


def test_entropy_growth():
    t = np.linspace(0, 2, 5)
    se = np.full(5, 0.01)
    ok = series(t, np.ones(5), alpha=1.0, entropy=np.r_[0.0, -0.01, 0.02, -0.05, -0.1],
                extra={"entropy_se": se})
    c = check_entropy_growth(ok, 1.0)
    assert c.verdict == PASS and c.threshold == pytest.approx(4 * math.sqrt(2) * 0.01)
    bad = series(t, np.ones(5), alpha=1.0, entropy=np.r_[0.0, 0.0, 0.1, 0.0, 0.0], extra={"entropy_se": se})
    assert check_entropy_growth(bad, 1.0).verdict == FAIL
    flat = series(t, np.linspace(1, 0.5, 5), entropy=np.full(5, -2.0))
    m = check_entropy_growth(flat, 0.8, count=1000)
    assert m.verdict == MONITOR and m.measured == pytest.approx(0.0, abs=1e-14)
    assert "within" in m.detail


def test_pointwise_monitors():
    t = np.linspace(0, 3, 7)
    probes = np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 2.0, 0]])
    F = np.tile([0.2, 0.1, 0.01], (7, 1)) * (1 + 0.1 * t[:, None])
    ts = series(t, np.exp(-t), probes=probes, probe_values=F)
    checks = check_pointwise_growth(ts)
    assert [c.id for c in checks] == ["pointwise.W1", "pointwise.W2", "pointwise.W3"]
    assert all(c.verdict == MONITOR and c.measured <= 10 for c in checks)
    none = check_pointwise_growth(series(t, np.exp(-t)))
    assert all(c.verdict == INCONCLUSIVE for c in none)
    assert monitor_ratio([1.0, 2.0, 30.0], [0.0, 1.0, 2.0]) == 15.0
    assert monitor_ratio([0.0, 0.0], [0.0, 2.0]) == 1.0


def test_haff_fit():
    t = np.linspace(0, 60, 61)
    c = 0.49
    ts = series(t, (1 + 0.5 * c * t) ** -2)
    h = fit_haff(ts)
    assert h.verdict == MONITOR
    assert h.measured == pytest.approx(haff_closure_slope(t[t >= 10], c), rel=1e-10)
    # with the matching shift the closure law is an exact power
    assert fit_haff(ts, t_shift=2 / c).measured == pytest.approx(-2.0, abs=1e-10)
    assert fit_haff(series(t[:11], np.ones(11))).verdict == INCONCLUSIVE
    assert fit_haff(series(t, np.ones(61), alpha=1.0)).measured == pytest.approx(0.0, abs=1e-12)


def test_envelope_fit():
    e = sample_initial("gaussian", 20_000, seed=3)
    c = fit_maxwellian_envelope(e)
    assert c.verdict == PASS
    a, _ = c.measured
    assert a == pytest.approx(1.5, rel=0.1)
    small = fit_maxwellian_envelope(sample_initial("gaussian", 500, seed=3))
    assert small.verdict == INCONCLUSIVE
    # uniform ball of radius sqrt(5/3) has no particles past 1.3 sqrt(T)
    rng = np.random.default_rng(0)
    v = rng.standard_normal((20_000, 3))
    v *= (rng.random(20_000) ** (1 / 3) / np.linalg.norm(v, axis=1))[:, None]
    ball = Ensemble(v, np.full(20_000, 1 / 20_000))
    assert fit_maxwellian_envelope(ball).verdict == INCONCLUSIVE


def test_gain_and_loss_bounds(gauss):
    r = make_restitution(0.75)
    probes = np.array([[0.0, 0, 0], [0.5, 0.2, 0.0], [1.0, -1.0, 0.5]])
    checks = check_gain_bounds(gauss, r, probes, default_planes())
    assert [c.id for c in checks] == ["gain.weighted", "gain.plane"]
    assert all(c.verdict == PASS for c in checks)
    assert np.all(np.asarray(checks[0].measured) > 0)
    assert check_loss_bound(gauss.normalized()).verdict == PASS


def test_loss_bound_fails_for_scaled_data(gauss):
    # half the mass halves Lf, violating the unit-mass bound
    assert check_loss_bound(gauss.with_values(0.5 * gauss.values)).verdict == FAIL


def test_weak_identities(gauss):
    for alpha in (0.5, 1.0):
        checks = check_weak_identities(gauss, make_restitution(alpha), sphere_rule(5))
        assert all(c.verdict == PASS for c in checks), [c.detail for c in checks]


def test_energy_defect_identity():
    assert check_energy_defect_identity(2000, seed=1).verdict == PASS


def test_plane_growth(gauss):
    grids = [gauss.with_values(gauss.values, t) for t in (0.0, 0.5, 1.0)]
    c = check_plane_growth(grids, make_restitution(0.8), Plane([0, 0, 0], [0, 0, 1]))
    assert c.verdict == MONITOR and c.measured == pytest.approx(1.0, rel=1e-12)
    assert check_plane_growth(grids[:2], make_restitution(0.8), Plane([0, 0, 0], [0, 0, 1])).verdict \
        == INCONCLUSIVE


def test_compare_series():
    t = np.linspace(0, 0.5, 6)
    e = np.exp(-t)
    a = series(t, e, extra={"energy_se": np.full(6, 1e-3), "l12": 1 + e, "l12_se": np.full(6, 1e-3)})
    b = series(t, e, extra={"l12": 1 + e})
    checks = compare_series(a, b)
    assert [c.verdict for c in checks] == [PASS, PASS]
    assert np.all(np.asarray(checks[0].measured) == 0)
    c = series(t, e + 0.01, extra={"l12": 1 + e})
    assert compare_series(a, c)[0].verdict == FAIL
    assert compare_series(a, c, {"energy": np.full(6, 0.01)})[0].verdict == PASS
    with pytest.raises(ValueError, match="alpha mismatch"):
        compare_series(a, series(t, e, alpha=0.5))
    with pytest.raises(ValueError, match="no common"):
        compare_series(a, series(t + 10, e))


def test_report_serialisation():
    rep = BoundsReport().add(Check("x", "ref", np.float64(1.5), 2.0, PASS),
                             [Check("y", "ref", np.array([1.0, math.inf]), MONITOR, MONITOR, "d")])
    data = json.loads(rep.to_json())
    assert data["checks"][0]["measured"] == 1.5
    assert data["checks"][1]["measured"] == [1.0, "inf"]
    assert rep.ok and not rep.hard_failures
    table = rep.to_table()
    assert table.splitlines()[0].split() == ["id", "verdict", "measured", "threshold", "detail"]
    rep.add(Check("z", "ref", 3.0, 2.0, FAIL))
    assert not rep.ok and rep.hard_failures[0].id == "z"
