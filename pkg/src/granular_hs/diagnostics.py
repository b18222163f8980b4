"""Verdicts for the conservation laws, explicit bounds and fitted envelopes.

Checks come in two flavours.  Hard asserts (``pass``/``fail``) cover
quantities with explicit constants: conservation, positive energy, the
``pi |v|`` loss bound, the ``4 pi`` and ``2 pi`` gain bounds and the exact
weak identities.  Monitors (``monitor``) report bounded ratios for results
that only assert the existence of constants.  ``inconclusive`` marks a
check that could not be evaluated on the given data.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .ensemble import DensityEstimator, Ensemble, kde_density
from .grid_oracle import (
    SphereQuadrature,
    VelocityGrid,
    gain_inverse_distance,
    gain_on_plane,
    loss_all_nodes,
    plane_integral,
    sphere_rule,
    weak_moments,
)
from .kinematics import (
    Plane,
    Restitution,
    energy_defect,
    post_collision_n,
)
from .series import TimeSeries

__all__ = [
    "Check",
    "BoundsReport",
    "check_conservation",
    "check_cooling_time",
    "check_entropy_growth",
    "check_pointwise_growth",
    "fit_haff",
    "haff_closure_slope",
    "fit_maxwellian_envelope",
    "check_gain_bounds",
    "check_plane_growth",
    "check_loss_bound",
    "check_weak_identities",
    "check_energy_defect_identity",
    "compare_series",
    "default_planes",
    "monitor_ratio",
]

PASS, FAIL, MONITOR, INCONCLUSIVE = "pass", "fail", "monitor", "inconclusive"

#: Tolerances used by the hard asserts.
MASS_TOL = 1e-9
MOMENTUM_TOL = 1e-9
ENERGY_NOISE_FLOOR = 1e-10
LOSS_TOL = 1e-3
GAIN_TOL = 0.02
DEFECT_TOL = 1e-10
#: Growth allowance of the monitors relative to their early-time value.
MONITOR_FACTOR = 10.0


@dataclass
class Check:
    """One verdict; ``threshold`` is a number or the string ``"monitor"``."""

    id: str
    ref: str
    measured: object
    threshold: object
    verdict: str
    detail: str = ""

    @property
    def hard(self) -> bool:
        return self.verdict in (PASS, FAIL) and self.threshold != MONITOR


@dataclass
class BoundsReport:
    checks: list = field(default_factory=list)

    def add(self, *items):
        for it in items:
            if isinstance(it, (list, tuple)):
                self.checks.extend(it)
            else:
                self.checks.append(it)
        return self

    @property
    def hard_failures(self) -> list:
        return [c for c in self.checks if c.verdict == FAIL]

    @property
    def ok(self) -> bool:
        return not self.hard_failures

    def to_json(self) -> str:
        def clean(x):
            if isinstance(x, (np.floating, np.integer)):
                return x.item()
            if isinstance(x, np.ndarray):
                return [clean(v) for v in x.tolist()]
            if isinstance(x, (list, tuple)):
                return [clean(v) for v in x]
            if isinstance(x, float) and not math.isfinite(x):
                return repr(x)
            return x

        rows = [{k: clean(v) for k, v in asdict(c).items()} for c in self.checks]
        return json.dumps({"checks": rows}, indent=2) + "\n"

    def to_table(self) -> str:
        def short(x):
            if isinstance(x, (list, tuple, np.ndarray)):
                arr = np.asarray(x, dtype=float).ravel()
                return f"max {arr.max():.4g}" if arr.size else "-"
            if isinstance(x, (float, np.floating)):
                return f"{x:.6g}"
            return str(x)

        head = ("id", "verdict", "measured", "threshold", "detail")
        body = [(c.id, c.verdict, short(c.measured), short(c.threshold), c.detail) for c in self.checks]
        widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h) for i, h in enumerate(head)]
        widths[-1] = 0
        line = lambda r: "  ".join(s.ljust(w) for s, w in zip(r, widths)).rstrip()  # noqa: E731
        return "\n".join([line(head), line(tuple("-" * w for w in widths[:-1]) + ("",))]
                         + [line(r) for r in body]) + "\n"


def _verdict(ok: bool) -> str:
    return PASS if ok else FAIL


def monitor_ratio(values, t, t_ref: float = 1.0):
    """``max_t W(t) / max_{t <= t_ref} W(t)``; the monitors require this ``<= 10``."""
    values = np.asarray(values, dtype=float)
    t = np.asarray(t, dtype=float)
    early = values[t <= t_ref + 1e-12]
    base = float(np.max(early)) if early.size else float(values[0])
    if base <= 0:
        return math.inf if np.max(values) > 0 else 1.0
    return float(np.max(values) / base)


# ---------------------------------------------------------------------------
# time-series checks
# ---------------------------------------------------------------------------


def check_conservation(ts: TimeSeries, *, energy_sigma: float = 3.0) -> list:
    """Mass and momentum conservation and energy monotonicity.

    Energy must not increase by more than :data:`ENERGY_NOISE_FLOOR` between
    outputs.  For ``alpha = 1`` the energy must stay within
    ``energy_sigma`` standard errors of its initial value (no standard errors
    recorded means the noise floor is used).  For ``alpha < 1`` it must drop
    across every interval in which a collision was accepted.
    """
    ref_m = "mass conservation"
    ref_p = "momentum conservation"
    ref_e = "energy dissipation"
    n = len(ts)
    if n < 2:
        note = "single output time; nothing to compare"
        return [Check("conservation.mass", ref_m, 0.0, MASS_TOL, PASS, note),
                Check("conservation.momentum", ref_p, 0.0, MOMENTUM_TOL, PASS, note),
                Check("conservation.energy", ref_e, 0.0, ENERGY_NOISE_FLOOR, PASS, note)]
    dm = float(np.max(np.abs(ts.mass - ts.mass[0])))
    dp = float(np.max(np.abs(ts.momentum)))
    checks = [
        Check("conservation.mass", ref_m, dm, MASS_TOL, _verdict(dm <= MASS_TOL),
              "max |mass(t) - mass(0)|"),
        Check("conservation.momentum", ref_p, dp, MOMENTUM_TOL, _verdict(dp <= MOMENTUM_TOL),
              "max |momentum component|"),
    ]
    de = np.diff(ts.energy)
    rise = float(np.max(de))
    alpha = ts.alpha
    scale = max(1.0, float(ts.energy[0]))
    if alpha is not None and alpha == 1.0:
        se = ts.extra.get("energy_se")
        tol = energy_sigma * float(np.max(se)) if se is not None and np.max(se) > 0 else ENERGY_NOISE_FLOOR * scale
        drift = float(np.max(np.abs(ts.energy - ts.energy[0])))
        checks.append(Check("conservation.energy", ref_e, drift, tol, _verdict(drift <= tol),
                            f"elastic: max |E(t) - E(0)| within {energy_sigma:g} standard errors"))
    else:
        ok = rise <= ENERGY_NOISE_FLOOR * scale
        detail = "max increase of E between outputs"
        if alpha is not None and alpha < 1.0:
            active = ts.accepted[1:] > 0
            strict = bool(np.all(de[active] < 0)) if np.any(active) else True
            ok = ok and strict
            detail += "; strictly decreasing over intervals with collisions" if strict else \
                "; not strictly decreasing over an interval with collisions"
        checks.append(Check("conservation.energy", ref_e, rise, ENERGY_NOISE_FLOOR * scale,
                            _verdict(ok), detail))
    return checks


def check_cooling_time(ts: TimeSeries, floor: float = 1e-12) -> Check:
    """Pass iff the energy stays above ``floor`` at every recorded time."""
    if not floor > 0:
        raise ValueError("floor must be positive")
    emin = float(np.min(ts.energy))
    return Check("cooling_time", "infinite cooling time", emin, floor, _verdict(emin > floor),
                 "min over outputs of E(t)")


def _slope(x, y):
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0]), float(coef[1])


def check_entropy_growth(ts: TimeSeries, alpha: float, *, sigma: float = 4.0,
                         count: int | None = None) -> Check:
    """Entropy growth versus the ``C t (1/alpha^2 - 1)`` bound.

    Elastic case: pass iff ``H(t) <= H(0) + eps`` with
    ``eps = sigma * sqrt(se(t)^2 + se(0)^2)`` from the recorded estimator
    standard errors (4 sigma covers the many output times).  Inelastic case:
    a monitor comparing the least-squares slope of ``H(t)`` with
    ``C_hat (1/alpha^2 - 1)``, where ``C_hat`` is half the largest measured
    collision rate ``int int int B f f_*`` (from accepted collisions per unit
    time when a particle count is known).
    """
    ref = "entropy growth bound"
    H = ts.entropy
    t = ts.times
    if len(ts) < 2:
        return Check("entropy_growth", ref, 0.0, MONITOR if alpha < 1 else 0.0,
                     PASS if alpha == 1 else MONITOR, "single output time")
    if alpha == 1.0:
        se = ts.extra.get("entropy_se", np.zeros(len(ts)))
        eps = sigma * np.sqrt(se ** 2 + se[0] ** 2)
        excess = H - H[0] - eps
        worst = float(np.max(excess[1:]))
        return Check("entropy_growth", ref, float(np.max(H[1:] - H[0])), float(np.max(eps[1:])),
                     _verdict(worst <= 0.0),
                     f"elastic: H(t) - H(0) <= {sigma:g} combined standard errors at every output")
    slope, _ = _slope(t, H)
    count = count or ts.config.get("count") or ts.config.get("particle_count")
    bound = math.nan
    detail = f"entropy slope {slope:.4g}"
    if count:
        rate = 2.0 * ts.accepted[1:] / (count * np.diff(t))
        c_hat = 0.5 * float(np.max(rate))
        bound = c_hat * (1.0 / alpha ** 2 - 1.0)
        detail += f" vs C_hat (1/alpha^2 - 1) = {bound:.4g} ({'within' if slope <= bound else 'above'})"
    return Check("entropy_growth", ref, slope, MONITOR, MONITOR, detail)


def check_pointwise_growth(ts: TimeSeries, probes=None, est=None, *, alpha: float | None = None,
                           r0: float = 0.5, t_fit: float = 1.0) -> list:
    """Pointwise growth monitors built from recorded density probes.

    ``W1 = max f (1 + |v|) / (1 + t)^3`` over all probes,
    ``W2 = max_{|v| >= r0} f |v|^2 / (1 + t)`` and
    ``W3 = max f (1 + |v|)^2 exp(-C2 (1/alpha^2 - 1) t)`` with ``C2`` the
    nonnegative least-squares growth rate of ``log max f (1 + |v|)^2`` over
    ``t <= t_fit``.  Each ratio ``max_t W / max_{t <= 1} W`` must stay below 10.
    """
    ref = "pointwise growth bounds"
    if ts.probe_values is None:
        return [Check(f"pointwise.W{i}", ref, math.nan, MONITOR, INCONCLUSIVE, "no probe values")
                for i in (1, 2, 3)]
    probes = ts.probes if probes is None else np.asarray(probes, dtype=float)
    alpha = ts.alpha if alpha is None else alpha
    t = ts.times
    F = ts.probe_values
    r = np.linalg.norm(probes, axis=1)
    W1 = np.max(F * (1.0 + r), axis=1) / (1.0 + t) ** 3
    far = r >= r0
    W2 = np.max(F[:, far] * r[far] ** 2, axis=1) / (1.0 + t)
    S2 = np.max(F * (1.0 + r) ** 2, axis=1)
    early = t <= t_fit + 1e-12
    rate = 0.0
    if alpha is not None and alpha < 1.0 and np.sum(early) >= 2:
        k, _ = _slope(t[early], np.log(S2[early]))
        rate = max(k, 0.0)
    c2 = rate / (1.0 / alpha ** 2 - 1.0) if alpha is not None and alpha < 1.0 else 0.0
    W3 = S2 * np.exp(-rate * t)
    out = []
    for name, W, extra in (("W1", W1, ""), ("W2", W2, f"r0={r0:g}"), ("W3", W3, f"C2={c2:.4g}")):
        ratio = monitor_ratio(W, t)
        status = "within" if ratio <= MONITOR_FACTOR else "EXCEEDS"
        out.append(Check(f"pointwise.{name}", ref, ratio, MONITOR, MONITOR,
                         f"max W / max_(t<=1) W = {ratio:.4g} {status} {MONITOR_FACTOR:g}x {extra}".rstrip()))
    return out


def fit_haff(ts: TimeSeries, t_min: float = 10.0, t_shift: float = 1.0) -> Check:
    """Least-squares slope of ``log E`` against ``log(t_shift + t)`` for ``t >= t_min``.

    The default ``t_shift = 1`` is the ``log(1 + t)`` fit; the monitor target
    is -2.  Fewer than 3 points gives ``inconclusive``.
    """
    ref = "Haff cooling law"
    sel = ts.times >= t_min
    if np.sum(sel) < 3:
        return Check("haff_exponent", ref, math.nan, MONITOR, INCONCLUSIVE,
                     f"fewer than 3 outputs with t >= {t_min:g}")
    E = ts.energy[sel]
    if np.any(E <= 0):
        return Check("haff_exponent", ref, math.nan, MONITOR, INCONCLUSIVE, "nonpositive energy")
    slope, _ = _slope(np.log(t_shift + ts.times[sel]), np.log(E))
    return Check("haff_exponent", ref, slope, MONITOR, MONITOR,
                 f"slope of log E vs log({t_shift:g} + t) over t >= {t_min:g}; target -2")


def haff_closure_slope(t, c: float, t_shift: float = 1.0) -> float:
    """Slope the same fit returns for the closure law ``E = (1 + c t / 2)^-2``."""
    t = np.asarray(t, dtype=float)
    slope, _ = _slope(np.log(t_shift + t), -2.0 * np.log(1.0 + 0.5 * c * t))
    return slope


def fit_maxwellian_envelope(snapshot: Ensemble, est: DensityEstimator | None = None, *,
                            band=(1.5, 4.0), points: int = 20, degree: int = 11,
                            min_shell_count: int = 10, min_fraction: float = 0.5) -> Check:
    """Fit ``log f_hat = b - a |v|^2`` over the speed band ``[1.5, 4] sqrt(T)``.

    ``f_hat`` is the kernel estimate averaged over the directions of a sphere
    rule.  A band radius counts only if at least ``min_shell_count`` particles
    lie within half a bandwidth of that speed; fewer than ``min_fraction`` of
    usable radii (or fewer than 3) gives ``inconclusive``.  Pass iff ``a > 0``.
    """
    ref = "Maxwellian upper envelope"
    if snapshot.count < 10_000:
        return Check("maxwellian_envelope", ref, math.nan, 0.0, INCONCLUSIVE,
                     "snapshot needs at least 1e4 particles")
    est = est or DensityEstimator.scott(snapshot)
    mass = float(np.sum(snapshot.weights))
    sp = np.linalg.norm(snapshot.velocities, axis=1)
    T = float(snapshot.weights @ sp ** 2) / (3.0 * mass)
    radii = np.linspace(band[0], band[1], points) * math.sqrt(T)
    h = est.bandwidth
    counts = np.array([np.sum(np.abs(sp - rr) < 0.5 * h) for rr in radii])
    usable = counts >= min_shell_count
    if np.sum(usable) < max(3, min_fraction * points):
        return Check("maxwellian_envelope", ref, math.nan, 0.0, INCONCLUSIVE,
                     f"only {int(np.sum(usable))} of {points} band radii resolved")
    quad = sphere_rule(degree)
    wq = quad.weights / quad.weights.sum()
    rr = radii[usable]
    pts = (rr[:, None, None] * quad.nodes[None]).reshape(-1, 3)
    fh = kde_density(snapshot, np.ascontiguousarray(pts), est).reshape(len(rr), -1) @ wq
    if np.any(fh <= 0):
        return Check("maxwellian_envelope", ref, math.nan, 0.0, INCONCLUSIVE, "zero density in band")
    slope, intercept = _slope(rr ** 2, np.log(fh))
    a = -slope
    return Check("maxwellian_envelope", ref, [a, intercept], 0.0, _verdict(a > 0),
                 f"a_hat={a:.4g} b_hat={intercept:.4g} over |v| in [{rr[0]:.3g}, {rr[-1]:.3g}]")


# ---------------------------------------------------------------------------
# grid checks
# ---------------------------------------------------------------------------


def default_planes(scale: float = 1.0) -> list:
    """Five planes through the bulk of a unit-energy distribution."""
    s3 = 1.0 / math.sqrt(3.0)
    return [
        Plane([0.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
        Plane([0.3 * scale, 0.0, 0.0], [1.0, 0.0, 0.0]),
        Plane([0.0, -0.5 * scale, 0.2 * scale], [0.0, 1.0, 0.0]),
        Plane([0.2 * scale] * 3, [s3, s3, s3]),
        Plane([0.0, 0.8 * scale, 0.0], [0.0, 0.6, 0.8]),
    ]


def check_gain_bounds(g: VelocityGrid, r: Restitution, probes_v, probe_planes,
                      tol: float = GAIN_TOL) -> list:
    """``int Q+ |v1 - v|^{-1} dv1 <= 4 pi m^2`` and ``int_E Q+ dE <= 2 pi m^2``.

    Both integrals are evaluated on the discrete data in weak form, with the
    sigma integral done exactly, so the only error is the trapezoid rule in
    the two partner velocities.
    """
    m = g.mass()
    vals = gain_inverse_distance(g, r, probes_v) if len(probes_v) else np.zeros(0)
    b4 = 4.0 * math.pi * m * m
    th4 = b4 * (1.0 + tol)
    w = float(np.max(vals)) if vals.size else 0.0
    planes = np.array([gain_on_plane(g, r, p) for p in probe_planes])
    b2 = 2.0 * math.pi * m * m
    th2 = b2 * (1.0 + tol)
    pm = float(np.max(planes)) if planes.size else 0.0
    return [
        Check("gain.weighted", "weighted gain bound 4 pi m^2", vals, th4, _verdict(w <= th4),
              f"max over {len(vals)} probes = {w:.6g}; 4 pi m^2 = {b4:.6g}"),
        Check("gain.plane", "plane gain bound 2 pi m^2", planes, th2, _verdict(pm <= th2),
              f"max over {len(planes)} planes = {pm:.6g}; 2 pi m^2 = {b2:.6g}"),
    ]


def check_loss_bound(g: VelocityGrid, tol: float = LOSS_TOL) -> Check:
    """``Lf(v) >= pi |v| (1 - tol)`` at every node (mass 1, zero momentum data)."""
    L = loss_all_nodes(g).reshape(-1)
    r = np.linalg.norm(g.points, axis=1)
    bound = math.pi * r * (1.0 - tol)
    margin = float(np.min(L - bound))
    detail = f"mass={g.mass():.12g}, |momentum|={np.linalg.norm(g.momentum()):.3g}"
    return Check("loss.lower_bound", "loss frequency >= pi |v|", margin, 0.0,
                 _verdict(margin >= 0.0), "min over nodes of Lf - pi|v|(1 - tol); " + detail)


def check_weak_identities(g: VelocityGrid, r: Restitution, quad: SphereQuadrature | None = None) -> list:
    """Weak moments of ``1`` and ``v_i`` vanish; the ``|v|^2`` moment equals the defect sum."""
    quad = quad or sphere_rule(7)
    wm = weak_moments(g, r, quad)
    mom = max(abs(wm["v_x"]), abs(wm["v_y"]), abs(wm["v_z"]))
    diff = abs(wm["speed2"] - wm["defect"])
    scale = max(1.0, abs(wm["defect"]))
    nonpos = wm["speed2"] <= DEFECT_TOL * scale
    return [
        Check("weak.mass", "mass conservation", wm["one"], 0.0, _verdict(wm["one"] == 0.0),
              "exact zero required"),
        Check("weak.momentum", "momentum conservation", mom, 0.0, _verdict(mom == 0.0),
              "exact zero required"),
        Check("weak.energy", "energy dissipation identity", diff, DEFECT_TOL * scale,
              _verdict(diff <= DEFECT_TOL * scale and nonpos),
              f"speed2={wm['speed2']:.12g} defect={wm['defect']:.12g}"),
    ]


def check_energy_defect_identity(count: int = 10_000, seed: int = 0, alpha: float = 0.5) -> Check:
    """Random collisions: direct energy change equals the closed-form defect."""
    from .kinematics import make_restitution

    rng = np.random.default_rng(seed)
    r = make_restitution(alpha)
    v = rng.standard_normal((count, 3))
    vs = rng.standard_normal((count, 3))
    n = rng.standard_normal((count, 3))
    n /= np.linalg.norm(n, axis=1)[:, None]
    flip = np.einsum("ij,ij->i", vs - v, n) < 0
    n[flip] *= -1
    a, b = post_collision_n(v, vs, n, r)
    direct = (np.sum(a * a, 1) + np.sum(b * b, 1) - np.sum(v * v, 1) - np.sum(vs * vs, 1))
    scale = np.sum(v * v, 1) + np.sum(vs * vs, 1)
    err = float(np.max(np.abs(direct - energy_defect(v, vs, n, r)) / scale))
    return Check("kinematics.energy_defect", "energy defect identity", err, 1e-12, _verdict(err <= 1e-12),
                 f"{count} random collisions, alpha={alpha:g}")


def check_plane_growth(grids, r: Restitution, plane: Plane, times=None) -> Check:
    """Plane mass ``I(t)`` against ``min(1 + t, exp(c t))`` with ``c`` fitted.

    ``c`` is the nonnegative least-squares growth rate of ``log I``.  The
    monitor ratio is ``max_t R(t) / R(0)`` with ``R = I / min(1 + t, e^{c t})``.
    """
    ref = "plane integral growth"
    grids = list(grids)
    if len(grids) < 3:
        return Check("plane_growth", ref, math.nan, MONITOR, INCONCLUSIVE, "need at least 3 grids")
    t = np.array([gr.time for gr in grids] if times is None else times, dtype=float)
    mass_e = np.array([plane_integral(gr, plane) for gr in grids])
    if np.all(mass_e == 0):
        return Check("plane_growth", ref, 1.0, MONITOR, MONITOR, "I(t) identically 0")
    pos = mass_e > 0
    c = max(_slope(t[pos], np.log(mass_e[pos]))[0], 0.0) if np.sum(pos) >= 2 else 0.0
    R = mass_e / np.minimum(1.0 + t, np.exp(c * t))
    ratio = float(np.max(R) / R[0]) if R[0] > 0 else math.inf
    status = "within" if ratio <= MONITOR_FACTOR else "EXCEEDS"
    return Check("plane_growth", ref, ratio, MONITOR, MONITOR,
                 f"I(0)={mass_e[0]:.4g}, c_hat={c:.4g}, max R/R(0) {status} {MONITOR_FACTOR:g}x")


def compare_series(dsmc: TimeSeries, oracle: TimeSeries, oracle_tol: dict | None = None,
                   sigma: float = 3.0) -> list:
    """Energy and ``||f||_{1,2}`` agreement at the common output times.

    Pass iff ``|E_dsmc - E_oracle| <= sigma * SE + tol`` at every common time,
    with ``SE`` the recorded DSMC standard error and ``tol`` the oracle
    tolerance per time (zero if not given).
    """
    if dsmc.alpha is not None and oracle.alpha is not None and dsmc.alpha != oracle.alpha:
        raise ValueError(f"alpha mismatch: dsmc {dsmc.alpha} vs oracle {oracle.alpha}")
    common = [t for t in dsmc.times if np.any(np.abs(oracle.times - t) <= 1e-9)]
    if not common:
        raise ValueError("no common output times")
    idx_d = np.array([int(np.argmin(np.abs(dsmc.times - t))) for t in common])
    idx_o = np.array([int(np.argmin(np.abs(oracle.times - t))) for t in common])
    tol = oracle_tol or {}
    out = []
    for key, d_vals, o_vals, se in (
        ("energy", dsmc.energy, oracle.energy, dsmc.extra.get("energy_se")),
        ("l12", dsmc.extra.get("l12"), oracle.extra.get("l12"), dsmc.extra.get("l12_se")),
    ):
        if d_vals is None or o_vals is None:
            continue
        se = np.zeros(len(dsmc)) if se is None else se
        tt = np.asarray(tol.get(key, np.zeros(len(oracle))))
        gap = np.abs(d_vals[idx_d] - o_vals[idx_o])
        allowed = sigma * se[idx_d] + tt[idx_o]
        ratio = float(np.max(gap / np.where(allowed > 0, allowed, np.inf))) if np.any(allowed > 0) else (
            0.0 if np.all(gap == 0) else math.inf)
        out.append(Check(f"compare.{key}", "DSMC vs grid oracle", gap, allowed,
                         _verdict(bool(np.all(gap <= allowed))),
                         f"max gap / allowed = {ratio:.3g} over {len(common)} times"))
    return out
