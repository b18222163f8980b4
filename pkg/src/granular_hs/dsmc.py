"""Direct simulation Monte Carlo for the homogeneous inelastic hard-sphere equation.

Collisions are generated with the majorant (null-collision) method.  A
candidate picks an ordered pair of distinct particles and a direction ``n``
uniform on the whole sphere, and is accepted with probability
``|u . n| / V_maj``.  The collision map depends on ``n`` only through
``n (x) n``, so sampling the whole sphere is the same as sampling the
admissible hemisphere.  Matching the accepted rate to the collision
frequency ``pi |u_ij| / N`` per unordered pair gives an expected
``pi (N - 1) V_maj dt`` candidates per step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .config import RunConfig
from .ensemble import (
    DensityEstimator,
    Ensemble,
    default_probes,
    entropy_estimate,
    entropy_standard_error,
    kde_density,
    moments,
    sample_initial,
)
from .kinematics import Restitution, make_restitution
from .series import TimeSeries

log = logging.getLogger(__name__)

__all__ = [
    "DsmcParams",
    "StepStats",
    "RunResult",
    "NumericalAbort",
    "collision_majorant",
    "expected_candidates",
    "step",
    "collide_pair",
    "run",
    "default_dt",
]

#: Sub-step when a particle would be a candidate with probability above this.
MAX_CANDIDATE_PROB = 0.1
#: Majorant growth factor after an observed violation.
RETRY_GROWTH = 1.25


class NumericalAbort(RuntimeError):
    """Non-finite state detected; ``partial`` holds the series recorded so far."""

    def __init__(self, msg, partial=None):
        super().__init__(msg)
        self.partial = partial


@dataclass(frozen=True)
class DsmcParams:
    """Step size, restitution law, majorant slack and the seed of the random stream."""

    dt: float
    restitution: Restitution
    majorant_slack: float = 1.0
    seed: int = 0
    steps: int = 1

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive")
        if self.majorant_slack < 1:
            raise ValueError("majorant_slack must be at least 1")
        if int(self.seed) < 0:
            raise ValueError("seed must be nonnegative")


@dataclass
class StepStats:
    candidates: int = 0
    accepted: int = 0
    energy_before: float = 0.0
    energy_after: float = 0.0
    defect_sum: float = 0.0
    substeps: int = 1
    retries: int = 0


def collision_majorant(e: Ensemble, slack: float = 1.0) -> float:
    """``slack * 2 max_i |v_i|``, an upper bound on every relative speed."""
    if e.count == 0:
        raise ValueError("ensemble is empty")
    return float(slack) * 2.0 * _kernels.max_speed(e.velocities)


def expected_candidates(count: int, vmaj: float, dt: float) -> float:
    """Mean number of candidates per step for equal weights ``1/count``."""
    return math.pi * (count - 1) * vmaj * dt


def default_dt(e: Ensemble, slack: float = 1.0) -> float:
    vmaj = collision_majorant(e, slack)
    if vmaj == 0.0:
        return 1.0
    return 0.01 / vmaj


def _stream(seed, attempt, sub, step_index):
    """Counter-based generator for one (seed, step, sub-step, attempt)."""
    bitgen = np.random.Philox(
        key=np.array([seed, attempt], dtype=np.uint64),
        counter=np.array([0, sub, step_index, 0], dtype=np.uint64),
    )
    return np.random.Generator(bitgen)


def _check_weights(e: Ensemble) -> float:
    w = e.weights
    if not np.all(w == w[0]):
        raise ValueError("DSMC requires equal particle weights")
    mass = float(np.sum(w))
    if abs(mass - 1.0) > 1e-9:
        raise ValueError(f"ensemble mass must be 1, got {mass}")
    return float(w[0])


def step(e: Ensemble, p: DsmcParams, step_index: int):
    """Advance ``e`` by ``p.dt``; returns ``(new_ensemble, StepStats)``.

    ``step_index`` is the counter of the random stream, so the outcome depends
    only on ``(seed, step_index)`` and the input state.  Candidates are
    committed serially in index order.  If an observed ``|u . n|`` exceeds the
    majorant, the sub-step is discarded and redrawn with a larger majorant
    from a fresh stream.
    """
    w = _check_weights(e)
    N = e.count
    r = p.restitution
    vel = e.velocities.copy()
    vmaj = collision_majorant(e, p.majorant_slack)
    stats = StepStats(energy_before=w * _kernels.sum_sq(vel))
    if vmaj == 0.0 or N < 2:
        stats.energy_after = stats.energy_before
        return e.with_velocities(vel, e.time + p.dt), stats
    nsub = max(1, math.ceil(2.0 * expected_candidates(N, vmaj, p.dt) / N / MAX_CANDIDATE_PROB))
    stats.substeps = nsub
    h = p.dt / nsub
    for sub in range(nsub):
        if sub:
            vmaj = collision_majorant(e.with_velocities(vel, 0.0), p.majorant_slack)
        attempt = 0
        while True:
            rng = _stream(int(p.seed), attempt, sub, int(step_index))
            lam = expected_candidates(N, vmaj, h)
            base = math.floor(lam)
            ncand = base + int(rng.random() < lam - base)
            rnd = rng.random((ncand, 5))
            trial = vel.copy()
            acc, defect, bad, speed = _kernels.dsmc_collide(trial, rnd, vmaj, r.beta, r.alpha)
            if bad < 0:
                vel = trial
                stats.candidates += ncand
                stats.accepted += int(acc)
                stats.defect_sum += float(defect)
                break
            new = max(RETRY_GROWTH * vmaj, 1.05 * speed)
            log.info("step %d: |u.n| = %.6g exceeded majorant %.6g; retrying with %.6g",
                     step_index, speed, vmaj, new)
            vmaj = new
            attempt += 1
            stats.retries += 1
    stats.energy_after = w * _kernels.sum_sq(vel)
    return e.with_velocities(vel, e.time + p.dt), stats


def collide_pair(e: Ensemble, i: int, j: int, n, r: Restitution):
    """Force one collision of particles ``i`` and ``j`` along ``n``.

    Returns ``(new_ensemble, energy_defect)``; the update is the same code
    path used inside :func:`step`.
    """
    n = np.asarray(n, dtype=float).reshape(3)
    vel = e.velocities.copy()
    d = _kernels.apply_collision(vel, int(i), int(j), n[0], n[1], n[2], r.beta, r.alpha)
    return e.with_velocities(vel, e.time), float(d)


@dataclass
class RunResult:
    series: TimeSeries
    snapshots: dict = field(default_factory=dict)
    final: Ensemble | None = None


def _estimator(e: Ensemble, cfg: RunConfig) -> DensityEstimator:
    if cfg.kde.bandwidth is not None:
        return DensityEstimator(cfg.kde.bandwidth)
    return DensityEstimator.scott(e, cfg.kde.scale)


def run(cfg: RunConfig, *, initial: Ensemble | None = None, probes=None,
        snapshot_sink=None) -> RunResult:
    """Integrate from the configured initial data to ``cfg.t_end``.

    Moments, entropy and density-estimate probes are recorded at every output
    time; each interval between outputs is split into equal steps no longer
    than the configured (or default) ``dt``.  ``snapshot_sink(ensemble)`` is
    called at snapshot times; the snapshots are also kept in the result.
    """
    r = make_restitution(cfg.alpha)
    e = initial if initial is not None else sample_initial(cfg.initial_kind, cfg.particle_count, cfg.seed)
    w = _check_weights(e)
    dt = cfg.dt if cfg.dt is not None else default_dt(e, cfg.majorant_slack)
    probes = default_probes(cfg.seed) if probes is None else np.ascontiguousarray(probes, dtype=float)
    snap_times = list(cfg.snapshot_times)

    rows = {k: [] for k in ("t", "mass", "mom", "energy", "entropy", "accepted", "defect")}
    extra = {k: [] for k in ("energy_se", "l12", "l12_se", "entropy_se", "bandwidth", "retries")}
    fvals = []
    snapshots = {}

    def series():
        return TimeSeries(
            times=rows["t"], mass=rows["mass"], momentum=np.array(rows["mom"]).reshape(-1, 3),
            energy=rows["energy"], entropy=rows["entropy"], accepted=rows["accepted"],
            defect_sum=rows["defect"], extra=extra, probes=probes,
            probe_values=np.array(fvals).reshape(len(rows["t"]), -1) if fvals else None,
            config={**cfg.to_dict(), "dt_effective": dt, "count": e.count},
        )

    def record(ens, accepted, defect, retries):
        if not np.all(np.isfinite(ens.velocities)):
            raise NumericalAbort(f"non-finite velocity at t={ens.time}", series())
        m = moments(ens, (2.0,))
        sp2 = np.einsum("ij,ij->i", ens.velocities, ens.velocities)
        est = _estimator(ens, cfg)
        rows["t"].append(ens.time)
        rows["mass"].append(m.mass)
        rows["mom"].append(m.momentum)
        rows["energy"].append(m.energy)
        rows["entropy"].append(entropy_estimate(ens, cfg.entropy_bins))
        rows["accepted"].append(accepted)
        rows["defect"].append(defect)
        extra["energy_se"].append(float(np.std(sp2)) / math.sqrt(ens.count))
        extra["l12"].append(m.l1s_norms[2.0])
        extra["l12_se"].append(float(np.std(1.0 + sp2)) / math.sqrt(ens.count))
        extra["entropy_se"].append(entropy_standard_error(ens, cfg.entropy_bins))
        extra["bandwidth"].append(est.bandwidth)
        extra["retries"].append(retries)
        fvals.append(kde_density(ens, probes, est))
        for ts in snap_times:
            if abs(ts - ens.time) <= 1e-12 * max(1.0, cfg.t_end):
                snapshots[ts] = ens
                if snapshot_sink is not None:
                    snapshot_sink(ens)

    record(e, 0, 0.0, 0)
    k = 0
    for target in cfg.output_times[1:]:
        span = target - e.time
        nsteps = max(1, math.ceil(span / dt - 1e-9))
        h = span / nsteps
        p = DsmcParams(h, r, cfg.majorant_slack, cfg.seed)
        acc = 0
        defect = 0.0
        retries = 0
        for _ in range(nsteps):
            e, st = step(e, p, k)
            k += 1
            acc += st.accepted
            defect += st.defect_sum
            retries += st.retries
            if not math.isfinite(st.energy_after):
                raise NumericalAbort(f"non-finite energy after step {k}", series())
        e = e.with_velocities(e.velocities, target)
        record(e, acc, defect * w, retries)
        log.debug("t=%g energy=%.6g accepted=%d", target, rows["energy"][-1], acc)
    return RunResult(series(), snapshots, e)
