"""Weighted particle ensembles, initial data and density estimators."""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from ._version import __version__

log = logging.getLogger(__name__)

__all__ = [
    "Ensemble",
    "MomentReport",
    "DensityEstimator",
    "EntropyCoverageWarning",
    "sample_initial",
    "moments",
    "kde_density",
    "entropy_estimate",
    "entropy_standard_error",
    "write_snapshot",
    "read_snapshot",
    "INITIAL_KINDS",
    "default_probes",
]

INITIAL_KINDS = ("gaussian", "two_temperature", "shell")
#: Kernel support radius in bandwidths; the truncated Gaussian mass is ~1e-21.
KDE_CUTOFF = 10.0


class EntropyCoverageWarning(UserWarning):
    """The entropy histogram box misses more than 0.1% of the mass."""


@dataclass(frozen=True)
class Ensemble:
    """Particle velocities ``(N, 3)`` with weights ``(N,)`` at a given time."""

    velocities: np.ndarray
    weights: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        v = np.ascontiguousarray(self.velocities, dtype=np.float64)
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"velocities must have shape (N, 3), got {v.shape}")
        if w.shape != (v.shape[0],):
            raise ValueError("weights must have one entry per particle")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if self.time < 0:
            raise ValueError("time must be nonnegative")
        object.__setattr__(self, "velocities", v)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "time", float(self.time))

    @property
    def count(self) -> int:
        return self.velocities.shape[0]

    def with_velocities(self, velocities, time) -> "Ensemble":
        return Ensemble(velocities, self.weights, time)


@dataclass
class MomentReport:
    """Moments of an ensemble.

    ``mass``, ``momentum``, ``energy`` and ``l1s_norms`` are exact weighted
    sums.  ``entropy`` and ``sup_weighted`` are statistical estimates (see
    :func:`entropy_estimate` and :func:`kde_density`) and may be ``None`` or
    empty when not requested.
    """

    mass: float
    momentum: np.ndarray
    energy: float
    l1s_norms: dict = field(default_factory=dict)
    entropy: float | None = None
    sup_weighted: dict = field(default_factory=dict)
    estimated_fields: tuple = ("entropy", "sup_weighted")


@dataclass(frozen=True)
class DensityEstimator:
    """Gaussian kernel density estimator with a fixed bandwidth."""

    bandwidth: float

    def __post_init__(self):
        if not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise ValueError("bandwidth must be a positive finite number")

    @classmethod
    def scott(cls, e: Ensemble, scale: float = 1.0) -> "DensityEstimator":
        """Bandwidth ``scale * s * N^(-1/7)`` with ``s`` the per-axis velocity spread."""
        mass = float(np.sum(e.weights))
        mean = (e.weights @ e.velocities) / mass
        d = e.velocities - mean
        spread = math.sqrt(float(e.weights @ np.einsum("ij,ij->i", d, d)) / (3.0 * mass))
        if spread == 0.0:
            spread = 1.0
        return cls(scale * spread * e.count ** (-1.0 / 7.0))


def _normalize(v: np.ndarray) -> np.ndarray:
    """Shift to zero mean and scale to unit mean square speed (equal weights)."""
    v = v - v.mean(axis=0)
    e = np.mean(np.einsum("ij,ij->i", v, v))
    if not e > 0:
        raise ValueError("cannot normalise an ensemble with zero spread")
    return v / math.sqrt(e)


def sample_initial(kind: str, count: int, seed: int, T_ratio: float = 4.0) -> Ensemble:
    """Draw an initial ensemble with mass 1, zero momentum and unit energy.

    ``gaussian`` draws i.i.d. normal velocities.  ``two_temperature`` draws the
    first half from a normal with variance 1 and the rest with variance
    ``T_ratio``.  For both, the empirical mean is subtracted and the result
    rescaled so the energy is exactly 1 up to rounding.  ``shell`` draws
    antipodal pairs of uniform directions (even ``count`` only), which has zero
    momentum and equal speeds before the rescale to unit energy.
    """
    count = int(count)
    if count < 2:
        raise ValueError("count must be at least 2")
    rng = np.random.default_rng(seed)
    if kind == "gaussian":
        v = rng.standard_normal((count, 3))
    elif kind == "two_temperature":
        v = rng.standard_normal((count, 3))
        v[count // 2:] *= math.sqrt(T_ratio)
    elif kind == "shell":
        if count % 2:
            raise ValueError("shell ensembles need an even count (antipodal pairs)")
        half = count // 2
        v = rng.standard_normal((half, 3))
        v /= np.linalg.norm(v, axis=1)[:, None]
        # antipodal pairs give zero momentum while keeping every speed equal
        v = np.concatenate([v, -v])
    else:
        raise ValueError(f"unknown initial kind {kind!r}; expected one of {INITIAL_KINDS}")
    if kind == "shell":
        v = v / math.sqrt(np.mean(np.einsum("ij,ij->i", v, v)))
    else:
        v = _normalize(v)
    w = np.full(count, 1.0 / count)
    return Ensemble(v, w, 0.0)


def moments(e: Ensemble, s_list=(0.0, 2.0), *, with_entropy: bool = False,
            sup_probes=None, estimator: DensityEstimator | None = None,
            entropy_bins: int = 64) -> MomentReport:
    """Exact weighted moments plus optional entropy and weighted-sup estimates.

    ``l1s_norms[s] = sum_i w_i (1 + |v_i|^2)^(s/2)``.  When ``sup_probes`` is
    given, ``sup_weighted[s]`` is the maximum over the probes of
    ``f_hat(v) (1 + |v|)^s`` with ``f_hat`` the kernel density estimate.
    """
    w = e.weights
    v = e.velocities
    sp2 = np.einsum("ij,ij->i", v, v)
    l1s = {float(s): float(w @ (1.0 + sp2) ** (0.5 * s)) for s in s_list}
    rep = MomentReport(
        mass=float(np.sum(w)),
        momentum=w @ v,
        energy=float(w @ sp2),
        l1s_norms=l1s,
    )
    if with_entropy:
        rep.entropy = entropy_estimate(e, entropy_bins)
    if sup_probes is not None:
        est = estimator or DensityEstimator.scott(e)
        probes = np.asarray(sup_probes, dtype=float).reshape(-1, 3)
        fh = kde_density(e, probes, est)
        r = np.linalg.norm(probes, axis=1)
        rep.sup_weighted = {float(s): float(np.max(fh * (1.0 + r) ** s)) for s in s_list}
    return rep


def kde_density(e: Ensemble, v, est: DensityEstimator):
    """Kernel estimate ``sum_i w_i K_h(v - v_i)``; ``v`` may be one point or ``(M, 3)``."""
    pts = np.asarray(v, dtype=float)
    single = pts.ndim == 1
    pts = np.ascontiguousarray(pts.reshape(-1, 3))
    out = _kernels.kde_eval(e.velocities, e.weights, pts, est.bandwidth, KDE_CUTOFF)
    return float(out[0]) if single else out


def _histogram(e: Ensemble, bins_per_axis: int, box_halfwidth: float | None):
    if bins_per_axis < 8:
        raise ValueError("bins_per_axis must be at least 8")
    mass = float(np.sum(e.weights))
    if box_halfwidth is None:
        energy = float(e.weights @ np.einsum("ij,ij->i", e.velocities, e.velocities)) / mass
        box_halfwidth = 6.0 * math.sqrt(max(energy, 1e-300) / 3.0)
    b = float(box_halfwidth)
    edges = np.linspace(-b, b, bins_per_axis + 1)
    hist, _ = np.histogramdd(e.velocities, bins=(edges, edges, edges), weights=e.weights)
    vol = (2.0 * b / bins_per_axis) ** 3
    covered = float(hist.sum()) / mass
    if covered < 0.999:
        msg = f"entropy box covers only {covered:.4%} of the mass"
        log.warning(msg)
        warnings.warn(msg, EntropyCoverageWarning, stacklevel=3)
    p = hist[hist > 0] / mass
    return p, vol


def _effective_count(e: Ensemble) -> float:
    w = e.weights
    return float(np.sum(w)) ** 2 / float(w @ w)


def entropy_estimate(e: Ensemble, bins_per_axis: int = 64, box_halfwidth: float | None = None,
                     *, bias_correction: bool = True) -> float:
    """Histogram estimate of ``int f log f`` (mass-normalised cell probabilities).

    The default box is ``[-6 sqrt(T), 6 sqrt(T)]^3`` with ``T = energy/3``.
    A warning is issued when the box holds less than 99.9% of the mass.  The
    plug-in sum is biased upwards by about ``(K - 1) / (2 N)`` for ``K``
    occupied cells; with ``bias_correction`` this Miller-Madow term is
    subtracted, using the effective sample size of the weights for ``N``.
    """
    p, vol = _histogram(e, bins_per_axis, box_halfwidth)
    h = float(np.sum(p * np.log(p / vol)))
    if bias_correction:
        h -= (p.size - 1) / (2.0 * _effective_count(e))
    return h


def entropy_standard_error(e: Ensemble, bins_per_axis: int = 64,
                           box_halfwidth: float | None = None) -> float:
    """Delta-method standard error of :func:`entropy_estimate` for i.i.d. samples."""
    p, vol = _histogram(e, bins_per_axis, box_halfwidth)
    lg = np.log(p / vol)
    h = float(np.sum(p * lg))
    var = max(float(np.sum(p * lg * lg)) - h * h, 0.0)
    return math.sqrt(var / _effective_count(e))


def write_snapshot(e: Ensemble, path, *, alpha: float, seed: int) -> Path:
    """Write ``vx,vy,vz,w`` CSV plus a JSON sidecar ``<path>.json``."""
    path = Path(path)
    data = np.column_stack([e.velocities, e.weights])
    with open(path, "w", newline="\n") as fh:
        fh.write("vx,vy,vz,w\n")
        np.savetxt(fh, data, fmt="%.17g", delimiter=",")
    meta = {"time": e.time, "alpha": alpha, "seed": seed, "count": e.count,
            "code_version": __version__}
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def read_snapshot(path) -> tuple[Ensemble, dict]:
    """Read a snapshot written by :func:`write_snapshot`; returns ``(ensemble, meta)``."""
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "vx,vy,vz,w":
            raise ValueError(f"{path}: unexpected snapshot header {header!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    side = Path(str(path) + ".json")
    meta = json.loads(side.read_text()) if side.exists() else {}
    return Ensemble(data[:, :3], data[:, 3], float(meta.get("time", 0.0))), meta


#: Radii of the ray probes (absolute velocity units).
PROBE_RADII = (0.125, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0)
_PROBE_RAYS = np.array([
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [1.0, 1.0, 1.0],
]) / np.array([[1.0], [1.0], [1.0], [math.sqrt(3.0)]])


def default_probes(seed: int = 0, n_random: int = 17) -> np.ndarray:
    """Origin, four rays times :data:`PROBE_RADII` (33 points) and random draws.

    The random probes are normal with variance 1/3 per axis, matching the
    normalised initial temperature.
    """
    ray = [np.zeros(3)] + [r * d for d in _PROBE_RAYS for r in PROBE_RADII]
    rng = np.random.default_rng([seed, 0x5EED])
    extra = rng.standard_normal((n_random, 3)) / math.sqrt(3.0)
    return np.ascontiguousarray(np.vstack([np.array(ray), extra]))
