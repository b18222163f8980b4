"""Deterministic discrete-velocity evaluation of the collision operator.

``f`` lives on a uniform Cartesian lattice over ``[-V, V]^3`` and is
integrated with the product trapezoid rule.  Off-lattice values come from a
cubic B-spline interpolant by default (trilinear is available with
``order=1``); values outside the box are zero.

Two independent routes to the gain term are provided:

* :func:`q_gain_sigma` integrates over partner velocities and the scattering
  direction ``sigma``, using the pre-collision velocities.
* :func:`q_gain_carleman` integrates over a partner velocity ``v`` and over
  the plane through ``P = v1 + (1/beta - 1)(v1 - v)`` with normal
  ``(v1 - v)/|v1 - v|``, weighted by ``|v1 - v|^{-1} / beta^2``.

Weak forms, gain-term bounds and the explicit time step work with node pairs
and the post-collision sphere of each pair, which needs no interpolation.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import erf

from . import _kernels
from ._version import __version__
from .config import RunConfig
from .ensemble import DensityEstimator, Ensemble, kde_density
from .kinematics import Plane, Restitution, make_restitution
from .series import TimeSeries

log = logging.getLogger(__name__)

__all__ = [
    "VelocityGrid",
    "SphereQuadrature",
    "PlaneRule",
    "EulerStats",
    "GridLeakageWarning",
    "sphere_rule",
    "hemisphere_rule",
    "loss_L",
    "q_gain_sigma",
    "q_gain_carleman",
    "q_collision",
    "plane_integral",
    "weak_moment",
    "weak_moments",
    "gain_inverse_distance",
    "gain_on_plane",
    "euler_step",
    "run_oracle",
    "grid_from_ensemble",
    "ensemble_from_grid",
    "write_grid",
    "read_grid",
    "maxwellian_loss",
]

#: Leakage fraction above which the gain evaluation warns.
LEAK_WARN = 1e-3


class GridLeakageWarning(UserWarning):
    """Pre- or post-collision points leave the velocity box."""


def _prefilter(values: np.ndarray) -> np.ndarray:
    """Cubic B-spline coefficients interpolating ``values`` at the nodes.

    Coefficients outside the box are taken as zero, which is the convention
    of the evaluation kernel, so the interpolant reproduces every nodal value.
    """
    n = values.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = 1.0 / 6.0
    ab[1, :] = 2.0 / 3.0
    ab[2, :-1] = 1.0 / 6.0
    c = values.astype(np.float64, copy=True)
    for ax in range(3):
        moved = np.moveaxis(c, ax, 0).reshape(n, -1)
        sol = solve_banded((1, 1), ab, moved)
        c = np.moveaxis(sol.reshape((n,) * 3), 0, ax)
    return np.ascontiguousarray(c)


@dataclass(frozen=True)
class VelocityGrid:
    """Nodal values of ``f`` on ``n^3`` points of ``[-halfwidth, halfwidth]^3``."""

    halfwidth: float
    n: int
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.shape != (self.n,) * 3:
            raise ValueError(f"values must have shape {(self.n,) * 3}, got {vals.shape}")
        if self.n < 3 or not self.halfwidth > 0:
            raise ValueError("need n >= 3 and halfwidth > 0")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("grid values must be finite and nonnegative")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "halfwidth", float(self.halfwidth))
        object.__setattr__(self, "time", float(self.time))

    # -- construction ------------------------------------------------------

    @classmethod
    def from_function(cls, fn, halfwidth: float, n: int, time: float = 0.0) -> "VelocityGrid":
        """Sample ``fn(points) -> values`` with ``points`` of shape ``(n, n, n, 3)``."""
        ax = np.linspace(-halfwidth, halfwidth, n)
        X = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)
        return cls(halfwidth, n, np.asarray(fn(X), dtype=float), time)

    @classmethod
    def maxwellian(cls, halfwidth: float = 6.0, n: int = 21, T: float = 1.0 / 3.0,
                   normalize: bool = True) -> "VelocityGrid":
        """Centred Maxwellian with temperature ``T``, rescaled to unit discrete mass."""
        g = cls.from_function(
            lambda X: np.exp(-np.sum(X * X, axis=-1) / (2 * T)) / (2 * np.pi * T) ** 1.5,
            halfwidth, n)
        return g.normalized() if normalize else g

    def normalized(self) -> "VelocityGrid":
        m = self.mass()
        if not m > 0:
            raise ValueError("cannot normalise a grid with zero mass")
        return VelocityGrid(self.halfwidth, self.n, self.values / m, self.time)

    def with_values(self, values, time=None) -> "VelocityGrid":
        return VelocityGrid(self.halfwidth, self.n, values, self.time if time is None else time)

    # -- geometry ----------------------------------------------------------

    @property
    def spacing(self) -> float:
        return 2.0 * self.halfwidth / (self.n - 1)

    @cached_property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.halfwidth, self.halfwidth, self.n)

    @cached_property
    def weights(self) -> np.ndarray:
        """Product trapezoid weights (including ``h^3``)."""
        w1 = np.full(self.n, self.spacing)
        w1[0] = w1[-1] = 0.5 * self.spacing
        return np.einsum("i,j,k->ijk", w1, w1, w1)

    @cached_property
    def points(self) -> np.ndarray:
        a = self.axis
        X = np.stack(np.meshgrid(a, a, a, indexing="ij"), axis=-1)
        return np.ascontiguousarray(X.reshape(-1, 3))

    def node(self, i: int, j: int, k: int) -> np.ndarray:
        return np.array([self.axis[i], self.axis[j], self.axis[k]])

    def coefficients(self, order: int = 3) -> np.ndarray:
        if order == 1:
            return self.values
        if order == 3:
            return self._spline
        raise ValueError("interpolation order must be 1 or 3")

    @cached_property
    def _spline(self) -> np.ndarray:
        return _prefilter(self.values)

    def support(self):
        """Trapezoid-weighted values and points of the nodes where ``f > 0``."""
        fw = (self.weights * self.values).reshape(-1)
        keep = fw > 0
        return np.ascontiguousarray(fw[keep]), np.ascontiguousarray(self.points[keep])

    # -- moments -----------------------------------------------------------

    def mass(self) -> float:
        return float(np.sum(self.weights * self.values))

    def momentum(self) -> np.ndarray:
        fw = (self.weights * self.values).reshape(-1)
        return fw @ self.points

    def energy(self) -> float:
        fw = (self.weights * self.values).reshape(-1)
        return float(fw @ np.einsum("ij,ij->i", self.points, self.points))

    def l1s_norm(self, s: float = 2.0) -> float:
        fw = (self.weights * self.values).reshape(-1)
        sp2 = np.einsum("ij,ij->i", self.points, self.points)
        return float(fw @ (1.0 + sp2) ** (0.5 * s))

    def entropy(self) -> float:
        f = self.values
        pos = f > 0
        return float(np.sum(self.weights[pos] * f[pos] * np.log(f[pos])))

    def edge_mass(self) -> float:
        """Fraction of the mass carried by the outermost layer of nodes."""
        inner = self.weights[1:-1, 1:-1, 1:-1] * self.values[1:-1, 1:-1, 1:-1]
        m = self.mass()
        return float((m - inner.sum()) / m) if m > 0 else 0.0

    def sup_weighted(self, s: float) -> float:
        """Maximum nodal value of ``f (1 + |v|)^s``."""
        r = np.linalg.norm(self.points, axis=1)
        return float(np.max(self.values.reshape(-1) * (1.0 + r) ** s))


@dataclass(frozen=True)
class SphereQuadrature:
    """Nodes and weights on the unit sphere, exact up to spherical-harmonic ``degree``."""

    nodes: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return self.weights.size


def sphere_rule(degree: int = 17) -> SphereQuadrature:
    """Gauss-Legendre in ``cos(theta)`` times the uniform trapezoid in azimuth.

    Uses ``degree // 2 + 1`` polar nodes and twice as many azimuths, which is
    exact for spherical harmonics of degree ``<= degree``.
    """
    if degree < 1:
        raise ValueError("degree must be positive")
    nt = degree // 2 + 1
    nphi = 2 * nt
    x, w = np.polynomial.legendre.leggauss(nt)
    phi = 2.0 * np.pi * np.arange(nphi) / nphi
    ct = np.repeat(x, nphi)
    st = np.sqrt(1.0 - ct * ct)
    ph = np.tile(phi, nt)
    nodes = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=1)
    weights = np.repeat(w, nphi) * (2.0 * np.pi / nphi)
    return SphereQuadrature(np.ascontiguousarray(nodes), weights, int(degree))


def hemisphere_rule(quad: SphereQuadrature, axis=(0.0, 0.0, 1.0)) -> SphereQuadrature:
    """Rule for ``int_{k . n >= 0} g(n) dn`` induced by ``d sigma = 4 cos(theta) dn``.

    Each sigma node with polar angle ``2 theta`` about ``axis`` maps to the
    impact direction with polar angle ``theta`` and the same azimuth; its
    weight is divided by ``4 cos(theta)``.
    """
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    s = quad.nodes
    c2 = np.clip(s @ k, -1.0, 1.0)
    cos_t = np.sqrt(0.5 * (1.0 + c2))
    perp = s - c2[:, None] * k
    pn = np.linalg.norm(perp, axis=1)
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t ** 2))
    with np.errstate(invalid="ignore", divide="ignore"):
        dirs = np.where(pn[:, None] > 0, perp / np.where(pn > 0, pn, 1.0)[:, None], 0.0)
    n = cos_t[:, None] * k + sin_t[:, None] * dirs
    return SphereQuadrature(n, quad.weights / (4.0 * cos_t), quad.degree)


@dataclass(frozen=True)
class PlaneRule:
    """Discretisation of the plane-integral representation.

    ``radial`` Gauss-Legendre nodes along each ray from ``v1``; ``spacing`` of
    the in-plane trapezoid (``None`` means the lattice spacing); ``degree`` of
    the direction rule (``None`` means the rule passed alongside).
    """

    radial: int = 32
    spacing: float | None = None
    degree: int | None = None


@dataclass
class EulerStats:
    clipped_mass: float = 0.0
    leak_mass: float = 0.0
    leak_energy: float = 0.0
    max_loss_rate: float = 0.0
    pairs_threshold: float = 0.0


def _points(v1):
    pts = np.asarray(v1, dtype=float)
    single = pts.ndim == 1
    return np.ascontiguousarray(pts.reshape(-1, 3)), single


def loss_L(g: VelocityGrid, v1):
    """Loss frequency ``pi * sum |v1 - v_*| f(v_*)`` (trapezoid) at one or many points."""
    pts, single = _points(v1)
    fw, nodes = g.support()
    out = _kernels.loss_many(fw, nodes, pts)
    return float(out[0]) if single else out


def loss_all_nodes(g: VelocityGrid) -> np.ndarray:
    """Loss frequency at every lattice node, shaped like ``g.values``."""
    fw, nodes = g.support()
    return _kernels.loss_many(fw, nodes, g.points).reshape(g.values.shape)


def q_gain_sigma(g: VelocityGrid, v1, quad: SphereQuadrature, r: Restitution, *,
                 order: int = 3, return_leak: bool = False):
    """Gain term at ``v1`` from the sigma form with pre-collision velocities.

    ``Q+(v1) = 1/(4 alpha^2) int |v1 - v_*| int f('v_*) f('v1) d sigma dv_*`` with the
    outer integral done by the trapezoid rule over the lattice nodes
    with ``('v1, 'v_*) = c +- ((1 - gamma)/2 u + gamma/2 |u| sigma)``.
    ``v1`` may be a point, an ``(M, 3)`` array or a node index triple.
    """
    if isinstance(v1, tuple) and len(v1) == 3 and all(isinstance(i, (int, np.integer)) for i in v1):
        v1 = g.node(*v1)
    pts, single = _points(v1)
    if not np.any(g.values > 0):
        out = np.zeros(len(pts))
        leak = np.zeros(len(pts))
    else:
        # v_* is an integration variable here: plain trapezoid weights over every node
        tw = np.ascontiguousarray(g.weights.reshape(-1))
        out, leak = _kernels.gain_sigma(g.coefficients(order), g.halfwidth, g.spacing, tw, g.points,
                                        pts, quad.nodes, quad.weights, r.gamma, order)
        out = out / (4.0 * r.alpha * r.alpha)
    if np.any(leak > LEAK_WARN):
        msg = f"gain evaluation: pre-collision leakage up to {leak.max():.3e}"
        log.warning(msg)
        warnings.warn(msg, GridLeakageWarning, stacklevel=2)
    if single:
        return (float(out[0]), float(leak[0])) if return_leak else float(out[0])
    return (out, leak) if return_leak else out


def q_gain_carleman(g: VelocityGrid, v1, r: Restitution, plane_rule: PlaneRule | None = None,
                    quad: SphereQuadrature | None = None, *, order: int = 3):
    """Gain term at ``v1`` from the plane representation in polar coordinates.

    ``Q+(v1) = beta^-2 int_{S^2} int_0^{r_max} r f(v1 - r w) I(P, w) dr dw`` where
    ``I(P, w)`` is the plane integral of ``f`` through
    ``P = v1 + (1/beta - 1) r w`` with normal ``w``.
    """
    rule = plane_rule or PlaneRule()
    if quad is None or (rule.degree is not None and rule.degree != quad.degree):
        quad = sphere_rule(rule.degree or 17)
    pts, single = _points(v1)
    xr, wr = np.polynomial.legendre.leggauss(rule.radial)
    hp = rule.spacing or g.spacing
    out = _kernels.gain_carleman(g.coefficients(order), g.halfwidth, g.spacing, pts, r.beta,
                                 quad.nodes, quad.weights, xr, wr, hp, order)
    out = out / (r.beta * r.beta)
    return float(out[0]) if single else out


def q_collision(g: VelocityGrid, v1, quad: SphereQuadrature, r: Restitution, *, order: int = 3):
    """``Q(f, f)(v1) = Q+(v1) - f(v1) Lf(v1)`` with the sigma-form gain."""
    pts, single = _points(v1)
    gain = np.atleast_1d(q_gain_sigma(g, pts, quad, r, order=order))
    fv = _kernels.interp_many(g.coefficients(order), g.halfwidth, g.spacing, pts, order)
    out = gain - fv * np.atleast_1d(loss_L(g, pts))
    return float(out[0]) if single else out


def plane_integral(g: VelocityGrid, pl: Plane, spacing: float | None = None, *, order: int = 3) -> float:
    """Trapezoid integral of ``f`` over the plane ``pl``; 0 if it misses the box."""
    hp = spacing or g.spacing
    return float(_kernels.plane_sum(g.coefficients(order), g.halfwidth, g.spacing,
                                    pl.point, pl.normal, hp, order))


_BUILTIN = {"one": 0, "v_x": 1, "v_y": 2, "v_z": 3, "vx": 1, "vy": 2, "vz": 3,
            "speed2": 4, "defect": 5}


def weak_moments(g: VelocityGrid, r: Restitution, quad: SphereQuadrature) -> dict:
    """All built-in weak moments from one pass over node pairs.

    Keys: ``one``, ``v_x``, ``v_y``, ``v_z``, ``speed2`` and ``defect`` (the
    energy-defect integrand written in sigma form, which must equal
    ``speed2``).
    """
    fw, pts = g.support()
    res = _kernels.weak_builtin(fw, pts, quad.nodes, quad.weights, r.beta, r.alpha)
    return {"one": res[0], "v_x": res[1], "v_y": res[2], "v_z": res[3],
            "speed2": res[4], "defect": res[5]}


def weak_moment(g: VelocityGrid, r: Restitution, quad: SphereQuadrature, phi) -> float:
    """``1/2 sum sum f f_* |u|/4 sum_q w_q (phi(v') + phi(v_*') - phi(v) - phi(v_*))``.

    ``phi`` is one of ``"one"``, ``"v_x"``, ``"v_y"``, ``"v_z"``, ``"speed2"``
    or a vectorised callable mapping ``(..., 3)`` arrays to ``(...)``.
    """
    if isinstance(phi, str):
        if phi not in _BUILTIN or phi == "defect":
            raise ValueError(f"unknown test function {phi!r}")
        return float(weak_moments(g, r, quad)[{1: "v_x", 2: "v_y", 3: "v_z"}.get(_BUILTIN[phi], phi)])
    fw, pts = g.support()
    b = r.beta
    s = quad.nodes
    total = 0.0
    for a in range(fw.size - 1):
        vb = pts[a + 1:]
        u = pts[a] - vb
        un = np.linalg.norm(u, axis=1)
        c = 0.5 * (pts[a] + vb)
        d = 0.5 * (1.0 - b) * u
        R = 0.5 * b * un
        x = (c + d)[:, None, :] + R[:, None, None] * s[None]
        y = (c - d)[:, None, :] - R[:, None, None] * s[None]
        diff = phi(x) + phi(y) - np.asarray(phi(pts[a]))[..., None] - np.asarray(phi(vb))[:, None]
        total += float(np.sum(fw[a] * fw[a + 1:] * 0.25 * un * (diff @ quad.weights)))
    return total


def gain_inverse_distance(g: VelocityGrid, r: Restitution, probes) -> np.ndarray:
    """``int Q+(f,f)(v1) |v1 - v|^{-1} dv1`` for each probe ``v`` (exact in sigma)."""
    pts, _ = _points(probes)
    fw, nodes = g.support()
    return _kernels.gain_inverse_distance(fw, nodes, r.beta, pts)


def gain_on_plane(g: VelocityGrid, r: Restitution, pl: Plane) -> float:
    """``int_E Q+(f,f) dE`` over the plane ``pl`` (exact in sigma)."""
    fw, nodes = g.support()
    return float(_kernels.gain_on_plane(fw, nodes, r.beta, pl.point, pl.normal))


def _restore_moments(values, weights, points, target, *, tol: float = 1e-14, max_iter: int = 50):
    """Multiply ``values`` by ``exp(lambda . psi(v))`` with ``psi = (1, v, |v|^2)``.

    ``lambda`` is found by Newton iteration so that the trapezoid moments of
    the result equal ``target``.  The factor is positive by construction and
    its first Newton step is the linearised correction ``1 + lambda . psi``.
    """
    fw = (weights * values).reshape(-1)
    psi = np.column_stack([np.ones(len(points)), points, np.einsum("ij,ij->i", points, points)])
    scale = abs(target[0]) + abs(target[4])
    lam = np.zeros(5)
    for _ in range(max_iter):
        fac = np.exp(psi @ lam)
        wf = fw * fac
        resid = target - wf @ psi
        if np.all(np.abs(resid) <= tol * scale):
            break
        lam = lam + np.linalg.solve((psi * wf[:, None]).T @ psi, resid)
    else:
        raise ValueError("moment restoration did not converge; reduce dt")
    return values * fac.reshape(values.shape)


def euler_step(g: VelocityGrid, dt: float, r: Restitution, quad: SphereQuadrature, *,
               pair_threshold: float = 1e-14, conserve: bool = True, return_stats: bool = False):
    """One explicit step ``f + dt (Q+ - f Lf)``, clipped at zero.

    The gain is assembled in weak form: for every node pair and sigma node the
    post-collision points are spread onto the lattice with quadratic Lagrange
    weights, which keeps mass, momentum and energy bookkeeping exact.  Pairs
    whose weighted product is below ``pair_threshold`` times the largest one
    are skipped in both gain and loss.  Raises ``ValueError`` before stepping
    if ``dt * max(Lf) >= 1``.

    The quadratic weights are partly negative, so tail nodes can go below
    zero.  Those nodes are clipped and the clipped mass is reported; with
    ``conserve`` the mass, momentum and energy of the unclipped update are
    then restored by a smooth multiplicative correction (see
    :func:`_restore_moments`).
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    stats = EulerStats()
    fw_all = (g.weights * g.values).reshape(-1)
    order = np.argsort(-fw_all, kind="stable")
    order = order[fw_all[order] > 0]
    if order.size < 2:
        out = g.with_values(g.values.copy(), g.time + dt)
        return (out, stats) if return_stats else out
    fw = np.ascontiguousarray(fw_all[order])
    pts = np.ascontiguousarray(g.points[order])
    thr = pair_threshold * fw[0] * fw[0]
    G, L, leak_m, leak_e = _kernels.euler_terms(fw, pts, g.n, g.halfwidth, g.spacing,
                                                 quad.nodes, quad.weights, r.beta, thr)
    Lfull = np.zeros(g.n ** 3)
    Lfull[order] = L
    Lfull = Lfull.reshape(g.values.shape)
    stats.max_loss_rate = float(Lfull.max())
    stats.pairs_threshold = thr
    if dt * stats.max_loss_rate >= 1.0:
        raise ValueError(f"dt * max(Lf) = {dt * stats.max_loss_rate:.3f} >= 1; reduce dt")
    gain = G / g.weights
    new = g.values + dt * (gain - g.values * Lfull)
    neg = new < 0
    stats.clipped_mass = float(-np.sum(g.weights[neg] * new[neg]))
    if stats.clipped_mass > 0.0:
        target = ((g.weights * new).reshape(-1)
                  @ np.column_stack([np.ones(g.n ** 3), g.points,
                                     np.einsum("ij,ij->i", g.points, g.points)]))
        new[neg] = 0.0
        if conserve:
            new = _restore_moments(new, g.weights, g.points, target)
    stats.leak_mass = dt * leak_m
    stats.leak_energy = dt * leak_e
    out = g.with_values(new, g.time + dt)
    return (out, stats) if return_stats else out


def initial_grid(kind: str, halfwidth: float, n: int) -> VelocityGrid:
    """Grid version of the normalised initial data (mass 1, energy 1)."""
    if kind == "gaussian":
        return VelocityGrid.maxwellian(halfwidth, n, 1.0 / 3.0)
    if kind == "two_temperature":
        # equal mixture of variances 1 and 4 per axis, rescaled to energy 1
        t1, t2 = 1.0 / 7.5, 4.0 / 7.5

        def mix(X):
            r2 = np.sum(X * X, axis=-1)
            return 0.5 * sum(np.exp(-r2 / (2 * t)) / (2 * np.pi * t) ** 1.5 for t in (t1, t2))

        return VelocityGrid.from_function(mix, halfwidth, n).normalized()
    raise ValueError(f"initial kind {kind!r} has no grid representation")


def run_oracle(cfg: RunConfig, dt: float | None = None, *, initial: VelocityGrid | None = None,
               quad: SphereQuadrature | None = None, snapshot_sink=None):
    """Explicit integration on the grid; returns ``(TimeSeries, {time: grid})``.

    Each output interval is split into equal steps no longer than ``dt``
    (default ``cfg.oracle_dt``).
    """
    r = make_restitution(cfg.alpha)
    g = initial if initial is not None else initial_grid(cfg.initial_kind, cfg.grid.halfwidth, cfg.grid.nodes)
    quad = quad or sphere_rule(cfg.quadrature_degree)
    dt = dt or cfg.oracle_dt
    rows = {k: [] for k in ("t", "mass", "mom", "energy", "entropy", "defect")}
    extra = {k: [] for k in ("l12", "clipped_mass", "leak_mass", "edge_mass")}
    grids = {}

    def record(gr, clipped, leak):
        rows["t"].append(gr.time)
        rows["mass"].append(gr.mass())
        rows["mom"].append(gr.momentum())
        e = gr.energy()
        rows["defect"].append(e - rows["energy"][-1] if rows["energy"] else 0.0)
        rows["energy"].append(e)
        rows["entropy"].append(gr.entropy())
        extra["l12"].append(gr.l1s_norm(2.0))
        extra["clipped_mass"].append(clipped)
        extra["leak_mass"].append(leak)
        extra["edge_mass"].append(gr.edge_mass())
        for ts in cfg.snapshot_times:
            if abs(ts - gr.time) <= 1e-12 * max(1.0, cfg.t_end):
                grids[ts] = gr
                if snapshot_sink is not None:
                    snapshot_sink(gr)

    record(g, 0.0, 0.0)
    for target in cfg.output_times[1:]:
        span = target - g.time
        nsteps = max(1, math.ceil(span / dt - 1e-9))
        h = span / nsteps
        clipped = leak = 0.0
        for _ in range(nsteps):
            g, st = euler_step(g, h, r, quad, return_stats=True)
            clipped += st.clipped_mass
            leak += st.leak_mass
        g = g.with_values(g.values, target)
        record(g, clipped, leak)
        log.debug("oracle t=%g energy=%.8g", target, rows["energy"][-1])
    ts = TimeSeries(
        times=rows["t"], mass=rows["mass"], momentum=np.array(rows["mom"]).reshape(-1, 3),
        energy=rows["energy"], entropy=rows["entropy"], accepted=np.zeros(len(rows["t"]), int),
        defect_sum=rows["defect"], extra=extra,
        config={**cfg.to_dict(), "oracle_dt_effective": dt, "kind": "oracle"},
    )
    return ts, grids


def grid_from_ensemble(e: Ensemble, halfwidth: float, n: int,
                       est: DensityEstimator | None = None) -> VelocityGrid:
    """Kernel density estimate of ``e`` sampled on the lattice."""
    est = est or DensityEstimator.scott(e)
    ax = np.linspace(-halfwidth, halfwidth, n)
    X = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    vals = kde_density(e, np.ascontiguousarray(X), est).reshape(n, n, n)
    return VelocityGrid(halfwidth, n, vals, e.time)


def ensemble_from_grid(g: VelocityGrid, count: int, seed: int) -> Ensemble:
    """Draw nodes with probability proportional to their trapezoid mass, jittered within a cell.

    The result is affinely corrected to the grid's mass-normalised mean and
    energy.
    """
    rng = np.random.default_rng(seed)
    p = (g.weights * g.values).reshape(-1)
    p = p / p.sum()
    idx = rng.choice(p.size, size=count, p=p)
    v = g.points[idx] + (rng.random((count, 3)) - 0.5) * g.spacing
    m = g.mass()
    mean = g.momentum() / m
    energy = g.energy() / m
    v = v - v.mean(axis=0)
    target = energy - mean @ mean
    v = v * math.sqrt(target / np.mean(np.einsum("ij,ij->i", v, v))) + mean
    return Ensemble(v, np.full(count, 1.0 / count), g.time)


def write_grid(g: VelocityGrid, path, *, alpha: float) -> Path:
    """CSV ``ix,iy,iz,f`` plus JSON sidecar ``{V, N, time, alpha}``."""
    path = Path(path)
    n = g.n
    ii, jj, kk = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    with open(path, "w", newline="\n") as fh:
        fh.write("ix,iy,iz,f\n")
        for i, j, k, f in zip(ii.ravel(), jj.ravel(), kk.ravel(), g.values.ravel()):
            fh.write(f"{i},{j},{k},{float(f)!r}\n")
    meta = {"V": g.halfwidth, "N": n, "time": g.time, "alpha": alpha, "code_version": __version__}
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def read_grid(path) -> tuple[VelocityGrid, dict]:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "ix,iy,iz,f":
            raise ValueError(f"{path}: unexpected grid header {header!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    n = int(meta["N"])
    vals = np.zeros((n, n, n))
    ijk = data[:, :3].astype(int)
    vals[ijk[:, 0], ijk[:, 1], ijk[:, 2]] = data[:, 3]
    return VelocityGrid(float(meta["V"]), n, vals, float(meta.get("time", 0.0))), meta


def maxwellian_loss(v, T: float = 1.0 / 3.0) -> np.ndarray:
    """Closed-form ``L M(v)`` for a unit-mass centred Maxwellian of temperature ``T``."""
    a = np.linalg.norm(np.atleast_2d(v), axis=-1) / math.sqrt(T)
    out = np.empty_like(a)
    small = a < 1e-8
    out[small] = 2.0 * math.sqrt(2.0 / math.pi)
    aa = a[~small]
    out[~small] = math.sqrt(2.0 / math.pi) * np.exp(-aa * aa / 2) + (aa + 1.0 / aa) * erf(aa / math.sqrt(2.0))
    return math.pi * math.sqrt(T) * out
