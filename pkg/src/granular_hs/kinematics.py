"""Binary collision algebra for inelastic hard spheres.

Every function here is pure and vectorised: velocity arguments may be single
3-vectors or stacked arrays of shape ``(..., 3)`` that broadcast together.
The impact direction ``n`` lives on the hemisphere where
``cos(theta) = k . n >= 0`` with ``k = (v_star - v) / |v_star - v|``.  Inputs on
the wrong hemisphere are rejected instead of silently reflected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Restitution",
    "Plane",
    "make_restitution",
    "post_collision_n",
    "post_collision_sigma",
    "pre_collision_n",
    "pre_collision_sigma",
    "energy_defect",
    "sigma_of_n",
    "carleman_point",
    "carleman_plane",
    "pair_map_jacobian",
]

#: Tolerance on |n| - 1 and |sigma| - 1.
UNIT_TOL = 1e-12
#: Slack allowed on cos(theta) >= 0 before an input is declared inadmissible.
ADMISSIBLE_TOL = 1e-12


@dataclass(frozen=True)
class Restitution:
    """Constant normal restitution coefficient and its two derived factors.

    ``beta`` scales the post-collision map and ``gamma`` the pre-collision
    map.  Build instances with :func:`make_restitution`, which validates the
    range of ``alpha``.
    """

    alpha: float

    def __post_init__(self):
        a = float(self.alpha)
        if not np.isfinite(a) or a <= 0.0 or a > 1.0:
            raise ValueError(f"alpha must lie in (0,1], got {self.alpha!r}")
        object.__setattr__(self, "alpha", a)

    @property
    def beta(self) -> float:
        return 0.5 * (1.0 + self.alpha)

    @property
    def gamma(self) -> float:
        return 0.5 * (1.0 + 1.0 / self.alpha)

    @property
    def elastic(self) -> bool:
        return self.alpha == 1.0


def make_restitution(alpha: float) -> Restitution:
    """Return the :class:`Restitution` for ``alpha`` in (0, 1]."""
    return Restitution(alpha)


@dataclass(frozen=True)
class Plane:
    """A 2-plane in velocity space given by a point and a unit normal."""

    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.point, dtype=float).reshape(3)
        m = np.asarray(self.normal, dtype=float).reshape(3)
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(m))):
            raise ValueError("plane point and normal must be finite")
        if abs(np.linalg.norm(m) - 1.0) > UNIT_TOL:
            raise ValueError("plane normal must have unit length")
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "normal", m)

    def signed_distance(self, x) -> np.ndarray:
        """Signed distance of ``x`` (shape ``(..., 3)``) from the plane."""
        return (np.asarray(x, dtype=float) - self.point) @ self.normal


def _as_vec(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.shape[-1:] != (3,):
        raise ValueError(f"expected trailing dimension 3, got shape {a.shape}")
    return a


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def _check_unit(x, name):
    norm = np.sqrt(_dot(x, x))
    if np.any(np.abs(norm - 1.0) > UNIT_TOL):
        raise ValueError(f"{name} must have unit norm within {UNIT_TOL:g}")


def _check_admissible(u, n):
    """Reject impact directions with cos(theta) < 0.

    ``u = v - v_star`` so ``cos(theta) = -(u . n)/|u|``.  Pairs with ``u = 0``
    are admissible for every ``n``.
    """
    un = np.sqrt(_dot(u, u))
    proj = _dot(u, n)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos_t = np.where(un > 0.0, -proj / np.where(un > 0.0, un, 1.0), 0.0)
    if np.any(cos_t < -ADMISSIBLE_TOL):
        worst = float(np.min(cos_t))
        raise ValueError(
            f"impact direction not admissible: cos(theta) = {worst:.3e} < 0"
        )


def _check_restitution(r):
    if not isinstance(r, Restitution):
        raise TypeError("r must be a Restitution (see make_restitution)")


def _normal_map(v, v_star, n, factor):
    u = v - v_star
    s = factor * _dot(u, n)[..., None] * n
    return v - s, v_star + s


def post_collision_n(v, v_star, n, r: Restitution):
    """Post-collision velocities ``(v', v_star')`` for impact direction ``n``.

    ``v' = v - beta ((v - v_star) . n) n`` and ``v_star'`` receives the opposite
    impulse, so the pair momentum is unchanged up to rounding.
    """
    _check_restitution(r)
    v, v_star, n = _as_vec(v), _as_vec(v_star), _as_vec(n)
    _check_unit(n, "n")
    _check_admissible(v - v_star, n)
    return _normal_map(v, v_star, n, r.beta)


def pre_collision_n(v, v_star, n, r: Restitution):
    """Pre-collision velocities ``('v, 'v_star)`` that scatter into ``(v, v_star)``.

    This is the post-collision map with ``beta`` replaced by ``gamma``.  The
    input pair must be a possible outcome of a collision along ``n``, which
    means it separates along ``n``: ``(v - v_star) . n >= 0``.  Then
    ``post_collision_n(*pre_collision_n(v, v_star, n, r), n, r)`` returns
    ``(v, v_star)`` and the reverse composition holds as well.
    """
    _check_restitution(r)
    v, v_star, n = _as_vec(v), _as_vec(v_star), _as_vec(n)
    _check_unit(n, "n")
    _check_admissible(v_star - v, n)
    return _normal_map(v, v_star, n, r.gamma)


def _sigma_map(v, v_star, sigma, factor):
    u = v - v_star
    un = np.sqrt(_dot(u, u))[..., None]
    c = 0.5 * (v + v_star)
    d = 0.5 * (1.0 - factor) * u + 0.5 * factor * un * sigma
    return c + d, c - d


def post_collision_sigma(v, v_star, sigma, r: Restitution):
    """Post-collision velocities in the scattering-direction parametrisation.

    ``v' = c + (1 - beta)/2 u + beta/2 |u| sigma`` with ``c`` the pair centre
    and ``u = v - v_star``; ``v_star'`` is the mirror image about ``c``.
    """
    _check_restitution(r)
    v, v_star, sigma = _as_vec(v), _as_vec(v_star), _as_vec(sigma)
    _check_unit(sigma, "sigma")
    return _sigma_map(v, v_star, sigma, r.beta)


def pre_collision_sigma(v, v_star, sigma, r: Restitution):
    """Pre-collision velocities in the sigma parametrisation (``gamma`` form)."""
    _check_restitution(r)
    v, v_star, sigma = _as_vec(v), _as_vec(v_star), _as_vec(sigma)
    _check_unit(sigma, "sigma")
    return _sigma_map(v, v_star, sigma, r.gamma)


def energy_defect(v, v_star, n, r: Restitution):
    """Kinetic energy change ``-(1 - alpha^2)/2 ((v - v_star) . n)^2`` (never positive)."""
    _check_restitution(r)
    v, v_star, n = _as_vec(v), _as_vec(v_star), _as_vec(n)
    _check_unit(n, "n")
    _check_admissible(v - v_star, n)
    un = _dot(v - v_star, n)
    return -0.5 * (1.0 - r.alpha * r.alpha) * un * un


def sigma_of_n(v, v_star, n):
    """Scattering direction equivalent to impact direction ``n``.

    With ``u_hat = (v - v_star)/|v - v_star|`` the reflection
    ``sigma = u_hat - 2 (u_hat . n) n`` has the azimuth of ``n`` about the axis
    ``k = -u_hat`` and twice its polar angle, so ``k . sigma = 2 cos^2(theta) - 1``.
    """
    v, v_star, n = _as_vec(v), _as_vec(v_star), _as_vec(n)
    _check_unit(n, "n")
    u = v - v_star
    un = np.sqrt(_dot(u, u))
    if np.any(un == 0.0):
        raise ValueError("sigma_of_n: degenerate axis, v equals v_star")
    _check_admissible(u, n)
    uh = u / un[..., None]
    return uh - 2.0 * _dot(uh, n)[..., None] * n


def carleman_point(v, v_prime, r: Restitution):
    """Point ``P = v'/beta - (1/beta - 1) v`` on the line through ``v`` and ``v'``."""
    _check_restitution(r)
    v, v_prime = _as_vec(v), _as_vec(v_prime)
    b = r.beta
    return v_prime / b - (1.0 / b - 1.0) * v


def carleman_plane(v, v_prime, r: Restitution) -> Plane:
    """Plane through :func:`carleman_point` with normal ``(v' - v)/|v' - v|``.

    For fixed ``(v, v')`` every partner velocity ``v_star`` that produces
    ``v'`` from ``v`` lies on this plane.  Only single vectors are accepted.
    """
    v = _as_vec(v).reshape(3)
    v_prime = _as_vec(v_prime).reshape(3)
    d = v_prime - v
    dn = np.linalg.norm(d)
    if dn == 0.0:
        raise ValueError("carleman_plane: degenerate normal, v equals v_prime")
    return Plane(carleman_point(v, v_prime, r), d / dn)


def pair_map_jacobian(v, v_star, n, r: Restitution, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference Jacobian of ``(v, v_star) -> (v', v_star')`` at fixed ``n``.

    Returns the 6x6 matrix.  The analytic determinant is ``-alpha``.  The
    admissibility check is skipped for the perturbed points: at fixed ``n`` the
    map is linear on all of R^6, so it is evaluated directly.
    """
    _check_restitution(r)
    x0 = np.concatenate([_as_vec(v).reshape(3), _as_vec(v_star).reshape(3)])
    n = _as_vec(n).reshape(3)
    _check_unit(n, "n")

    def fmap(x):
        a, b = _normal_map(x[:3], x[3:], n, r.beta)
        return np.concatenate([a, b])

    jac = np.empty((6, 6))
    for k in range(6):
        e = np.zeros(6)
        e[k] = step
        jac[:, k] = (fmap(x0 + e) - fmap(x0 - e)) / (2.0 * step)
    return jac
