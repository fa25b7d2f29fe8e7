"""Supershape (Gielis) geometry and its smooth phase-field projection.

The outer shape of the pill is a 7-parameter Gielis curve.  A radial
distance field ``r - R(angle)`` approximates a signed distance (exact on
the zero level set), and a tanh projection turns it into a phase field in
(0, 1).  Everything here is smooth in the parameters, and the parameter
Jacobian is computed in closed form so the optimizer can backpropagate
through the shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Smoothing of |u| ~ sqrt(u^2 + eps^2) keeps the radius differentiable at
# the lobe cusps (u = 0 on symmetry axes).
ABS_SMOOTHING = 1e-12

# Below this radius the polar angle is undefined; the distance falls back
# to -R(0) (the point is the shape center, well inside for any valid shape).
CENTER_RADIUS = 1e-30

PARAM_NAMES = ("c_x", "c_y", "theta", "a", "b", "n", "m")


class InvalidGeometryError(ValueError):
    """Raised when supershape parameters produce a non-finite radius."""


@dataclass(frozen=True)
class SupershapeParams:
    """The 7 geometric design variables: translation, rotation, semi-axes,
    curvature exponent and rotational symmetry order (treated as a real)."""

    c_x: float
    c_y: float
    theta: float
    a: float
    b: float
    n: float
    m: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.n > 0):
            raise InvalidGeometryError(
                f"require a, b, n > 0, got a={self.a}, b={self.b}, n={self.n}"
            )

    def as_array(self) -> np.ndarray:
        return np.array([self.c_x, self.c_y, self.theta,
                         self.a, self.b, self.n, self.m], dtype=float)

    @classmethod
    def from_array(cls, zeta) -> "SupershapeParams":
        zeta = np.asarray(zeta, dtype=float)
        if zeta.shape != (7,):
            raise ValueError(f"expected 7 parameters, got shape {zeta.shape}")
        return cls(*zeta)


@dataclass(frozen=True)
class BoundsBox:
    """Per-parameter box bounds for the 7 supershape parameters."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if lower.shape != (7,) or upper.shape != (7,):
            raise ValueError("bounds must be length-7 vectors")
        if not np.all(lower < upper):
            bad = [PARAM_NAMES[i] for i in np.nonzero(~(lower < upper))[0]]
            raise ValueError(f"lower must be < upper for every parameter: {bad}")

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)


@dataclass(frozen=True)
class PhaseSample:
    """Phase value in (0, 1) together with the radial distance it came from."""

    value: float
    distance: float


def _smooth_abs(u: np.ndarray) -> np.ndarray:
    return np.sqrt(u * u + ABS_SMOOTHING * ABS_SMOOTHING)


def gielis_radius(params: SupershapeParams, angle) -> np.ndarray:
    """Boundary radius R(angle) of the reduced Gielis curve.

    R = [ |cos(m*angle/4)/a|^n + |sin(m*angle/4)/b|^n ]^(-1/n)
    """
    angle = np.asarray(angle, dtype=float)
    t = params.m * angle / 4.0
    su = _smooth_abs(np.cos(t) / params.a)
    sv = _smooth_abs(np.sin(t) / params.b)
    g = su ** params.n + sv ** params.n
    radius = g ** (-1.0 / params.n)
    if not np.all(np.isfinite(radius)):
        raise InvalidGeometryError(
            f"non-finite radius for a={params.a}, b={params.b}, n={params.n}"
        )
    return radius


def to_local(params: SupershapeParams, points) -> np.ndarray:
    """Map global points into the shape frame: rotate by -theta about the center.

    Convention pinned by tests: theta=pi/2 sends the global point (1, 0)
    to local (0, -1).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ct, st = np.cos(params.theta), np.sin(params.theta)
    dx = pts[:, 0] - params.c_x
    dy = pts[:, 1] - params.c_y
    return np.stack([ct * dx + st * dy, -st * dx + ct * dy], axis=-1)


def radial_distance(params: SupershapeParams, points) -> np.ndarray:
    """Radial distance field: ||x_loc|| - R(angle(x_loc)).

    Negative inside the shape, positive outside, zero on the boundary.  At
    the shape center the angle is undefined and the value is -R(0).
    """
    loc = to_local(params, points)
    r = np.hypot(loc[:, 0], loc[:, 1])
    at_center = r < CENTER_RADIUS
    ang = np.where(at_center, 0.0, np.arctan2(loc[:, 1], loc[:, 0]))
    return r - gielis_radius(params, ang)


def project_phase(distance, mu: float) -> np.ndarray:
    """Tanh projection of a distance to a phase value in (0, 1)."""
    if mu <= 0:
        raise ValueError("projection steepness mu must be positive")
    return 0.5 * (1.0 - np.tanh(np.asarray(distance, dtype=float) / mu))


def phase_sample(params: SupershapeParams, point, mu: float) -> PhaseSample:
    """Phase value and radial distance at a single point."""
    dist = float(radial_distance(params, np.atleast_2d(point))[0])
    return PhaseSample(value=float(project_phase(dist, mu)), distance=dist)


def sample_phase_field(params: SupershapeParams, points, mu: float) -> np.ndarray:
    """Phase field of the supershape at the given points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("points must be nonempty")
    return project_phase(radial_distance(params, pts), mu)


def phase_field_jacobian(params: SupershapeParams, points, mu: float) -> np.ndarray:
    """d(phase)/d(parameters), shape (n_points, 7), columns in PARAM_NAMES order.

    Closed-form chain rule through the projection, the polar map and the
    Gielis radius.  Validated against central finite differences in the
    test suite.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    loc = to_local(params, pts)
    xl, yl = loc[:, 0], loc[:, 1]
    r = np.hypot(xl, yl)
    at_center = r < CENTER_RADIUS
    ang = np.where(at_center, 0.0, np.arctan2(yl, xl))

    a, b, n, m = params.a, params.b, params.n, params.m
    t = m * ang / 4.0
    cos_t, sin_t = np.cos(t), np.sin(t)
    u = cos_t / a
    v = sin_t / b
    su = _smooth_abs(u)
    sv = _smooth_abs(v)
    pu = su ** n
    pv = sv ** n
    g = pu + pv
    radius = g ** (-1.0 / n)

    phi_val = 0.5 * (1.0 - np.tanh((r - radius) / mu))
    # d(phase)/d(distance); saturates to 0 far from the boundary
    dphi_ddist = -2.0 * phi_val * (1.0 - phi_val) / mu

    # distance = r - radius
    dist_bar = dphi_ddist
    r_bar = dist_bar
    radius_bar = -dist_bar

    # radius = g^(-1/n)
    g_bar = radius_bar * (-radius / (n * g))
    n_bar = radius_bar * radius * np.log(g) / (n * n)
    # g = su^n + sv^n
    n_bar = n_bar + g_bar * (pu * np.log(su) + pv * np.log(sv))
    su_bar = g_bar * n * su ** (n - 1.0)
    sv_bar = g_bar * n * sv ** (n - 1.0)
    # smooth |.|
    u_bar = su_bar * u / su
    v_bar = sv_bar * v / sv
    # u = cos(t)/a, v = sin(t)/b
    a_bar = u_bar * (-u / a)
    b_bar = v_bar * (-v / b)
    t_bar = u_bar * (-sin_t / a) + v_bar * (cos_t / b)
    # t = m*ang/4
    m_bar = t_bar * ang / 4.0
    ang_bar = t_bar * m / 4.0

    # polar map; both branches undefined at the center (measure zero)
    safe_r = np.where(at_center, 1.0, r)
    inv_r = np.where(at_center, 0.0, 1.0 / safe_r)
    inv_r2 = inv_r * inv_r
    xl_bar = r_bar * xl * inv_r + ang_bar * (-yl * inv_r2)
    yl_bar = r_bar * yl * inv_r + ang_bar * (xl * inv_r2)

    # local frame: d(xl)/d(theta) = yl, d(yl)/d(theta) = -xl
    theta_bar = xl_bar * yl - yl_bar * xl
    ct, st = np.cos(params.theta), np.sin(params.theta)
    dx_bar = xl_bar * ct - yl_bar * st
    dy_bar = xl_bar * st + yl_bar * ct
    cx_bar = -dx_bar
    cy_bar = -dy_bar

    return np.stack([cx_bar, cy_bar, theta_bar, a_bar, b_bar, n_bar, m_bar],
                    axis=-1)


def phase_field_vjp(params: SupershapeParams, points, mu: float,
                    cotangent) -> np.ndarray:
    """Pull a cotangent on phase values back to a gradient on the 7 parameters."""
    jac = phase_field_jacobian(params, points, mu)
    return jac.T @ np.asarray(cotangent, dtype=float)
