"""Ready-made PWA systems used by the tests, the acceptance suite and the
CLI examples."""
from __future__ import annotations

import math

import numpy as np

from .geometry import box, delaunay
from .pwa import Cell, PwaDynamics, affine_fit, from_function


def square_fixture(sign: float = -1.0, half_width: float = 1.0) -> PwaDynamics:
    """``[-w, w]^2`` cut into four triangles at the origin, ``xdot = sign * x``."""
    w = half_width
    c = [(w, w), (-w, w), (-w, -w), (w, -w)]
    tris = [
        [(0.0, 0.0), c[3], c[0]],  # right
        [(0.0, 0.0), c[0], c[1]],  # top
        [(0.0, 0.0), c[1], c[2]],  # left
        [(0.0, 0.0), c[2], c[3]],  # bottom
    ]
    A = sign * np.eye(2)
    return PwaDynamics([Cell(k, A, np.zeros(2), vertices=t) for k, t in enumerate(tris)])


def sin_pwa(x1):
    """Four-piece linear interpolation of ``sin`` on ``[-pi, pi]``."""
    knots = np.array([-math.pi, -math.pi / 2, 0.0, math.pi / 2, math.pi])
    return np.interp(x1, knots, [0.0, -1.0, 0.0, 1.0, 0.0])


def pendulum_field(x, gain: float = 3.0, limit: float = 1.5):
    """Inverted pendulum with saturated linear feedback, sin replaced by
    :func:`sin_pwa`.  The feedback enters with a negative sign:
    ``u = -sat(gain * (x1 + x2), limit)``."""
    x = np.asarray(x, dtype=float)
    u = -np.clip(gain * (x[..., 0] + x[..., 1]), -limit, limit)
    return np.stack([x[..., 1], sin_pwa(x[..., 0]) + u], axis=-1)


def pendulum_analogue(gain: float = 3.0, limit: float = 1.5, triangulate: bool = True) -> PwaDynamics:
    """Hand-built PWA pendulum on ``|x|_inf <= pi``.

    The partition is the arrangement of the lines where the field changes
    its affine piece (``x1 in {-pi/2, 0, pi/2}``, ``x1 + x2 = +-limit/gain``)
    plus ``x2 = 0`` so that the origin is a vertex.  With ``triangulate``
    every polygon is split into triangles on its own vertices.
    """
    from .relu import arrangement_regions

    k = limit / gain
    W = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 1.0], [1.0, 1.0], [0.0, 1.0]])
    b = np.array([math.pi / 2, 0.0, -math.pi / 2, k, -k, 0.0])
    dom = box([-math.pi] * 2, [math.pi] * 2)
    regions = arrangement_regions(W, b, dom)
    polys = [r.vertices for _, r in regions]
    if triangulate:
        polys = [s.vertices for P in polys for s in delaunay(P)]

    def f(v):
        return pendulum_field(v, gain, limit)

    return from_function(polys, f)


def random_delaunay_system(rng, n_points=None, half_width: float = 1.0,
                           field_scale: float = 1.0) -> PwaDynamics:
    """Random continuous PWA field on a random Delaunay triangulation of a
    square: box corners plus ``n_points`` interior points, field values drawn
    at the vertices and interpolated linearly on each triangle."""
    rng = np.random.default_rng(rng)
    if n_points is None:
        n_points = int(rng.integers(2, 15))
    w = half_width
    corners = np.array([[-w, -w], [w, -w], [w, w], [-w, w]])
    inner = rng.uniform(-0.9 * w, 0.9 * w, size=(n_points, 2))
    pts = np.vstack([corners, inner])
    values = rng.normal(scale=field_scale, size=pts.shape)
    cells = []
    for k, s in enumerate(delaunay(pts)):
        idx = list(s.indices)
        A, a = affine_fit(pts[idx], values[idx])
        cells.append(Cell(k, A, a, vertices=pts[idx]))
    return PwaDynamics(cells)
