"""Exact piecewise-affine form of a one-hidden-layer ReLU network on a box.

On each activation region (fixed on/off pattern of the hidden units) the
network ``x -> W2 max(0, W1 x + b1) + b2`` is affine, so the network is a
continuous PWA map whose partition is the hyperplane arrangement
``{W1 x + b1 = 0}`` clipped to the box.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateRegionWarning, DimensionMismatch, EmptyPolytope, TooManyNeurons
from .geometry import HPolytope, box, chebyshev_ball, vertices_of
from .pwa import Cell, PwaDynamics

MAX_NEURONS = 25
MIN_RADIUS = 1e-7


@dataclass
class ReluNet:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        self.W1 = np.atleast_2d(np.asarray(self.W1, dtype=float))
        self.b1 = np.asarray(self.b1, dtype=float).ravel()
        self.W2 = np.atleast_2d(np.asarray(self.W2, dtype=float))
        self.b2 = np.asarray(self.b2, dtype=float).ravel()
        m, n = self.W1.shape
        if m < 1:
            raise ValueError("network needs at least one hidden unit")
        if self.b1.size != m or self.W2.shape != (n, m) or self.b2.size != n:
            raise DimensionMismatch(
                f"inconsistent shapes W1 {self.W1.shape}, b1 {self.b1.shape}, "
                f"W2 {self.W2.shape}, b2 {self.b2.shape}"
            )
        for arr in (self.W1, self.b1, self.W2, self.b2):
            if not np.all(np.isfinite(arr)):
                raise ValueError("network weights must be finite")

    @property
    def n_hidden(self) -> int:
        return self.W1.shape[0]

    @property
    def dim(self) -> int:
        return self.W1.shape[1]

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        return np.maximum(X @ self.W1.T + self.b1, 0.0) @ self.W2.T + self.b2

    def affine_piece(self, pattern):
        """``(A, a)`` of the network on the region with activation ``pattern``."""
        s = np.asarray(pattern, dtype=float)
        A = self.W2 @ (s[:, None] * self.W1)
        a = self.W2 @ (s * self.b1) + self.b2
        return A, a


def _radius(E, e) -> float:
    try:
        return chebyshev_ball(HPolytope(E, e))[1]
    except EmptyPolytope:
        return -np.inf


def arrangement_regions(W, b, domain: HPolytope, min_radius: float = MIN_RADIUS):
    """Full-dimensional cells of the arrangement ``{W x + b = 0}`` inside ``domain``.

    Depth-first over units, pruning a branch as soon as its region has no
    ball of radius ``min_radius``.  Returns ``[(pattern, VPolytope), ...]``
    sorted lexicographically by pattern (1 = ``w.x + b >= 0``).
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    m = W.shape[0]
    found = []

    def visit(k, pattern, E, e):
        r = _radius(E, e)
        if r <= min_radius:
            if r > 0:
                warnings.warn(
                    f"discarding activation region {pattern}: inscribed radius {r:.2g}",
                    DegenerateRegionWarning,
                    stacklevel=3,
                )
            return
        if k == m:
            found.append((pattern, E, e))
            return
        w, c = W[k], b[k]
        if np.linalg.norm(w) <= 1e-12:
            visit(k + 1, pattern + (int(c > 0),), E, e)
            return
        for s in (0, 1):
            sign = 1.0 if s else -1.0
            visit(k + 1, pattern + (s,), np.vstack([E, sign * w]), np.append(e, sign * c))

    visit(0, (), np.asarray(domain.E), np.asarray(domain.e))
    found.sort(key=lambda t: t[0])
    return [(pat, vertices_of(HPolytope(E, e))) for pat, E, e in found]


def enumerate_regions(net: ReluNet, domain, max_neurons: int = MAX_NEURONS) -> PwaDynamics:
    """Convert ``net`` restricted to ``domain`` into :class:`PwaDynamics`.

    ``domain`` is an :class:`HPolytope` or a ``(lo, hi)`` pair of box corners.
    """
    if net.n_hidden > max_neurons:
        raise TooManyNeurons(f"{net.n_hidden} hidden units exceeds the limit of {max_neurons}")
    if not isinstance(domain, HPolytope):
        lo, hi = domain
        domain = box(lo, hi)
    if domain.dim != net.dim:
        raise DimensionMismatch("domain and network input dimensions differ")
    cells = []
    for k, (pattern, poly) in enumerate(arrangement_regions(net.W1, net.b1, domain)):
        A, a = net.affine_piece(pattern)
        cells.append(Cell(k, A, a, vertices=poly))
    return PwaDynamics(cells)
