"""Symmetric quadrature rules on the reference triangle."""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points and weights normalised to sum to one.

    Physical weights are ``weights * area`` for a triangle of given area.
    """

    points: np.ndarray  # (n, 3) barycentric coordinates
    weights: np.ndarray  # (n,)
    degree: int

    def __post_init__(self):
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-14:
            raise ValueError("quadrature weights must sum to 1")

    @property
    def n_points(self):
        return len(self.weights)


def _orbit3(a, w):
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)], [w] * 3


def _orbit6(a, b, w):
    c = 1.0 - a - b
    pts = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
    return pts, [w] * 6


def _build(orbits, degree):
    pts, wts = [], []
    for p, w in orbits:
        pts += p
        wts += w
    pts = np.array(pts, dtype=float)
    wts = np.array(wts, dtype=float)
    # tabulated values carry 15 digits; renormalise
    return QuadratureRule(pts / pts.sum(axis=1, keepdims=True), wts / wts.sum(), degree)


# Dunavant rules
CENTROID = QuadratureRule(np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0]), 1)
DEGREE2 = _build([_orbit3(1 / 6, 1 / 3)], 2)
DEGREE4 = _build([
    _orbit3(0.445948490915965, 0.223381589678011),
    _orbit3(0.091576213509771, 0.109951743655322),
], 4)
DEGREE6 = _build([
    _orbit3(0.249286745170910, 0.116786275726379),
    _orbit3(0.063089014491502, 0.050844906370207),
    _orbit6(0.053145049844817, 0.310352451033784, 0.082851075618374),
], 6)

DEFAULT_RULE = DEGREE4

_RULES = {1: CENTROID, 2: DEGREE2, 4: DEGREE4, 6: DEGREE6}


def get_rule(degree):
    """Return the cheapest rule exact for polynomials of at least ``degree``."""
    for d in sorted(_RULES):
        if d >= degree:
            return _RULES[d]
    raise ValueError(f"no triangle rule of degree {degree}")


def gauss_legendre(n, a=0.0, b=1.0):
    """n-point Gauss-Legendre nodes and weights mapped to [a, b]."""
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w
