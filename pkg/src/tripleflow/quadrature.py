"""Quadrature rules on the reference triangle and the unit interval."""

import numpy as np

_r15 = np.sqrt(15.0)
_a1, _b1 = (9 - 2 * _r15) / 21, (6 + _r15) / 21
_a2, _b2 = (9 + 2 * _r15) / 21, (6 - _r15) / 21
_w0, _w1, _w2 = 9.0 / 40.0, (155 + _r15) / 1200, (155 - _r15) / 1200

# seven-point rule, exact for polynomials of degree 5; barycentric points,
# weights normalized to sum to one (multiply by the triangle area)
TRI7_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [_a1, _b1, _b1],
        [_b1, _a1, _b1],
        [_b1, _b1, _a1],
        [_a2, _b2, _b2],
        [_b2, _a2, _b2],
        [_b2, _b2, _a2],
    ]
)
TRI7_W = np.array([_w0, _w1, _w1, _w1, _w2, _w2, _w2])
TRI7_BARY[:, 2] = 1.0 - TRI7_BARY[:, 0] - TRI7_BARY[:, 1]
TRI7_W = TRI7_W / TRI7_W.sum()

_g = np.sqrt(3.0 / 5.0)
# three-point Gauss-Legendre on [0, 1], exact up to degree 5
GAUSS3_T = 0.5 * (1.0 + np.array([-_g, 0.0, _g]))
GAUSS3_W = np.array([5.0, 8.0, 5.0]) / 18.0


def gauss_legendre01(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def triangle_points(tri_pts, bary=TRI7_BARY):
    """Physical quadrature points, shape (n_tri, n_q, 2)."""
    return np.einsum("qk,tkd->tqd", bary, tri_pts)


def signed_areas(tri_pts):
    d1 = tri_pts[:, 1] - tri_pts[:, 0]
    d2 = tri_pts[:, 2] - tri_pts[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
