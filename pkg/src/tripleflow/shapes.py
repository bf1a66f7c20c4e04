"""Initial interface networks: standard bubble clusters and example setups.

Standard bubbles are polygonized so that they are exact discrete steady
states of the equal-tension curvature equation: every arc is cut into
equal chords and the arc geometry is tuned (one scalar, by symmetry) so
that the lumped force balance at the triple junctions vanishes.  A pressure
that is constant per phase then balances the surface tension exactly.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

from .errors import ArgumentError
from .network import Box, CurveNetwork, PolyCurve, rot_cw


def arc_points(center, radius, th0, th1, n):
    """``n`` equal chords on a circular arc from angle th0 to th1."""
    th = np.linspace(th0, th1, n + 1)
    return np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])


def ellipse_points(center, a, b, th0, th1, n):
    th = np.linspace(th0, th1, n + 1)
    return np.column_stack([center[0] + a * np.cos(th), center[1] + b * np.sin(th)])


def line_points(p, q, n):
    s = np.linspace(0.0, 1.0, n + 1)[:, None]
    p, q = np.asarray(p, float), np.asarray(q, float)
    out = p + s * (q - p)
    out[0], out[-1] = p, q
    return out


def split_counts(lengths, n_vertices, minimum=2):
    """Segments per curve, proportional to length, about ``n_vertices`` in total."""
    lengths = np.asarray(lengths, dtype=float)
    h = lengths.sum() / max(n_vertices, 1)
    return [max(minimum, int(round(L / h))) for L in lengths]


# ----------------------------------------------------------------------
# discrete force balance helpers


def interior_curvature(net: CurveNetwork, i: int, gamma: float = 1.0) -> float:
    """kappa_gamma solving the curvature equation at the middle interior vertex of curve i.

    Exact for arcs with equal chords (all interior vertices agree).
    """
    o = net.offsets[i]
    K = net.curves[i].n_vertices
    if K < 3:
        return 0.0
    q = o + K // 2
    X = net.X
    a, b = X[q - 1], X[q + 1]
    la, lb = np.linalg.norm(X[q] - a), np.linalg.norm(b - X[q])
    stiff = gamma * ((X[q] - a) / la + (X[q] - b) / lb)
    mass = 0.5 * (rot_cw(X[q] - a) + rot_cw(b - X[q]))  # sum |sigma|/2 nu
    nrm = mass / np.linalg.norm(mass)
    return float(-np.dot(stiff, nrm) / np.dot(mass, nrm))


def junction_force(net: CurveNetwork, k: int, kappa, gamma):
    """Lumped residual of the curvature equation for the merged junction test function."""
    X = net.X
    j = net.junctions[k]
    r = np.zeros(2)
    for i, e in zip(j.curves, j.ends):
        g = net.end_index(i, e)
        nb = g - 1 if e == 1 else g + 1
        d = X[nb] - X[g] if e == 0 else X[g] - X[nb]  # oriented segment vector
        ln = np.linalg.norm(d)
        r += kappa[i] * 0.5 * rot_cw(d) + gamma[i] * (X[g] - X[nb]) / ln
    return r


# ----------------------------------------------------------------------
# standard clusters


def _double_bubble(R, c, n_arc, n_mid, center, domain):
    h = np.sqrt(R * R - c * c)
    th = np.arctan2(h, c)
    cx, cy = center
    left = arc_points((cx - c, cy), R, th, 2 * np.pi - th, n_arc)
    right = arc_points((cx + c, cy), R, -(np.pi - th), np.pi - th, n_arc)
    mid = line_points((cx, cy - h), (cx, cy + h), n_mid)
    top, bot = (cx, cy + h), (cx, cy - h)
    left[0], left[-1] = top, bot
    right[0], right[-1] = bot, top
    curves = [left, right, mid]
    # left arc: top -> bottom (ccw about left centre); right arc: bottom -> top
    junctions = [((0, 1, 2), (0, 1, 1)), ((0, 1, 2), (1, 0, 0))]
    regions = [{0: -1, 1: -1}, {0: 1, 2: 1}, {1: 1, 2: -1}]
    return CurveNetwork.build(curves, junctions, (), regions, domain)


def standard_double_bubble(radius=0.3, n_vertices=128, center=(0.0, 0.0), domain=None, equilibrate=True):
    """Symmetric standard double bubble with two equal bubbles.

    Curves: 0 left outer arc, 1 right outer arc, 2 inter-bubble segment.
    Regions: 0 exterior, 1 left bubble, 2 right bubble.
    """
    if radius <= 0:
        raise ArgumentError("radius must be positive")
    domain = domain or Box(-1.0, 1.0, -1.0, 1.0)
    R = float(radius)
    c0 = 0.5 * R
    L_arc = R * (2 * np.pi - 2 * np.pi / 3)
    L_mid = 2 * np.sqrt(R * R - c0 * c0)
    n_arc, _, n_mid = split_counts([L_arc, L_arc, L_mid], n_vertices)
    n_mid = max(2, n_mid)
    if not equilibrate:
        return _double_bubble(R, c0, n_arc, n_mid, center, domain)

    def resid(c):
        net = _double_bubble(R, c, n_arc, n_mid, center, domain)
        ka = interior_curvature(net, 0)
        return junction_force(net, 0, [ka, ka, 0.0], [1.0, 1.0, 1.0])[1]

    c = brentq(resid, 0.3 * R, 0.7 * R, xtol=1e-15 * R, rtol=1e-15, maxiter=200)
    return _double_bubble(R, c, n_arc, n_mid, center, domain)


def _triple_bubble(L, d, n_arc, n_rad):
    phis = np.pi / 2 + 2 * np.pi / 3 * np.arange(3)
    J = np.column_stack([L * np.cos(phis), L * np.sin(phis)])
    arcs, rads = [], []
    for k in range(3):
        a, b = J[k], J[(k + 1) % 3]
        bis = phis[k] + np.pi / 3
        u = np.array([np.cos(bis), np.sin(bis)])
        C = (L / 2 + d) * u
        rho = np.linalg.norm(a - C)
        t0 = np.arctan2(*(a - C)[::-1])
        t1 = np.arctan2(*(b - C)[::-1])
        dt = (t1 - t0) % (2 * np.pi)
        pts = arc_points(C, rho, t0, t0 + dt, n_arc)
        pts[0], pts[-1] = a, b
        arcs.append(pts)
        rads.append(line_points((0.0, 0.0), J[k], n_rad))
    return arcs + rads


def _triple_network(curves, center, domain):
    curves = [c + np.asarray(center, float) for c in curves]
    # arcs 0..2 (J_k -> J_{k+1}), radial segments 3..5 (centre -> J_k)
    junctions = [((3, 4, 5), (0, 0, 0))]
    for k in range(3):
        junctions.append(((3 + k, k, (k - 1) % 3), (1, 0, 1)))
    regions = [{0: -1, 1: -1, 2: -1}]
    for k in range(3):
        regions.append({k: 1, 3 + k: 1, 3 + (k + 1) % 3: -1})
    return CurveNetwork.build(curves, junctions, (), regions, domain)


def standard_triple_bubble(area, n_vertices=128, center=(0.0, 0.0), domain=None, equilibrate=True):
    """Symmetric standard triple bubble with three bubbles of the given polygon area.

    Curves: 0-2 outer arcs, 3-5 inter-bubble segments meeting at the centre.
    Regions: 0 exterior, 1-3 bubbles.
    """
    if area <= 0:
        raise ArgumentError("area must be positive")
    domain = domain or Box(-1.0, 1.0, -1.0, 1.0)
    L = np.sqrt(area / (np.sqrt(3) / 4 + 3 * np.pi / 8))
    L_arc = np.pi * L * np.sqrt(3) / 2
    n = split_counts([L_arc] * 3 + [L] * 3, n_vertices)
    n_arc, n_rad = n[0], n[3]

    def net_for(d, scale=1.0):
        cs = [scale * c for c in _triple_bubble(L, d, n_arc, n_rad)]
        return _triple_network(cs, (0.0, 0.0), Box(-10 * L, 10 * L, -10 * L, 10 * L))

    d = 0.0
    if equilibrate:

        def resid(d):
            net = net_for(d)
            ka = interior_curvature(net, 0)
            f = junction_force(net, 1, [ka, ka, ka, 0.0, 0.0, 0.0], [1.0] * 6)
            return f[1]  # junction 1 sits on the +y axis

        d = brentq(resid, -0.3 * L, 0.3 * L, xtol=1e-15 * L, rtol=1e-15, maxiter=200)
    net = net_for(d)
    s = np.sqrt(area / net.region_area(1))
    curves = [s * c for c in _triple_bubble(L, d, n_arc, n_rad)]
    return _triple_network(curves, center, domain)


def build_standard_bubble_cluster(kind, size, n_vertices=128, center=(0.0, 0.0), domain=None, equilibrate=True):
    """``kind='double'``: size is the bubble radius; ``kind='triple'``: size is the area of each bubble."""
    if size is None or size <= 0:
        raise ArgumentError("size must be positive")
    if kind == "double":
        return standard_double_bubble(size, n_vertices, center, domain, equilibrate)
    if kind == "triple":
        return standard_triple_bubble(size, n_vertices, center, domain, equilibrate)
    raise ArgumentError(f"unknown cluster kind {kind!r}")


def circle_bubble(center, radius, n_vertices=64, domain=None):
    """One closed counter-clockwise polygon; region 0 outside, region 1 inside."""
    pts = arc_points(center, radius, 0.0, 2 * np.pi, n_vertices)[:-1]
    return CurveNetwork.build([PolyCurve(pts, closed=True)], regions=[{0: -1}, {0: 1}], domain=domain)


# ----------------------------------------------------------------------
# example geometries


def junction_migration_network(n_vertices=96):
    """Three curves meeting at one junction in (0,2)x(0,1).

    Curve 0: y = 0.5 from the left wall to the junction (0.25, 0.5), length 0.25.
    Curve 1: y = 0.5 from the junction to the right wall, length 1.75.
    Curve 2: quarter circle (centre (0.5, 0.5), radius 0.25) up to (0.5, 0.75),
    then y = 0.75 to the right wall, length 1.5.
    Regions: 0 below y = 0.5, 1 the strip between curves 1 and 2, 2 above.
    """
    box = Box(0.0, 2.0, 0.0, 1.0)
    Lq = 0.25 * np.pi / 2
    n0, n1, nq, n2 = split_counts([0.25, 1.75, Lq, 1.5], n_vertices)
    c0 = line_points((0.0, 0.5), (0.25, 0.5), n0)
    c1 = line_points((0.25, 0.5), (2.0, 0.5), n1)
    q = arc_points((0.5, 0.5), 0.25, np.pi, np.pi / 2, nq)
    q[0], q[-1] = (0.25, 0.5), (0.5, 0.75)
    c2 = np.vstack([q, line_points((0.5, 0.75), (2.0, 0.75), n2)[1:]])
    junctions = [((0, 1, 2), (1, 0, 0))]
    bps = [(0, 0), (1, 1), (2, 1)]
    regions = [{0: -1, 1: -1}, {1: 1, 2: -1}, {0: 1, 2: 1}]
    return CurveNetwork.build([c0, c1, c2], junctions, bps, regions, box)


def trapped_bubble_network(n_vertices=128, radius=3.0 / 16.0):
    """Circular bubble at the centre of (0,1)x(0,2) on the fluid-fluid line y = 1.

    Curves: 0 left line, 1 right line, 2 upper arc, 3 lower arc.
    Regions: 0 upper fluid, 1 lower fluid, 2 bubble.
    """
    box = Box(0.0, 1.0, 0.0, 2.0)
    cx, cy, r = 0.5, 1.0, radius
    La = 0.5 - r
    n0, n1, n2, n3 = split_counts([La, La, np.pi * r, np.pi * r], n_vertices)
    left = line_points((0.0, cy), (cx - r, cy), n0)
    right = line_points((cx + r, cy), (1.0, cy), n1)
    upper = arc_points((cx, cy), r, 0.0, np.pi, n2)  # right junction -> left junction, ccw
    lower = arc_points((cx, cy), r, np.pi, 2 * np.pi, n3)  # left -> right, ccw
    upper[0], upper[-1] = (cx + r, cy), (cx - r, cy)
    lower[0], lower[-1] = (cx - r, cy), (cx + r, cy)
    # left line normal points down (into lower fluid); arcs point out of the bubble
    junctions = [((0, 2, 3), (1, 1, 0)), ((1, 2, 3), (0, 0, 1))]
    bps = [(0, 0), (1, 1)]
    regions = [{0: 1, 1: 1, 2: -1}, {0: -1, 1: -1, 3: -1}, {2: 1, 3: 1}]
    return CurveNetwork.build([left, right, upper, lower], junctions, bps, regions, box)


def gas_liquid_double_bubble(n_vertices=128, r=0.15, a=0.45, x_mid=0.35, y_mid=0.7):
    """Semi-disk (gas, left) and semi-ellipse (liquid, right) sharing a vertical segment.

    Curves: 0 gas arc, 1 liquid half-ellipse, 2 inter-bubble segment (upwards).
    Regions: 0 surrounding liquid, 1 gas bubble, 2 liquid bubble.
    """
    box = Box(0.0, 1.0, 0.0, 2.0)
    top, bot = (x_mid, y_mid + r), (x_mid, y_mid - r)
    h = np.pi * (3 * (a + r) - np.sqrt((3 * a + r) * (a + 3 * r)))  # Ramanujan perimeter
    n0, n1, n2 = split_counts([np.pi * r, 0.5 * h, 2 * r], n_vertices)
    gas = arc_points((x_mid, y_mid), r, np.pi / 2, 3 * np.pi / 2, n0)
    liq = ellipse_points((x_mid, y_mid), a, r, -np.pi / 2, np.pi / 2, n1)
    mid = line_points(bot, top, n2)
    gas[0], gas[-1] = top, bot
    liq[0], liq[-1] = bot, top
    junctions = [((0, 1, 2), (0, 1, 1)), ((0, 1, 2), (1, 0, 0))]
    regions = [{0: -1, 1: -1}, {0: 1, 2: 1}, {1: 1, 2: -1}]
    return CurveNetwork.build([gas, liq, mid], junctions, (), regions, box)
