"""Scalar signed-distance evaluation compiled with numba.

One dispatch function serves both the Python-level tool API and the grid
contact kernel, so there is a single source of truth for tool geometry.
Composite tools combine primitives with :func:`smooth_min`; a blend radius
of zero degenerates to the exact union.

Parameter layouts (float64 arrays), all in the tool's local frame:

fork (kind 0):
    [0] tine count (integral value)   [1] tine length
    [2] tine radius                   [3] tine spacing
    [4:7] neck box half-extents       [7:10] handle box half-extents
    [10] handle center height         [11] blend radius
    Tines run from y = 0 down to y = -length, spread along x, centered on
    x = 0; the neck box sits on y = 0; the handle box sits above the neck.

plate (kind 1):
    [0] radius            [1] base half-thickness
    [2] rim tube radius   [3] blend radius
    Local y = 0 is the plate top surface; the rim torus rests on it at the
    outer edge, reaching height 2 * tube radius.

slab (kind 2):
    [0:3] box half-extents, centered at the origin.

sphere (kind 3):
    [0] radius.
"""

import numpy as np
from numba import njit

FORK = 0
PLATE = 1
SLAB = 2
SPHERE = 3


@njit(cache=True, nogil=True)
def smooth_min(a, b, k):
    if k <= 0.0:
        return min(a, b)
    h = 0.5 + 0.5 * (b - a) / k
    if h < 0.0:
        h = 0.0
    elif h > 1.0:
        h = 1.0
    return b * (1.0 - h) + a * h - k * h * (1.0 - h)


@njit(cache=True, nogil=True)
def sd_box(x, y, z, hx, hy, hz):
    qx = abs(x) - hx
    qy = abs(y) - hy
    qz = abs(z) - hz
    ox = max(qx, 0.0)
    oy = max(qy, 0.0)
    oz = max(qz, 0.0)
    outside = np.sqrt(ox * ox + oy * oy + oz * oz)
    inside = min(max(qx, max(qy, qz)), 0.0)
    return outside + inside


@njit(cache=True, nogil=True)
def sd_segment_y(x, y, z, y0, y1, r):
    """Capsule along the y axis between y0 and y1 with radius r."""
    t = y
    if t < y0:
        t = y0
    elif t > y1:
        t = y1
    dy = y - t
    return np.sqrt(x * x + dy * dy + z * z) - r


@njit(cache=True, nogil=True)
def sd_cylinder_y(x, y, z, half_h, r):
    """Finite vertical cylinder centered at the origin."""
    dr = np.sqrt(x * x + z * z) - r
    dy = abs(y) - half_h
    odr = max(dr, 0.0)
    ody = max(dy, 0.0)
    outside = np.sqrt(odr * odr + ody * ody)
    inside = min(max(dr, dy), 0.0)
    return outside + inside


@njit(cache=True, nogil=True)
def sd_torus_y(x, y, z, ring_r, tube_r):
    """Torus around the y axis: ring radius in the xz plane."""
    q = np.sqrt(x * x + z * z) - ring_r
    return np.sqrt(q * q + y * y) - tube_r


@njit(cache=True, nogil=True)
def sd_sphere(x, y, z, r):
    return np.sqrt(x * x + y * y + z * z) - r


@njit(cache=True, nogil=True)
def tool_sdf_local(kind, params, x, y, z):
    if kind == FORK:
        n = int(params[0])
        length = params[1]
        radius = params[2]
        spacing = params[3]
        k = params[11]
        d = 1e30
        for i in range(n):
            cx = (i - 0.5 * (n - 1)) * spacing
            di = sd_segment_y(x - cx, y, z, -length + radius, -radius, radius)
            if di < d:
                d = di
        neck = sd_box(x, y - params[5], z, params[4], params[5], params[6])
        handle = sd_box(x, y - params[10], z, params[7], params[8], params[9])
        d = smooth_min(d, smooth_min(neck, handle, k), k)
        return d
    elif kind == PLATE:
        base = sd_cylinder_y(x, y + params[1], z, params[1], params[0])
        rim = sd_torus_y(x, y - params[2], z, params[0] - params[2], params[2])
        return smooth_min(base, rim, params[3])
    elif kind == SLAB:
        return sd_box(x, y, z, params[0], params[1], params[2])
    elif kind == SPHERE:
        return sd_sphere(x, y, z, params[0])
    return 1e30


@njit(cache=True, nogil=True)
def tool_sdf_world(kind, params, rot, trans, x, y, z):
    """Evaluate a posed tool: rotate/translate the query into local frame."""
    px = x - trans[0]
    py = y - trans[1]
    pz = z - trans[2]
    # R^T p (rot maps local -> world)
    lx = rot[0, 0] * px + rot[1, 0] * py + rot[2, 0] * pz
    ly = rot[0, 1] * px + rot[1, 1] * py + rot[2, 1] * pz
    lz = rot[0, 2] * px + rot[1, 2] * py + rot[2, 2] * pz
    return tool_sdf_local(kind, params, lx, ly, lz)


@njit(cache=True, nogil=True)
def eval_points(kind, params, rot, trans, pts, out):
    for i in range(pts.shape[0]):
        out[i] = tool_sdf_world(
            kind, params, rot, trans, pts[i, 0], pts[i, 1], pts[i, 2]
        )


@njit(cache=True, nogil=True)
def eval_normals(kind, params, rot, trans, pts, step, out):
    """Central-difference normals in world coordinates."""
    for i in range(pts.shape[0]):
        x = pts[i, 0]
        y = pts[i, 1]
        z = pts[i, 2]
        gx = tool_sdf_world(kind, params, rot, trans, x + step, y, z) - tool_sdf_world(
            kind, params, rot, trans, x - step, y, z
        )
        gy = tool_sdf_world(kind, params, rot, trans, x, y + step, z) - tool_sdf_world(
            kind, params, rot, trans, x, y - step, z
        )
        gz = tool_sdf_world(kind, params, rot, trans, x, y, z + step) - tool_sdf_world(
            kind, params, rot, trans, x, y, z - step
        )
        norm = np.sqrt(gx * gx + gy * gy + gz * gz)
        if norm > 0.0:
            out[i, 0] = gx / norm
            out[i, 1] = gy / norm
            out[i, 2] = gz / norm
        else:
            out[i, 0] = 0.0
            out[i, 1] = 1.0
            out[i, 2] = 0.0
