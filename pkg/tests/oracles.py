"""Independent reference computations used by the tests.

Nothing here imports the code paths under test beyond the layout container.
"""
import math

import numpy as np


def exact_crossing(y, depth, slit_y, d):
    """Height at which the straight ray (y, -depth) -> (slit_y, d) crosses the
    aperture plane, without the small-angle shortcut."""
    return y + depth * (slit_y - y) / (d + depth)


def exact_access(y, depth, w, s, d):
    """(sees_A, sees_B) from exact two-plane ray intersection."""
    a = np.abs(exact_crossing(y, depth, s / 2, d)) <= w / 2
    b = np.abs(exact_crossing(y, depth, -s / 2, d)) <= w / 2
    return a, b


def cone_interval(depth, slit_y, w, d, small_angle):
    """Transverse interval of emission points at ``depth`` whose ray to the slit
    passes the aperture."""
    if small_angle:
        lean = depth * slit_y / d
        return -w / 2 - lean, w / 2 - lean
    # solve |y + depth (slit_y - y)/(d + depth)| <= w/2 for y
    scale = d / (d + depth)
    shift = depth * slit_y / (d + depth)
    return (-w / 2 - shift) / scale, (w / 2 - shift) / scale


def zone_apex_scan(w, s, d, small_angle=False, steps=200_000):
    """Scan depth outward until the view cones to the two slits no longer overlap."""
    hi = 10 * w * d / s
    depths = np.linspace(0, hi, steps)
    a_lo, a_hi = cone_interval(depths, s / 2, w, d, small_angle)
    b_lo, b_hi = cone_interval(depths, -s / 2, w, d, small_angle)
    overlap = np.minimum(a_hi, b_hi) - np.maximum(a_lo, b_lo)
    last = np.flatnonzero(overlap >= 0)[-1]
    # linear interpolation of the zero crossing
    z0, z1 = depths[last], depths[last + 1]
    o0, o1 = overlap[last], overlap[last + 1]
    return z0 + (z1 - z0) * o0 / (o0 - o1)


def extended_source_visibility(w, s, wavelength, d):
    """Fringe visibility from a uniform incoherent line source of width w."""
    arg = math.pi * w * s / (wavelength * d)
    return 1.0 if arg == 0 else abs(math.sin(arg) / arg)


def gaussian_two_sided_mass(k):
    return math.erf(k / math.sqrt(2))


def binomial_sigma(p, n):
    return math.sqrt(p * (1 - p) / n)


def synthetic_histogram(centers, period, visibility, phase, envelope_halfwidth, total,
                        rng=None, background=None, center=0.0):
    """Bin-averaged model counts (optionally Poisson-sampled).

    Fringes are integrated exactly over each bin; the envelope is evaluated at
    the bin center.
    """
    centers = np.asarray(centers, dtype=float)
    bw = centers[1] - centers[0]
    k = 2 * np.pi / period
    lo, hi = centers - bw / 2, centers + bw / 2
    fringe_avg = (np.sin(k * hi + phase) - np.sin(k * lo + phase)) / (k * bw)
    env = np.sinc((centers - center) / envelope_halfwidth) ** 2
    shape = env * (1 + visibility * fringe_avg)
    if background is not None:
        shape = shape + background
    expected = total * shape / shape.sum()
    if rng is None:
        return expected
    return rng.poisson(expected)
