"""Slow, loop-based reference implementations used as test oracles.

Nothing here imports the package under test; each function restates a
definition in the most literal way available.
"""
import cmath
import math
from fractions import Fraction

C = 299_792_458.0


def arc_position(waypoints, s, samples_per_meter=2000):
    """Walk the polyline in tiny steps and return the point after arc-length ``s``."""
    walked = 0.0
    for (x0, y0), (x1, y1) in zip(waypoints[:-1], waypoints[1:]):
        seg = math.hypot(x1 - x0, y1 - y0)
        n = max(1, int(seg * samples_per_meter))
        px, py = x0, y0
        for k in range(1, n + 1):
            qx, qy = x0 + (x1 - x0) * k / n, y0 + (y1 - y0) * k / n
            step = math.hypot(qx - px, qy - py)
            if walked + step >= s:
                f = (s - walked) / step
                return px + f * (qx - px), py + f * (qy - py)
            walked += step
            px, py = qx, qy
    return waypoints[-1]


def cfr_direct(freqs, paths):
    """H(f) by explicit summation over rays for each frequency.

    The product f * tau is formed exactly so that the oracle itself is not
    limited by the ~1e4-turn phase argument.
    """
    out = []
    for f in freqs:
        acc = 0j
        for tau, a, phi in paths:
            turns = float((Fraction(float(f)) * Fraction(tau)) % 1)
            acc += a * cmath.exp(-1j * phi) * cmath.exp(-2j * math.pi * turns)
        out.append(acc)
    return out


def idft_direct(h):
    n = len(h)
    return [sum(h[k] * cmath.exp(2j * math.pi * k * m / n) for k in range(n)) / n for m in range(n)]


def column_means(rows):
    n = len(rows)
    return [sum(r[j] for r in rows) / n for j in range(len(rows[0]))]


def rms_spread(powers, delays):
    tot = sum(powers)
    mean = sum(p * t for p, t in zip(powers, delays)) / tot
    second = sum(p * (t - mean) ** 2 for p, t in zip(powers, delays)) / tot
    return math.sqrt(second)


def nearest_brute(query, ref, tol):
    """Exhaustive nearest neighbour, ties to the lower index, -1 beyond ``tol``."""
    out = []
    for q in query:
        best, gap = -1, math.inf
        for j, r in enumerate(ref):
            d = abs(r - q)
            if d < gap:
                best, gap = j, d
        out.append(best if gap <= tol else -1)
    return out


def mean_sq(preds, labels):
    total = 0.0
    for p, y in zip(preds, labels):
        total += (y - p) ** 2
    return total / len(preds)


def rmse_loop(truth, preds):
    return math.sqrt(mean_sq(preds, truth))


def point_in_box(p, lo, hi):
    return all(lo[i] - 1e-12 <= p[i] <= hi[i] + 1e-12 for i in range(3))


def ray_hits_box(origin, direction, center_xy, heading, length, width, height):
    """Slab test in the box's own frame."""
    c, s = math.cos(heading), math.sin(heading)

    def to_local(v, is_point):
        x, y, z = v
        if is_point:
            x, y = x - center_xy[0], y - center_xy[1]
        return (c * x + s * y, -s * x + c * y, z)

    o = to_local(origin, True)
    d = to_local(direction, False)
    lo = (-length / 2, -width / 2, 0.0)
    hi = (length / 2, width / 2, height)
    t0, t1 = 0.0, math.inf
    for i in range(3):
        if abs(d[i]) < 1e-15:
            if o[i] < lo[i] or o[i] > hi[i]:
                return False
            continue
        a, b = (lo[i] - o[i]) / d[i], (hi[i] - o[i]) / d[i]
        a, b = min(a, b), max(a, b)
        t0, t1 = max(t0, a), min(t1, b)
        if t0 > t1:
            return False
    return True
