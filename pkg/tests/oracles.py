"""Slow reference implementations used only by the tests."""
import numpy as np


def sphere_trace(origin, directions, scene, max_range, tol=1e-11, max_iter=200000):
    """First surface along each ray by sphere tracing the union SDF.

    Returns ``(t, owner)`` with owner -1 for the ground plane, ``k`` for
    ``scene.primitives[k]`` and -2 for a miss. Independent of the analytic
    intersection code: it only evaluates signed distances.
    """
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(directions, dtype=np.float64)
    n = d.shape[0]
    t = np.zeros(n)
    owner = np.full(n, -2)
    active = np.ones(n, dtype=bool)
    sdfs = [p.sdf for p in scene.primitives]
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        p = o + d[idx] * t[idx, None]
        dist = np.stack([p[:, 2]] + [f(p) for f in sdfs], axis=1)
        step = dist.min(axis=1)
        done = step < tol
        owner[idx[done]] = dist[done].argmin(axis=1) - 1
        active[idx[done]] = False
        far = ~done & (t[idx] + step > max_range + 1.0)
        active[idx[far]] = False
        t[idx[~done]] += np.maximum(step[~done], 0.0)
    t[owner == -2] = np.inf
    return t, owner


def brute_force_match(ref, qry, radius):
    """O(N*M) nearest-within-radius with ties to the lowest reference index."""
    idx = np.full(len(qry), -1, dtype=np.int64)
    r2 = radius * radius
    for j, q in enumerate(qry):
        best, best_d = -1, np.inf
        for i, p in enumerate(ref):
            dx, dy, dz = q[0] - p[0], q[1] - p[1], q[2] - p[2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 <= r2 and d2 < best_d:
                best, best_d = i, d2
        idx[j] = best
    return idx


# Hand-built NFS fixture: three matched pairs of 2-d features, one unmatched query.
HAND_F = np.array([[1.0, 2.0], [3.0, 0.0], [2.0, 4.0]])
HAND_FQ = np.array([[2.0, 2.0], [1.0, 1.0], [3.0, 3.0], [0.0, 4.0]])
HAND_PAIRS = np.array([[0, 0], [1, 3], [2, 2]])


def hand_nfs():
    """Per-pair similarities of the fixture, evaluated with scalar arithmetic.

    Reference statistics: mu = (2, 2), sigma = (sqrt(2/3), sqrt(8/3)).
    HAND_FQ[0] normalizes to the zero vector and scores 0.
    """
    import math

    s0, s1 = math.sqrt(2 / 3), math.sqrt(8 / 3)

    def norm(v):
        return ((v[0] - 2) / s0, (v[1] - 2) / s1)

    def cos(a, b):
        na, nb = math.hypot(*a), math.hypot(*b)
        return 0.0 if na == 0 or nb == 0 else (a[0] * b[0] + a[1] * b[1]) / (na * nb)

    return [cos(norm(HAND_F[i]), norm(HAND_FQ[j])) for i, j in HAND_PAIRS]
