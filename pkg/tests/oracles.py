"""Independent brute-force oracles used to check the fast code paths.

Nothing here imports the solvers it is used to check.
"""
import itertools

import numpy as np


def box_vertices(p, u):
    """All vertices of {q : sum p_i q_i = 1, 0 <= q_i <= u_i}.

    A vertex has every coordinate but one at a bound; the free one is
    solved from the equality.
    """
    p = np.asarray(p, dtype=float)
    u = np.asarray(u, dtype=float)
    k = p.size
    verts = []
    for free in range(k):
        others = [i for i in range(k) if i != free]
        for bounds in itertools.product((0, 1), repeat=k - 1):
            q = np.zeros(k)
            for i, b in zip(others, bounds):
                q[i] = u[i] if b else 0.0
            q[free] = (1.0 - p[others] @ q[others]) / p[free]
            if -1e-12 <= q[free] <= u[free] + 1e-12:
                verts.append(q)
    return verts


def lp_vertex_max(r, p, u):
    """Max of sum q_i p_i r_i over the box polytope by vertex enumeration."""
    verts = box_vertices(p, u)
    assert verts, "empty polytope"
    vals = [float(np.sum(v * np.asarray(p) * np.asarray(r))) for v in verts]
    return max(vals)


def dual_grid_min(r, p, alphas, lo=None, hi=None, step=1e-4):
    r = np.asarray(r, dtype=float)
    w = np.asarray(p, dtype=float) / np.asarray(alphas, dtype=float)
    lo = r.min() - 1 if lo is None else lo
    hi = r.max() + 1 if hi is None else hi
    grid = np.arange(lo, hi + step / 2, step)
    vals = np.maximum(r[None, :] - grid[:, None], 0.0) @ w + grid
    # the dual is piecewise linear with kinks at the risks; include them
    kinks = np.maximum(r[None, :] - r[:, None], 0.0) @ w + r
    return min(float(vals.min()), float(kinks.min()))


def naive_class_risks(pred, labels, k):
    risks = []
    for c in range(k):
        wrong = total = 0
        for yp, yt in zip(pred, labels):
            if yt == c:
                total += 1
                wrong += int(yp != yt)
        risks.append(wrong / total)
    return risks


def random_instance(rng, k_max=10, feasible_alpha=True):
    """Risks U[0,1], Dirichlet probabilities, feasible homogeneous and heterogeneous alphas."""
    k = int(rng.integers(2, k_max + 1))
    r = rng.random(k)
    p = rng.dirichlet(np.ones(k))
    p = p / p.sum()
    alpha = float(rng.uniform(0.01, 1.0))
    # heterogeneous alphas with sum(p / alpha) >= 1: scale down if needed
    alphas = rng.uniform(0.01, 1.5, size=k)
    mass = float(np.sum(p / alphas))
    if mass < 1:
        alphas = alphas * mass * 0.999
    return r, p, alpha, alphas


def grid_projection(q, p, u, step, lo=None, hi=None):
    """Closest feasible point among multiples of ``step`` in the first k-1 coordinates.

    The last coordinate is solved from the equality. ``lo``/``hi`` restrict
    the search window per coordinate (defaults: the whole box).
    """
    q, p, u = (np.asarray(v, dtype=float) for v in (q, p, u))
    k = p.size
    lo = np.zeros(k) if lo is None else np.maximum(lo, 0.0)
    hi = u if hi is None else np.minimum(hi, u)
    axes = []
    for i in range(k - 1):
        a = np.arange(np.ceil(lo[i] / step), np.floor(hi[i] / step) + 1) * step
        axes.append(a[(a >= 0) & (a <= u[i])])
    if any(a.size == 0 for a in axes):
        return None
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    last = (1.0 - pts @ p[:-1]) / p[-1]
    ok = (last >= 0) & (last <= u[-1])
    if not np.any(ok):
        return None
    pts = np.hstack([pts[ok], last[ok, None]])
    d = np.linalg.norm(pts - q, axis=1)
    return pts[np.argmin(d)]
