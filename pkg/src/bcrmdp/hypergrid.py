"""Step-wise adaptive grid over conjugate hyper-parameters.

Each level is produced from the previous one by three moves:

1. expansion: every node is pushed through every point of an observation
   net, weighted by node weight times posterior-predictive probability;
2. clustering: the Euclidean-closest pair is merged into its weighted
   centroid until at most ``m_max`` nodes remain;
3. projection guarantee: any expanded candidate farther than ``eps`` from the
   clustered set is reinserted, heaviest first.

Nodes within a level are kept in lexicographic order of their
hyper-parameters, so the nearest-node projection (ties to the lowest index)
is a deterministic function of the inputs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .bayes import Belief, ConjugateFamily

_REL_TIE = 1e-12


@dataclass(frozen=True)
class GridParams:
    eps: float
    m_max: int
    radius: float
    remerge: bool = True

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("grid eps must be positive")
        if self.m_max < 1:
            raise ValueError("m_max must be >= 1")
        if self.radius <= 0:
            raise ValueError("net radius must be positive")


class GridLevel:
    """Representative hyper-parameters of one stage."""

    def __init__(self, tau: int, hypers, weights):
        H = np.atleast_2d(np.asarray(hypers, dtype=float))
        w = np.asarray(weights, dtype=float).ravel()
        if H.shape[0] != w.size or w.size == 0:
            raise ValueError("a level needs one weight per node and at least one node")
        self.tau = int(tau)
        self.hypers = H
        self.weights = w
        self.hypers.setflags(write=False)
        self.weights.setflags(write=False)

    def __len__(self) -> int:
        return self.weights.size

    def __repr__(self) -> str:
        return f"GridLevel(tau={self.tau}, nodes={len(self)})"

    def distances(self, h) -> np.ndarray:
        return np.sqrt(np.sum((self.hypers - np.asarray(h, dtype=float)) ** 2, axis=1))

    def rep(self, h) -> int:
        return int(_nearest(self.hypers, np.asarray(h, dtype=float)[None, :])[0])

    def rep_many(self, hs) -> np.ndarray:
        return _nearest(self.hypers, np.atleast_2d(np.asarray(hs, dtype=float)))

    def projection_error(self, h) -> float:
        return float(self.distances(h).min())


def _nearest(nodes: np.ndarray, points: np.ndarray) -> np.ndarray:
    d2 = np.sum((points[:, None, :] - nodes[None, :, :]) ** 2, axis=2)
    best = d2.min(axis=1, keepdims=True)
    tied = d2 <= best * (1.0 + _REL_TIE) + 1e-300
    return np.argmax(tied, axis=1)


def _lex_order(H: np.ndarray) -> np.ndarray:
    return np.lexsort(H.T[::-1])


def eps_net(R: float, eps: float, support_kind: str) -> np.ndarray:
    """Observation points covering the support within radius ``R``."""
    if R <= 0 or eps <= 0:
        raise ValueError("net radius and eps must be positive")
    if support_kind == "binary":
        return np.array([0.0, 1.0])
    if support_kind in ("count", "categorical"):
        if eps < 1:
            raise ValueError("integer supports need eps >= 1")
        lo = 0 if support_kind == "count" else 1
        top = int(np.floor(R))
        pts = list(range(lo, top + 1, int(np.floor(eps))))
        if pts[-1] != top:
            pts.append(top)
        return np.asarray(pts, dtype=float)
    if support_kind == "real":
        n = int(np.ceil(R / eps))
        return np.linspace(-R, R, n + 1)
    if support_kind == "positive":
        n = int(np.ceil(R / (2.0 * eps)))
        return (np.arange(n) + 0.5) * (R / n)
    raise ValueError(f"unknown support kind {support_kind!r}")


def expand(level: GridLevel, family: ConjugateFamily, net: Sequence[float]):
    """Candidate successors with weights node.weight * predictive(h, xi)."""
    net = np.asarray(net, dtype=float)
    out_h, out_w = [], []
    for h, w in zip(level.hypers, level.weights):
        pw = family.predictive_weights(h, net)
        for x, p in zip(net, pw):
            out_h.append(family.update(h, x))
            out_w.append(w * p)
    return np.asarray(out_h), np.asarray(out_w)


def _merge_duplicates(H: np.ndarray, w: np.ndarray):
    uniq, inv = np.unique(H, axis=0, return_inverse=True)
    inv = np.asarray(inv).ravel()
    if uniq.shape[0] == H.shape[0]:
        return H, w
    return uniq, np.bincount(inv, weights=w, minlength=uniq.shape[0])


def _lexmin_pair(H: np.ndarray, I: np.ndarray, J: np.ndarray):
    # orient every pair so its first member is lexicographically smaller
    a, b = H[I], H[J]
    swap = np.zeros(I.size, dtype=bool)
    undecided = np.ones(I.size, dtype=bool)
    for k in range(H.shape[1]):
        gt = undecided & (a[:, k] > b[:, k])
        lt = undecided & (a[:, k] < b[:, k])
        swap |= gt
        undecided &= ~(gt | lt)
    lo = np.where(swap[:, None], b, a)
    hi = np.where(swap[:, None], a, b)
    keys = np.hstack([lo, hi])
    pick = np.lexsort(keys.T[::-1])[0]
    return int(I[pick]), int(J[pick])


def cluster(hypers, weights, m_max: int):
    """Merge closest pairs into weighted centroids until at most ``m_max`` remain."""
    H = np.atleast_2d(np.asarray(hypers, dtype=float))
    w = np.asarray(weights, dtype=float).ravel()
    keep = w > 0
    H, w = _merge_duplicates(H[keep], w[keep])
    n = w.size
    if n <= m_max:
        order = _lex_order(H)
        return H[order], w[order]
    H, w = H.copy(), w.copy()
    D = np.sum((H[:, None, :] - H[None, :, :]) ** 2, axis=2)
    np.fill_diagonal(D, np.inf)
    alive = np.ones(n, dtype=bool)
    rowarg = np.argmin(D, axis=1)
    rowmin = D[np.arange(n), rowarg]
    count = n
    while count > m_max:
        dmin = rowmin.min()
        tol = dmin * (1.0 + _REL_TIE) + 1e-300
        rows = np.flatnonzero(rowmin <= tol)
        if rows.size == 2:
            i, j = int(rows[0]), int(rows[1])
        else:
            I, J = np.nonzero(D[rows] <= tol)
            I = rows[I]
            sel = I < J
            i, j = _lexmin_pair(H, I[sel], J[sel])
        i, j = min(i, j), max(i, j)
        wi, wj = w[i], w[j]
        H[i] = (wi * H[i] + wj * H[j]) / (wi + wj)
        w[i] = wi + wj
        alive[j] = False
        D[j, :] = np.inf
        D[:, j] = np.inf
        rowmin[j] = np.inf
        di = np.sum((H - H[i]) ** 2, axis=1)
        di[~alive] = np.inf
        di[i] = np.inf
        D[i, :] = di
        D[:, i] = di
        count -= 1
        stale = alive & ((rowarg == i) | (rowarg == j))
        stale[i] = True
        for k in np.flatnonzero(stale):
            rowarg[k] = np.argmin(D[k])
            rowmin[k] = D[k, rowarg[k]]
        better = alive & (di < rowmin)
        rowmin[better] = di[better]
        rowarg[better] = i
    H, w = H[alive], w[alive]
    order = _lex_order(H)
    return H[order], w[order]


def _covered(exact: np.ndarray, nodes: np.ndarray, eps: float) -> np.ndarray:
    d2 = np.sum((exact[:, None, :] - nodes[None, :, :]) ** 2, axis=2)
    return d2.min(axis=1) <= eps * eps * (1.0 + 1e-9)


def project_guarantee(exact_h, exact_w, nodes_h, nodes_w, eps: float,
                      m_max: int | None = None, remerge: bool = True):
    """Reinsert exact candidates farther than ``eps`` from the clustered nodes.

    If reinsertion pushes the count above ``m_max`` a re-merge pass runs in
    which a closest-pair merge is accepted only if every exact candidate stays
    within ``eps`` of the grid; the pass stops when the count is back under
    ``m_max`` or no admissible merge remains. The guarantee therefore always
    holds on return.
    """
    E = np.atleast_2d(np.asarray(exact_h, dtype=float))
    Ew = np.asarray(exact_w, dtype=float).ravel()
    H = np.atleast_2d(np.asarray(nodes_h, dtype=float)).copy()
    w = np.asarray(nodes_w, dtype=float).ravel().copy()
    if H.shape[0] == 0:
        raise ValueError("clustered set must be non-empty")
    missing = ~_covered(E, H, eps)
    if missing.any():
        idx = np.flatnonzero(missing)
        # heaviest first, lexicographic among equal weights
        keys = np.column_stack([-Ew[idx], E[idx]])
        idx = idx[np.lexsort(keys.T[::-1])]
        added_h, added_w = [], []
        for k in idx:
            pts = np.vstack([H] + added_h) if added_h else H
            if np.min(np.sum((pts - E[k]) ** 2, axis=1)) > eps * eps * (1.0 + 1e-9):
                added_h.append(E[k][None, :])
                added_w.append(Ew[k])
        H = np.vstack([H] + added_h)
        w = np.concatenate([w, added_w])
        H, w = _merge_duplicates(H, w)
        if remerge and m_max is not None and w.size > m_max:
            H, w = _admissible_merge(E, H, w, eps, m_max)
    order = _lex_order(H)
    return H[order], w[order]


def _admissible_merge(E, H, w, eps, m_max):
    lim = eps * eps * (1.0 + 1e-9)
    while w.size > m_max:
        n = w.size
        d2 = np.sum((E[:, None, :] - H[None, :, :]) ** 2, axis=2)
        cover = d2 <= lim
        cnt = cover.sum(axis=1)
        # exacts that lose coverage only if both of their covering nodes go
        solo = [[] for _ in range(n)]
        duo: dict = {}
        for e in np.flatnonzero(cnt <= 2):
            nodes = np.flatnonzero(cover[e])
            if nodes.size == 1:
                solo[nodes[0]].append(e)
            else:
                duo.setdefault((nodes[0], nodes[1]), []).append(e)
        D = np.sum((H[:, None, :] - H[None, :, :]) ** 2, axis=2)
        iu, ju = np.triu_indices(n, 1)
        order = np.lexsort((ju, iu, D[iu, ju]))
        merged = False
        for p in order:
            i, j = iu[p], ju[p]
            c = (w[i] * H[i] + w[j] * H[j]) / (w[i] + w[j])
            deps = solo[i] + solo[j] + duo.get((i, j), [])
            if deps and np.max(np.sum((E[deps] - c) ** 2, axis=1)) > lim:
                continue
            keep = np.ones(n, dtype=bool)
            keep[[i, j]] = False
            H = np.vstack([H[keep], c[None, :]])
            w = np.append(w[keep], w[i] + w[j])
            merged = True
            break
        if not merged:
            break
    return H, w


def next_level(level: GridLevel, family: ConjugateFamily, net, params: GridParams) -> GridLevel:
    Ch, Cw = expand(level, family, net)
    keep = Cw > 0
    Ch, Cw = Ch[keep], Cw[keep]
    H, w = cluster(Ch, Cw, params.m_max)
    H, w = project_guarantee(Ch, Cw, H, w, params.eps, params.m_max, params.remerge)
    return GridLevel(level.tau + 1, H, w / w.sum())


def build_grids(prior: Belief, stages: int, params: GridParams, net=None) -> list[GridLevel]:
    """Levels 1..stages rooted at the prior hyper-parameters."""
    if stages < 1:
        raise ValueError("need at least one stage")
    family = prior.family
    if net is None:
        net = eps_net(params.radius, params.eps, family.support_kind)
    levels = [GridLevel(1, prior.h[None, :], [1.0])]
    for _ in range(stages - 1):
        levels.append(next_level(levels[-1], family, net, params))
    return levels


def stationary_grid(prior: Belief, depth: int, params: GridParams, net=None) -> GridLevel:
    """Union of the levels up to ``depth`` as one self-projecting node set.

    The root hyper-parameters keep index 0 when they are the lexicographic
    minimum; use :meth:`GridLevel.rep` to locate them in general.
    """
    levels = build_grids(prior, depth, params, net)
    H = np.vstack([lv.hypers for lv in levels])
    w = np.concatenate([lv.weights for lv in levels]) / len(levels)
    H, w = _merge_duplicates(H, w)
    order = _lex_order(H)
    return GridLevel(depth, H[order], w[order])


def projection_error(h_exact, level: GridLevel) -> float:
    return level.projection_error(h_exact)


def error_bound(tau: int, eps: float, lipschitz: float = 1.0) -> float:
    """Worst-case projection error (tau-1)(1+L_H)eps for observations inside the net radius."""
    return (tau - 1) * (1.0 + lipschitz) * eps


def serialize_levels(levels: Iterable[GridLevel]) -> str:
    lines = []
    for lv in levels:
        for k, (h, w) in enumerate(zip(lv.hypers, lv.weights)):
            fields = [str(lv.tau), str(k)] + [format(v, ".12g") for v in h] + [format(w, ".12g")]
            lines.append(",".join(fields))
    return "\n".join(lines) + "\n"


def parse_levels(text: str) -> list[GridLevel]:
    rows: dict[int, list] = {}
    for line in text.strip().splitlines():
        parts = line.split(",")
        tau = int(parts[0])
        rows.setdefault(tau, []).append([float(v) for v in parts[2:]])
    out = []
    for tau in sorted(rows):
        arr = np.asarray(rows[tau])
        out.append(GridLevel(tau, arr[:, :-1], arr[:, -1]))
    return out
