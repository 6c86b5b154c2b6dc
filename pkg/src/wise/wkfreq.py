"""Weighted k-FreqItems clustering over sparse binary supports.

The engine's data model mirrors the weighting construction upstream:
rows are binary supports (a CSR matrix) and a single non-negative weight
vector over coordinates is shared by all rows of a round, so row i's
weighted vector is omega * x_i.  Centers are general sparse weighted
vectors (retained coordinates with average contributions).  Passing
``weights=None`` selects a genuinely unweighted kernel: plain Jaccard on
integer set sizes and integer FreqItem counting, the original method.

Seeding is a two-level MinHash scheme: band signatures group rows into
buckets, bucket sketches are hashed again to merge near-duplicate
buckets into bins, and each bin contributes one FreqItem candidate;
candidates are deduplicated and reduced to k by a distance-weighted
sampling pass.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from ._rng import derive_seed, keyed_uniform_grid
from .errors import ConfigError, DataError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SparseWeightedVector:
    """Sorted sparse vector with strictly positive values."""

    idx: np.ndarray
    val: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "idx", np.asarray(self.idx, dtype=np.int64))
        object.__setattr__(self, "val", np.asarray(self.val, dtype=np.float64))
        if self.idx.shape != self.val.shape:
            raise ConfigError("idx and val must have equal length")
        if self.idx.size and np.any(np.diff(self.idx) <= 0):
            raise ConfigError("coordinates must be strictly increasing")
        if np.any(~np.isfinite(self.val)) or np.any(self.val <= 0):
            raise ConfigError("values must be finite and positive")

    @property
    def total(self) -> float:
        return float(self.val.sum())


@dataclass(frozen=True)
class FreqItemCenter:
    """Sparse weighted center: retained coordinates with average contributions."""

    idx: np.ndarray
    val: np.ndarray
    size: int

    def __post_init__(self):
        object.__setattr__(self, "idx", np.asarray(self.idx, dtype=np.int64))
        object.__setattr__(self, "val", np.asarray(self.val, dtype=np.float64))

    @property
    def total(self) -> float:
        return float(self.val.sum())


@dataclass(frozen=True)
class ClusterParams:
    k: int
    alpha: float = 0.5
    beta: float = 0.5
    max_iter: int = 50
    seed: int = 0
    lsh_tables: int = 4
    lsh_bands: int = 8
    lsh_rows: int = 2
    dedup_sim: float = 0.95

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if not (0.0 <= self.alpha <= 1.0 and 0.0 <= self.beta <= 1.0):
            raise ConfigError("alpha and beta must lie in [0,1]")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")


@dataclass
class ClusterResult:
    labels: np.ndarray
    centers: list[FreqItemCenter]
    n_iter: int
    mean_distance: float
    # one entry per assignment step: (mean distance of previous labels under
    # the current centers or None on the first step, mean after reassignment)
    history: list[tuple[float | None, float]]


def weighted_jaccard(v: SparseWeightedVector, u: SparseWeightedVector) -> float:
    """Similarity sum(min)/sum(max); two empty vectors are identical (1)."""
    common, ia, ib = np.intersect1d(v.idx, u.idx, assume_unique=True, return_indices=True)
    smin = float(np.minimum(v.val[ia], u.val[ib]).sum())
    smax = v.total + u.total - smin
    if smax == 0.0:
        return 1.0
    return smin / smax


def jaccard_pair_distance(v, u) -> float:
    return 1.0 - weighted_jaccard(v, u)


# --- Consistent Weighted Sampling -------------------------------------------
#
# Ioffe's ICWS with counter-based randomness: the Gamma(2,1) and Uniform
# draws for coordinate t under hash h are produced from keyed uniforms,
# so no sampling tables are stored and any (t, h) pair can be evaluated
# independently.  A hash collision has probability equal to the weighted
# Jaccard similarity of the two vectors.


def _icws_parts(seed: int, hash_ids: np.ndarray, coords: np.ndarray):
    u1 = keyed_uniform_grid(seed, 0, hash_ids, coords)
    u2 = keyed_uniform_grid(seed, 1, hash_ids, coords)
    u3 = keyed_uniform_grid(seed, 2, hash_ids, coords)
    u4 = keyed_uniform_grid(seed, 3, hash_ids, coords)
    beta = keyed_uniform_grid(seed, 4, hash_ids, coords)
    r = -(np.log(u1) + np.log(u2))        # Gamma(2,1)
    ln_c = np.log(-(np.log(u3) + np.log(u4)))
    return r, ln_c, beta


def _icws_keys(values: np.ndarray, r, ln_c, beta):
    """ICWS key (smaller wins) and companion integer per (hash, coordinate)."""
    ln_v = np.log(values)
    t_k = np.floor(ln_v / r + beta)
    ln_y = r * (t_k - beta)
    ln_a = ln_c - ln_y - r
    return ln_a, t_k.astype(np.int64)


def cws_hash(v: SparseWeightedVector, h: int, seed: int) -> tuple[int, int]:
    """One weighted-MinHash draw: (argmin coordinate, discretized companion)."""
    coords, comps = cws_sketch(v, np.array([h], dtype=np.int64), seed)
    return int(coords[0]), int(comps[0])


def cws_sketch(v: SparseWeightedVector, hash_ids: np.ndarray, seed: int):
    """All requested hashes of one vector: (coords, companions) arrays."""
    if v.idx.size == 0:
        raise DataError("cannot hash an empty vector")
    hash_ids = np.asarray(hash_ids, dtype=np.int64)
    r, ln_c, beta = _icws_parts(seed, hash_ids, v.idx)
    ln_a, t_k = _icws_keys(v.val[None, :], r, ln_c, beta)
    j = np.argmin(ln_a, axis=1)
    rows = np.arange(len(hash_ids))
    return v.idx[j], t_k[rows, j]


def _key_grid(omega: np.ndarray | None, p: int, hash_ids: np.ndarray, seed: int):
    """Precomputed ICWS keys for every coordinate (rows share weights).

    Coordinates with zero weight get +inf keys so they never win.
    Returns (keys, companions), each of shape (len(hash_ids), p).
    """
    coords = np.arange(p, dtype=np.int64)
    r, ln_c, beta = _icws_parts(seed, hash_ids, coords)
    values = np.ones(p) if omega is None else omega
    active = values > 0
    safe = np.where(active, values, 1.0)
    ln_a, t_k = _icws_keys(safe[None, :], r, ln_c, beta)
    ln_a[:, ~active] = np.inf
    return ln_a, t_k


def _segment_argmin(kv: np.ndarray, indptr: np.ndarray) -> np.ndarray:
    """Position of each row segment's first minimum within kv."""
    counts = np.diff(indptr)
    if counts.size and np.all(counts == counts[0]) and counts[0] > 0:
        width = counts[0]
        return indptr[:-1] + np.argmin(kv.reshape(-1, width), axis=1)
    out = np.empty(counts.size, dtype=np.int64)
    for i in range(counts.size):
        lo, hi = indptr[i], indptr[i + 1]
        if lo == hi:
            out[i] = -1
        else:
            out[i] = lo + int(np.argmin(kv[lo:hi]))
    return out


def cws_signatures(X: sparse.csr_matrix, omega, hash_ids: np.ndarray, seed: int):
    """Sketch every row: (coords, companions), each (n, len(hash_ids)).

    Rows whose effective support is empty get coordinate -1.
    """
    n, p = X.shape
    keys, tks = _key_grid(omega, p, hash_ids, seed)
    coords_out = np.full((n, len(hash_ids)), -1, dtype=np.int64)
    comp_out = np.zeros((n, len(hash_ids)), dtype=np.int64)
    cols = X.indices
    for hi in range(len(hash_ids)):
        kv = keys[hi][cols]
        pos = _segment_argmin(kv, X.indptr)
        ok = (pos >= 0) & np.isfinite(kv[np.maximum(pos, 0)])
        coords_out[ok, hi] = cols[pos[ok]]
        comp_out[ok, hi] = tks[hi][cols[pos[ok]]]
    return coords_out, comp_out


# --- FreqItem centers ---------------------------------------------------------


def _keep_mask(s: np.ndarray, alpha: float) -> np.ndarray:
    """Coordinates carrying at least alpha of the peak aggregate mass."""
    s_max = s.max()
    return (s > 0) & (s >= alpha * s_max)


def freqitem_center(cluster: list[SparseWeightedVector], alpha: float) -> FreqItemCenter:
    """Aggregate members into a center: keep heavy coordinates, average them."""
    if not cluster:
        raise DataError("empty cluster has no FreqItem center")
    agg: dict[int, list[float]] = {}
    for vec in cluster:
        for t, v in zip(vec.idx.tolist(), vec.val.tolist()):
            slot = agg.setdefault(t, [0.0, 0])
            slot[0] += v
            slot[1] += 1
    coords = np.array(sorted(agg), dtype=np.int64)
    s = np.array([agg[t][0] for t in coords])
    f = np.array([agg[t][1] for t in coords])
    keep = _keep_mask(s, alpha)
    return FreqItemCenter(
        idx=coords[keep],
        val=s[keep] / np.maximum(1, f[keep]),
        size=len(cluster),
    )


def _freqitem_from_counts(f: np.ndarray, omega: np.ndarray | None, alpha: float, size: int) -> FreqItemCenter:
    """Center from column activation counts of binary members."""
    s = f.astype(np.float64) if omega is None else f * omega
    keep = _keep_mask(s, alpha)
    idx = np.flatnonzero(keep)
    val = s[idx] / np.maximum(1, f[idx])
    return FreqItemCenter(idx=idx.astype(np.int64), val=val, size=size)


def _column_counts(X: sparse.csr_matrix, rows: np.ndarray) -> np.ndarray:
    sub = X[rows]
    return np.asarray(sub.sum(axis=0)).ravel().astype(np.int64)


# --- Distance kernels ---------------------------------------------------------


def _center_matrix(centers: list[FreqItemCenter], p: int, cap) -> sparse.csr_matrix:
    indptr = np.zeros(len(centers) + 1, dtype=np.int64)
    np.cumsum([c.idx.size for c in centers], out=indptr[1:])
    indices = (
        np.concatenate([c.idx for c in centers])
        if centers and indptr[-1]
        else np.array([], dtype=np.int64)
    )
    data = (
        np.concatenate([cap(c) for c in centers])
        if centers and indptr[-1]
        else np.array([], dtype=np.float64)
    )
    return sparse.csr_matrix((data, indices, indptr), shape=(len(centers), p))


def _distances_weighted(X, omega, centers) -> np.ndarray:
    """1 - sum(min)/sum(max) between omega-weighted rows and centers."""
    p = X.shape[1]
    M = _center_matrix(centers, p, lambda c: np.minimum(omega[c.idx], c.val))
    smin = np.asarray((X @ M.T).todense(), dtype=np.float64)
    row_tot = X @ omega
    cen_tot = np.array([c.total for c in centers])
    union = row_tot[:, None] + cen_tot[None, :] - smin
    with np.errstate(invalid="ignore", divide="ignore"):
        sim = np.where(union > 0, smin / np.where(union > 0, union, 1.0), 1.0)
    return 1.0 - sim


def _distances_plain(X_int, centers) -> np.ndarray:
    """Plain Jaccard distance between binary rows and center supports."""
    p = X_int.shape[1]
    M = _center_matrix(centers, p, lambda c: np.ones(c.idx.size)).astype(np.int64)
    inter = np.asarray((X_int @ M.T).todense(), dtype=np.int64)
    row_sz = np.diff(X_int.indptr)
    cen_sz = np.array([c.idx.size for c in centers], dtype=np.int64)
    union = row_sz[:, None] + cen_sz[None, :] - inter
    sim = np.where(union > 0, inter / np.where(union > 0, union, 1), 1.0)
    return 1.0 - sim


# --- SILK-style seeding -------------------------------------------------------


def _band_buckets(coords: np.ndarray, comps: np.ndarray, nonempty: np.ndarray, params: ClusterParams):
    """Group rows by identical band signatures, per table."""
    n = coords.shape[0]
    buckets = []
    h = 0
    for _table in range(params.lsh_tables):
        for _band in range(params.lsh_bands):
            sig = np.concatenate(
                [coords[:, h:h + params.lsh_rows], comps[:, h:h + params.lsh_rows]],
                axis=1,
            )
            h += params.lsh_rows
            view = np.ascontiguousarray(sig).view(
                np.dtype((np.void, sig.dtype.itemsize * sig.shape[1]))
            ).ravel()
            _, inverse, counts = np.unique(view, return_inverse=True, return_counts=True)
            order = np.argsort(inverse, kind="stable")
            offsets = np.zeros(len(counts) + 1, dtype=np.int64)
            np.cumsum(counts, out=offsets[1:])
            for g in range(len(counts)):
                members = order[offsets[g]:offsets[g + 1]]
                members = members[nonempty[members]]
                if members.size >= 2:
                    buckets.append(np.sort(members))
    return buckets


def silk_seed(
    X: sparse.csr_matrix,
    omega: np.ndarray | None,
    params: ClusterParams,
    seed: int,
) -> list[FreqItemCenter]:
    """Two-level MinHash overseeding reduced to k initial centers."""
    n, p = X.shape
    k = params.k
    if n < k:
        raise DataError(f"need at least k={k} rows, got {n}")
    rng = np.random.default_rng(derive_seed(seed, "silk"))
    level1 = params.lsh_tables * params.lsh_bands * params.lsh_rows
    coords, comps = cws_signatures(X, omega, np.arange(level1, dtype=np.int64), seed)
    nonempty = coords[:, 0] >= 0
    if not np.any(nonempty):
        raise DataError("all rows have empty effective support")

    buckets = _band_buckets(coords, comps, nonempty, params)

    # Level 2: sketch each bucket's FreqItem with a short hash band and
    # merge buckets whose signatures agree.  A band, not a single hash:
    # one hash collides with probability J_w, which would glue together
    # buckets that are only mildly similar.
    level2_ids = level1 + np.arange(4, dtype=np.int64)
    bins: dict[tuple, np.ndarray] = {}
    for members in buckets:
        counts = _column_counts(X, members)
        center = _freqitem_from_counts(counts, omega, params.beta, members.size)
        if center.idx.size == 0:
            continue
        hc, ht = cws_sketch(SparseWeightedVector(center.idx, center.val), level2_ids, seed)
        key = tuple(hc.tolist()) + tuple(ht.tolist())
        prev = bins.get(key)
        bins[key] = members if prev is None else np.union1d(prev, members)

    candidates = []
    for members in bins.values():
        counts = _column_counts(X, members)
        candidates.append(_freqitem_from_counts(counts, omega, params.beta, members.size))

    cap = max(4 * k, 32)
    candidates.sort(key=lambda c: -c.size)
    candidates = candidates[:cap]

    kept: list[FreqItemCenter] = []
    merged_counts: list[int] = []
    for cand in candidates:
        vec = SparseWeightedVector(cand.idx, cand.val)
        matched = False
        for i, other in enumerate(kept):
            if weighted_jaccard(vec, SparseWeightedVector(other.idx, other.val)) >= params.dedup_sim:
                merged_counts[i] += cand.size
                matched = True
                break
        if not matched:
            kept.append(cand)
            merged_counts.append(cand.size)

    centers = _reduce_candidates(kept, merged_counts, k, rng)
    if len(centers) < k:
        centers = _pad_with_rows(centers, X, omega, nonempty, k, rng)
    return centers


def _reduce_candidates(cands, weights, k, rng, restarts: int = 8) -> list[FreqItemCenter]:
    """Pick k candidates by weight*distance^2 sampling, best of several
    restarts under the weighted quantization cost over the candidate set.

    The first restart anchors on the heaviest candidate; later restarts
    sample the first pick by weight, so a misleadingly heavy blended
    candidate cannot dominate every restart.
    """
    if len(cands) <= k:
        return list(cands)
    weights = np.asarray(weights, dtype=np.float64)
    vecs = [SparseWeightedVector(c.idx, c.val) for c in cands]
    m = len(cands)
    sim = np.eye(m)
    for i in range(m):
        for j in range(i + 1, m):
            sim[i, j] = sim[j, i] = weighted_jaccard(vecs[i], vecs[j])
    dmat = 1.0 - sim

    def sample(score) -> int:
        total = score.sum()
        if total <= 0:
            return int(np.flatnonzero(score >= 0)[0])
        return int(rng.choice(m, p=score / total))

    best_choice, best_cost = None, np.inf
    for restart in range(restarts):
        first = int(np.argmax(weights)) if restart == 0 else sample(weights.copy())
        chosen = [first]
        dist = dmat[first].copy()
        while len(chosen) < k:
            score = weights * dist**2
            score[chosen] = 0.0
            nxt = sample(score)
            if nxt in chosen:  # all mass on chosen: pick any unchosen
                nxt = int(next(i for i in range(m) if i not in chosen))
            chosen.append(nxt)
            dist = np.minimum(dist, dmat[nxt])
        cost = float((weights * dist**2).sum())
        if cost < best_cost:
            best_choice, best_cost = chosen, cost
    return [cands[i] for i in best_choice]


def _row_center(X, omega, i) -> FreqItemCenter:
    support = X.indices[X.indptr[i]:X.indptr[i + 1]].astype(np.int64)
    if omega is not None:
        support = support[omega[support] > 0]
        val = omega[support]
    else:
        val = np.ones(support.size)
    return FreqItemCenter(idx=support, val=val, size=1)


def _pad_with_rows(centers, X, omega, nonempty, k, rng) -> list[FreqItemCenter]:
    """Top up with distinct data rows; duplicates allowed only as a last resort."""
    centers = list(centers)
    supports = {c.idx.tobytes() for c in centers}
    candidates = np.flatnonzero(nonempty)
    order = candidates[rng.permutation(candidates.size)]
    spare = []
    for i in order:
        if len(centers) >= k:
            break
        center = _row_center(X, omega, int(i))
        key = center.idx.tobytes()
        if key in supports:
            spare.append(center)
            continue
        supports.add(key)
        centers.append(center)
    for center in spare:
        if len(centers) >= k:
            break
        centers.append(center)
    if len(centers) < k:
        raise DataError(f"could not seed k={k} centers from {len(centers)} distinct rows")
    return centers


# --- Lloyd-style iteration ----------------------------------------------------


def cluster(
    X: sparse.csr_matrix,
    params: ClusterParams,
    weights: np.ndarray | None = None,
    initial_centers: list[FreqItemCenter] | None = None,
) -> ClusterResult:
    """Weighted k-FreqItems: assign to nearest center, recompute FreqItems.

    ``weights`` is the shared per-coordinate weight vector (None for the
    plain unweighted engine).  Weights are scale-normalized to max 1,
    which leaves every weighted Jaccard distance unchanged.
    """
    X = X.tocsr()
    n, p = X.shape
    if n < params.k:
        raise DataError(f"need at least k={params.k} rows, got {n}")
    omega = None
    if weights is not None:
        omega = np.asarray(weights, dtype=np.float64)
        if omega.shape != (p,):
            raise ConfigError(f"weights must have shape ({p},)")
        if np.any(omega < 0) or not np.all(np.isfinite(omega)):
            raise ConfigError("weights must be finite and non-negative")
        peak = omega.max()
        if peak <= 0:
            raise ConfigError("weights are all zero")
        omega = omega / peak

    X_int = X.astype(np.int64) if omega is None else None
    centers = initial_centers or silk_seed(X, omega, params, params.seed)
    if len(centers) != params.k:
        raise ConfigError(f"expected {params.k} initial centers, got {len(centers)}")

    rows = np.arange(n)
    labels_prev = None
    history: list[tuple[float | None, float]] = []
    labels = np.zeros(n, dtype=np.int64)
    final_mean = 0.0
    n_iter = 0
    for _ in range(params.max_iter):
        if omega is None:
            D = _distances_plain(X_int, centers)
        else:
            D = _distances_weighted(X, omega, centers)
        labels = D.argmin(axis=1)
        assigned = D[rows, labels]
        pre_mean = float(D[rows, labels_prev].mean()) if labels_prev is not None else None
        history.append((pre_mean, float(assigned.mean())))

        counts = np.bincount(labels, minlength=params.k)
        if np.any(counts == 0):
            spare = assigned.copy()
            for cid in np.flatnonzero(counts == 0):
                worst = int(np.argmax(spare))
                labels[worst] = cid
                assigned[worst] = D[worst, cid]
                spare[worst] = -np.inf
        final_mean = float(assigned.mean())
        n_iter += 1

        if labels_prev is not None and np.array_equal(labels, labels_prev):
            break
        labels_prev = labels
        centers = []
        for c in range(params.k):
            members = np.flatnonzero(labels == c)
            centers.append(
                _freqitem_from_counts(_column_counts(X, members), omega, params.alpha, members.size)
            )
    else:
        log.debug("cluster: stopped at max_iter=%d without label fixed point", params.max_iter)

    members = [np.flatnonzero(labels == c) for c in range(params.k)]
    centers = [
        _freqitem_from_counts(_column_counts(X, m), omega, params.alpha, m.size)
        for m in members
    ]
    return ClusterResult(
        labels=labels,
        centers=centers,
        n_iter=n_iter,
        mean_distance=final_mean,
        history=history,
    )
