"""Clustering evaluation: ARI, NMI, purity, Hungarian-matched accuracy,
and a Gower-distance silhouette for mixed-type tables.

ARI is computed in exact integer arithmetic up to the final division, so
the chance-adjustment algebra never loses precision.  NMI uses the
geometric-mean normalization with natural logarithms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .data_model import MixedTable, normalize_numeric, ordinal_to_scalar
from .errors import DataError


@dataclass
class ContingencyTable:
    counts: np.ndarray      # K_pred x K_true
    row_sums: np.ndarray
    col_sums: np.ndarray
    n: int


def contingency(y_pred, y_true) -> ContingencyTable:
    y_pred = np.asarray(y_pred)
    y_true = np.asarray(y_true)
    if y_pred.shape != y_true.shape or y_pred.ndim != 1:
        raise DataError(f"label shapes differ: {y_pred.shape} vs {y_true.shape}")
    if y_pred.size == 0:
        raise DataError("empty label arrays")
    if y_pred.size <= 64:
        # plain dicts beat numpy dispatch overhead at this scale
        pmap, tmap, cells = {}, {}, {}
        for a, b in zip(y_pred.tolist(), y_true.tolist()):
            i = pmap.setdefault(a, len(pmap))
            j = tmap.setdefault(b, len(tmap))
            cells[(i, j)] = cells.get((i, j), 0) + 1
        counts = np.zeros((len(pmap), len(tmap)), dtype=np.int64)
        for (i, j), v in cells.items():
            counts[i, j] = v
    else:
        _, pi = np.unique(y_pred, return_inverse=True)
        _, ti = np.unique(y_true, return_inverse=True)
        counts = np.zeros((int(pi.max()) + 1, int(ti.max()) + 1), dtype=np.int64)
        np.add.at(counts, (pi, ti), 1)
    return ContingencyTable(
        counts=counts,
        row_sums=counts.sum(axis=1),
        col_sums=counts.sum(axis=0),
        n=int(y_pred.size),
    )


def _comb2(x) -> int:
    return int(x) * (int(x) - 1) // 2


def ari(y_pred, y_true) -> float:
    """Adjusted Rand index via exact integer pair counts.

    With N2 = C(n,2), I = sum of C(n_ij,2), A/B the marginal pair sums:
    ARI = 2(N2*I - A*B) / (N2*(A+B) - 2AB); a zero denominator means both
    partitions are trivial and identical in pair structure, giving 1.
    """
    ct = contingency(y_pred, y_true)
    N2 = _comb2(ct.n)
    I = sum(_comb2(v) for v in ct.counts.ravel())
    A = sum(_comb2(v) for v in ct.row_sums)
    B = sum(_comb2(v) for v in ct.col_sums)
    num = 2 * (N2 * I - A * B)
    den = N2 * (A + B) - 2 * A * B
    if den == 0:
        return 1.0
    return num / den


def nmi(y_pred, y_true) -> float:
    """I(U;V) / sqrt(H(U) H(V)), natural logs.

    A zero-entropy side carries no information: both sides constant
    means the partitions agree trivially (1); exactly one constant side
    shares nothing (0).
    """
    ct = contingency(y_pred, y_true)
    n = ct.n
    hu = -sum((r / n) * math.log(r / n) for r in ct.row_sums if r > 0)
    hv = -sum((c / n) * math.log(c / n) for c in ct.col_sums if c > 0)
    if hu == 0.0 and hv == 0.0:
        return 1.0
    if hu == 0.0 or hv == 0.0:
        return 0.0
    mi = 0.0
    for i in range(ct.counts.shape[0]):
        for j in range(ct.counts.shape[1]):
            nij = ct.counts[i, j]
            if nij > 0:
                mi += (nij / n) * math.log(n * nij / (ct.row_sums[i] * ct.col_sums[j]))
    return mi / math.sqrt(hu * hv)


def purity(y_pred, y_true) -> float:
    ct = contingency(y_pred, y_true)
    return float(ct.counts.max(axis=1).sum()) / ct.n


def acc_hungarian(y_pred, y_true) -> float:
    """Best one-to-one label matching accuracy.

    scipy's rectangular assignment maximizes over injections from the
    smaller label set into the larger, which is exactly the padded
    square formulation.
    """
    ct = contingency(y_pred, y_true)
    rows, cols = linear_sum_assignment(-ct.counts)
    return float(ct.counts[rows, cols].sum()) / ct.n


def gower_columns(table: MixedTable, rows: np.ndarray) -> np.ndarray:
    """Per-column scalarization for Gower distances on a row subset.

    Numeric columns min-max normalize over the subset; ordinal columns
    map level indices onto [0,1]; nominal columns keep codes (compared
    by mismatch, so the code values never enter arithmetic).
    """
    cols = np.empty((rows.size, table.d))
    for j, col in enumerate(table.schema):
        raw = table.column(j)[rows]
        if col.kind == "numeric":
            cols[:, j] = normalize_numeric(raw).values
        elif col.kind == "ordinal":
            cols[:, j] = ordinal_to_scalar(raw, col).values
        else:
            cols[:, j] = raw
    return cols


def _gower_block(A: np.ndarray, B: np.ndarray, is_nominal: np.ndarray) -> np.ndarray:
    """Mean per-column Gower dissimilarity between row blocks A and B."""
    out = np.zeros((A.shape[0], B.shape[0]))
    for j in range(A.shape[1]):
        diff = A[:, j, None] - B[None, :, j]
        if is_nominal[j]:
            out += (diff != 0).astype(np.float64)
        else:
            out += np.abs(diff)
    return out / A.shape[1]


def swc_gower(table: MixedTable, y, subsample_size: int = 5000, seed: int = 0) -> float:
    """Mean silhouette under unweighted Gower distance.

    Rows beyond subsample_size are subsampled with the given seed (same
    seed, same subsample).  Singleton clusters contribute 0; so does a
    point whose best inter- and intra-distance are both 0.
    """
    y = np.asarray(y)
    if y.size != table.n:
        raise DataError(f"{y.size} labels for {table.n} rows")
    rng = np.random.default_rng(seed)
    if table.n > subsample_size:
        rows = np.sort(rng.choice(table.n, size=subsample_size, replace=False))
    else:
        rows = np.arange(table.n)
    ys = y[rows]
    labels, yi = np.unique(ys, return_inverse=True)
    K = labels.size
    if K < 2:
        raise DataError("silhouette needs at least 2 clusters in the sample")
    cols = gower_columns(table, rows)
    is_nominal = np.array([c.kind == "nominal" for c in table.schema])
    m = rows.size
    sizes = np.bincount(yi, minlength=K)
    onehot = np.zeros((m, K))
    onehot[np.arange(m), yi] = 1.0

    scores = np.zeros(m)
    chunk = 512
    for start in range(0, m, chunk):
        stop = min(start + chunk, m)
        D = _gower_block(cols[start:stop], cols, is_nominal)
        sums = D @ onehot                     # (chunk, K) total distance to each cluster
        own = yi[start:stop]
        block = np.arange(stop - start)
        a_tot = sums[block, own]
        own_size = sizes[own]
        # mean intra distance excludes the point itself
        with np.errstate(invalid="ignore", divide="ignore"):
            a = np.where(own_size > 1, a_tot / np.maximum(own_size - 1, 1), 0.0)
        mean_other = sums / sizes[None, :]
        mean_other[block, own] = np.inf
        b = mean_other.min(axis=1)
        denom = np.maximum(a, b)
        s = np.where(denom > 0, (b - a) / np.maximum(denom, 1e-300), 0.0)
        s = np.where(own_size > 1, s, 0.0)
        scores[start:stop] = s
    return float(scores.mean())


def evaluate(table: MixedTable, y_pred, y_true=None, subsample_size: int = 5000, seed: int = 0) -> dict:
    """Metrics report; external metrics only when ground truth is given."""
    y_pred = np.asarray(y_pred)
    report = {
        "n": int(y_pred.size),
        "K_pred": int(np.unique(y_pred).size),
        "swc_subsample": int(min(subsample_size, table.n)),
    }
    try:
        report["swc"] = swc_gower(table, y_pred, subsample_size, seed)
    except DataError:
        report["swc"] = None
    if y_true is not None:
        report["K_true"] = int(np.unique(np.asarray(y_true)).size)
        report["ari"] = ari(y_pred, y_true)
        report["nmi"] = nmi(y_pred, y_true)
        report["purity"] = purity(y_pred, y_true)
        report["acc"] = acc_hungarian(y_pred, y_true)
    return report
