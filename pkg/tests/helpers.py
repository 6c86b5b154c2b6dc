"""Shared builders, oracles, and combinatorial generators for the test suite."""

from __future__ import annotations

from itertools import combinations
from math import factorial

import numpy as np

from wise.data_model import ColumnSchema, table_from_raw
from wise.forest import ForestParams, predict_tree, train_tree


def numeric_table(values):
    """Single numeric column table."""
    schema = [ColumnSchema("x", "numeric")]
    return table_from_raw(schema, [(float(v),) for v in values])


def random_mixed_table(rng, n=80, numeric=2, nominal=2, levels=3):
    """Random table with numeric columns in [0,1] and nominal columns."""
    schema = [ColumnSchema(f"num_{a}", "numeric") for a in range(numeric)]
    schema += [ColumnSchema(f"cat_{a}", "nominal") for a in range(nominal)]
    cols = [rng.random(n) for _ in range(numeric)]
    cols += [
        np.array([f"v{t}" for t in rng.integers(0, levels, n)], dtype=object)
        for _ in range(nominal)
    ]
    rows = [tuple(col[i] for col in cols) for i in range(n)]
    return table_from_raw(schema, rows)


def random_sparse_binary(rng, n, p, min_nnz=3, max_nnz=10):
    """Random binary CSR matrix with a few ones per row."""
    from scipy import sparse

    indptr = [0]
    indices = []
    for _ in range(n):
        nnz = int(rng.integers(min_nnz, max_nnz + 1))
        indices.extend(sorted(rng.choice(p, size=nnz, replace=False).tolist()))
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (np.ones(len(indices), dtype=np.uint8), indices, indptr), shape=(n, p)
    )


def shap_oracle(root, x, background, output_index=None):
    """Exhaustive interventional Shapley: enumerate every coalition."""
    d = x.size
    cache = {}

    def value(S):
        if S not in cache:
            Z = background.copy()
            if S:
                Z[:, list(S)] = x[list(S)]
            pred = predict_tree(root, Z)
            if pred.ndim == 2:
                pred = pred[:, output_index]
            cache[S] = float(pred.mean())
        return cache[S]

    phi = np.zeros(d)
    for f in range(d):
        others = [g for g in range(d) if g != f]
        for r in range(d):
            for S in combinations(others, r):
                w = factorial(len(S)) * factorial(d - len(S) - 1) / factorial(d)
                phi[f] += w * (value(tuple(sorted(S + (f,)))) - value(S))
    return phi, value(())


def random_tree(rng, d, task="regression", n_classes=0, depth=3, nominal_frac=0.3):
    """Fit one small tree on random data; returns (root, X, is_nominal)."""
    n = 40
    is_nominal = rng.random(d) < nominal_frac
    X = rng.random((n, d))
    X[:, is_nominal] = rng.integers(0, 3, (n, int(is_nominal.sum()))).astype(float)
    if task == "classification":
        y = rng.integers(0, n_classes, n).astype(float)
    else:
        y = rng.random(n) + X[:, 0]
    params = ForestParams(T=1, max_depth=depth, min_samples_leaf=1,
                          train_sample_frac=1.0, features_per_split=1.0, seed=0)
    root = train_tree(X, y, params, rng, task, is_nominal, n_classes)
    return root, X, is_nominal


def set_partitions(n):
    """All set partitions of range(n) as canonical label tuples.

    Labels form restricted growth strings: a[0] = 0 and each a[i] is at
    most one above the running maximum, so each partition appears once.
    """
    out = []

    def grow(prefix, top):
        if len(prefix) == n:
            out.append(tuple(prefix))
            return
        for label in range(top + 2):
            prefix.append(label)
            grow(prefix, max(top, label))
            prefix.pop()

    grow([], -1)
    return out
