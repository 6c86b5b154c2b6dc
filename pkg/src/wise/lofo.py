"""Leave-one-feature-out weight sensing.

Every column becomes one supervised task: predict it from the remaining
columns with a random forest.  Each tree of that forest is a candidate
view, scored by held-out quality and described by its global attribution
vector.  A quality-diversity greedy picks m trees per task whose
attribution patterns disagree, and each pick is completed into a simplex
weight vector: the attribution mass scaled by the tree's quality, with
the remaining 1-q kept on the target column itself.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._rng import derive_seed
from .data_model import MixedTable, design_matrix
from .errors import ConfigError, DataError
from .forest import ForestModel, ForestParams, train_forest
from .treeshap import aggregate_global

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TreeCandidate:
    uid: int
    quality: float
    s: np.ndarray  # non-negative attribution over the model's inputs


@dataclass(frozen=True)
class QdParams:
    m: int = 3
    lam: float = 0.5

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if not (0.0 <= self.lam <= 1.0):
            raise ConfigError("lambda must lie in [0,1]")


@dataclass(frozen=True)
class FeatureWeightVector:
    w: np.ndarray
    target: int
    tree: int
    quality: float
    rank: int


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """1 - cos(u, v); a zero vector is maximally diverse (similarity 0)."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 1.0
    return 1.0 - float(np.dot(u, v)) / (nu * nv)


def qd_objective(selected: list[TreeCandidate], lam: float) -> float:
    """Mean quality blended with mean pairwise attribution distance."""
    k = len(selected)
    if k == 0:
        raise ConfigError("objective undefined for an empty selection")
    quality = lam * sum(c.quality for c in selected) / k
    if k == 1:
        return quality
    pair_sum = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            pair_sum += cosine_distance(selected[i].s, selected[j].s)
    return quality + (1.0 - lam) * 2.0 / (k * (k - 1)) * pair_sum


def marginal_gain(
    candidate: TreeCandidate,
    selected: list[TreeCandidate],
    quality_sum: float,
    pair_sum: float,
    lam: float,
) -> float:
    """J(S + r) - J(S) in O(|S|) from the cached sums Q(S) and P(S)."""
    k = len(selected)
    if k == 0:
        raise ConfigError("gain needs a non-empty selection")
    added = sum(cosine_distance(candidate.s, c.s) for c in selected)
    new_obj = lam * (quality_sum + candidate.quality) / (k + 1)
    new_obj += (1.0 - lam) * 2.0 / (k * (k + 1)) * (pair_sum + added)
    old_obj = lam * quality_sum / k
    if k > 1:
        old_obj += (1.0 - lam) * 2.0 / (k * (k - 1)) * pair_sum
    return new_obj - old_obj


def greedy_select(candidates: list[TreeCandidate], params: QdParams) -> list[TreeCandidate]:
    """Seed with the best quality, then add the largest marginal gain.

    All ties break toward the lowest candidate id, so selection is
    deterministic for a fixed forest.
    """
    if params.m > len(candidates):
        raise ConfigError(f"cannot select m={params.m} from {len(candidates)} candidates")
    order = sorted(range(len(candidates)), key=lambda i: (-candidates[i].quality, candidates[i].uid))
    selected = [candidates[order[0]]]
    chosen_ids = {selected[0].uid}
    quality_sum = selected[0].quality
    pair_sum = 0.0
    scan = sorted(range(len(candidates)), key=lambda i: candidates[i].uid)
    while len(selected) < params.m:
        best_i, best_gain, best_added = None, -np.inf, 0.0
        for i in scan:
            cand = candidates[i]
            if cand.uid in chosen_ids:
                continue
            gain = marginal_gain(cand, selected, quality_sum, pair_sum, params.lam)
            if gain > best_gain:
                added = sum(cosine_distance(cand.s, c.s) for c in selected)
                best_i, best_gain, best_added = i, gain, added
        cand = candidates[best_i]
        selected.append(cand)
        chosen_ids.add(cand.uid)
        quality_sum += cand.quality
        pair_sum += best_added
    return selected


def complete_weight(
    candidate: TreeCandidate, target: int, d: int, input_columns: np.ndarray | None = None
) -> np.ndarray:
    """Distribute quality q over the inputs by attribution share; keep 1-q on the target.

    A zero attribution vector gives no evidence to distribute, so the
    whole unit mass stays on the target column.
    """
    if input_columns is None:
        input_columns = np.array([k for k in range(d) if k != target])
    w = np.zeros(d)
    total = float(candidate.s.sum())
    if total > 0.0:
        w[input_columns] = candidate.quality * candidate.s / total
        w[target] = 1.0 - candidate.quality
    else:
        w[target] = 1.0
    return w


def candidates_from_forest(
    model: ForestModel,
    X_inputs: np.ndarray,
    seed: int,
    explain_cap: int = 256,
    background_size: int = 64,
) -> list[TreeCandidate]:
    """Score every tree of a LOFO forest: held-out quality + global attribution."""
    out = []
    for u, fit in enumerate(model.trees):
        explain = fit.heldout_rows
        if explain.size == 0:
            # degenerate train_sample_frac=1 case: explain on the training rows
            log.warning("tree %d has no held-out rows; explaining on training rows", u)
            explain = fit.train_rows
        rng = np.random.default_rng(derive_seed(seed, "explain", u))
        if explain.size > explain_cap:
            explain = np.sort(rng.choice(explain, size=explain_cap, replace=False))
        bg_size = min(background_size, fit.train_rows.size)
        background = np.sort(rng.choice(fit.train_rows, size=bg_size, replace=False))
        output_index = fit.majority_class if model.task == "classification" else None
        agg = aggregate_global(fit.root, X_inputs[explain], X_inputs[background], output_index)
        out.append(TreeCandidate(uid=u, quality=fit.quality, s=agg.s))
    return out


def _sense_one(args):
    table, target, forest_params, qd_params, explain_cap, background_size = args
    seed_j = derive_seed(forest_params.seed, "lofo", target)
    params_j = ForestParams(
        T=forest_params.T,
        max_depth=forest_params.max_depth,
        min_samples_leaf=forest_params.min_samples_leaf,
        train_sample_frac=forest_params.train_sample_frac,
        features_per_split=forest_params.features_per_split,
        seed=seed_j,
    )
    model = train_forest(table, target, params_j)
    X_all, _ = design_matrix(table)
    X_inputs = X_all[:, model.input_columns]
    cands = candidates_from_forest(model, X_inputs, seed_j, explain_cap, background_size)
    picked = greedy_select(cands, qd_params)
    views = []
    for rank, cand in enumerate(picked):
        w = complete_weight(cand, target, table.d, model.input_columns)
        views.append(
            FeatureWeightVector(w=w, target=target, tree=cand.uid, quality=cand.quality, rank=rank)
        )
    return views


def sense_all(
    table: MixedTable,
    forest_params: ForestParams,
    qd_params: QdParams,
    explain_cap: int = 256,
    background_size: int = 64,
    workers: int = 1,
) -> list[FeatureWeightVector]:
    """All R = d*m weighted views, ordered by (target column, greedy rank).

    Targets are independent tasks; the per-target seed is derived from
    the master seed and the column index, so the result is identical for
    any worker count.
    """
    if table.d < 2:
        raise DataError("weight sensing needs at least two columns")
    tasks = [
        (table, j, forest_params, qd_params, explain_cap, background_size)
        for j in range(table.d)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_target = list(pool.map(_sense_one, tasks))
    else:
        per_target = [_sense_one(t) for t in tasks]
    views = [v for group in per_target for v in group]
    for view in views:
        total = float(view.w.sum())
        if np.any(view.w < 0) or abs(total - 1.0) > 1e-12:
            raise DataError(f"view for target {view.target} left the simplex (sum {total})")
    return views


def views_matrix(views: list[FeatureWeightVector]) -> np.ndarray:
    return np.stack([v.w for v in views])
