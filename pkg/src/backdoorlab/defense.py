"""Feature-space data-filtering defenses and their quality reporting.

Both defenses operate on per-sample features taken from the language side of
the model: the mean decoder hidden state over a sample's teacher-forced
output positions.  The spectral filter removes samples with extreme
projections onto the top singular direction of the centered feature matrix;
the Gram-statistics filter flags samples whose moment statistics leave
bounds calibrated on a verified-clean holdout.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ContractViolation
from .model import forward


@dataclass
class FeatureMatrix:
    rows: np.ndarray  # (n_samples, d)
    ids: list

    def __post_init__(self):
        if self.rows.shape[0] != len(self.ids):
            raise ContractViolation("feature rows and ids differ in length")
        if not np.all(np.isfinite(self.rows)):
            raise ContractViolation("non-finite feature values")


@dataclass
class SpectralResult:
    removed_ids: list
    degenerate: bool = False
    scores: Optional[np.ndarray] = None


@dataclass
class DefenseReport:
    method: str
    removed_ids: list
    precision: float
    recall: float
    precision_defined: bool
    post_filter_reports: dict = field(default_factory=dict)


def extract_features(params, corpus, ref_index=0):
    """Mean hidden state over the output positions of each sample's first
    reference (the poisoned reference for poisoned corpora)."""
    rows = []
    ids = []
    for sample in corpus:
        ref = sample.references[ref_index]
        _, hiddens, _ = forward(params, sample.image, sample.prompt, ref)
        rows.append(hiddens.mean(axis=0))
        ids.append(sample.id)
    return FeatureMatrix(rows=np.asarray(rows), ids=ids)


def spectral_filter(features, remove_fraction=0.15):
    """Remove the top fraction of samples by squared projection onto the top
    right-singular vector of the centered feature matrix."""
    if not 0.0 < remove_fraction < 0.5:
        raise ContractViolation("remove_fraction must lie in (0, 0.5)")
    rows = features.rows - features.rows.mean(axis=0, keepdims=True)
    if np.allclose(rows, 0.0):
        return SpectralResult(removed_ids=[], degenerate=True)
    _, _, vt = np.linalg.svd(rows, full_matrices=False)
    scores = (rows @ vt[0]) ** 2
    k = int(remove_fraction * len(features.ids))
    order = np.argsort(-scores, kind="stable")
    removed = [features.ids[i] for i in order[:k]]
    return SpectralResult(removed_ids=removed, degenerate=False, scores=scores)


def _gram_stats(rows, orders):
    """Per-sample upper-triangle Gram statistics for each feature power."""
    n, d = rows.shape
    iu = np.triu_indices(d)
    blocks = []
    for p in orders:
        fp = rows**p
        outer = np.einsum("ni,nj->nij", fp, fp)
        blocks.append(outer[:, iu[0], iu[1]])
    return np.concatenate(blocks, axis=1)


def beatrix_filter(features_train, features_clean_holdout, orders=(1, 2),
                   percentile=99.0):
    """Flag training samples whose Gram statistics deviate beyond anything
    seen on a verified-clean holdout.

    Per-coordinate bounds are the (100-p, p) percentiles of the holdout
    statistics; a sample's deviation is the sum of out-of-bounds excesses
    normalized by the bound magnitude.  The threshold is the maximum holdout
    deviation, so the holdout itself is never flagged.
    """
    if len(features_clean_holdout.ids) < 20:
        raise ContractViolation("clean holdout must have at least 20 samples")
    if not 90.0 < percentile < 100.0:
        raise ContractViolation("percentile must lie in (90, 100)")
    hold = _gram_stats(features_clean_holdout.rows, orders)
    train = _gram_stats(features_train.rows, orders)
    lo = np.percentile(hold, 100.0 - percentile, axis=0)
    hi = np.percentile(hold, percentile, axis=0)
    denom = np.maximum(np.abs(hi), np.abs(lo)) + 1e-12

    def deviations(stats):
        over = np.maximum(stats - hi, 0.0)
        under = np.maximum(lo - stats, 0.0)
        return ((over + under) / denom).sum(axis=1)

    threshold = deviations(hold).max()
    dev = deviations(train)
    removed = [features_train.ids[i] for i in np.nonzero(dev > threshold)[0]]
    return removed


def defense_report(method, removed_ids, corpus, post_filter_reports=None):
    """Precision/recall of poisoned-sample detection vs ground-truth flags."""
    removed = set(removed_ids)
    poisoned = {s.id for s in corpus if s.poisoned}
    tp = len(removed & poisoned)
    if removed:
        precision = tp / len(removed)
        defined = True
    else:
        precision = 0.0
        defined = False
    recall = tp / len(poisoned) if poisoned else 0.0
    return DefenseReport(
        method=method,
        removed_ids=sorted(removed),
        precision=precision,
        recall=recall,
        precision_defined=defined,
        post_filter_reports=post_filter_reports or {},
    )
