from typing import Sequence

import numpy as np

METRICS = ("accuracy", "f1")


def _as_label_arrays(predictions: Sequence[int], labels: Sequence[int]):
    predictions = np.asarray(predictions, dtype=np.int64).reshape(-1)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if predictions.size == 0:
        raise ValueError("quality needs at least one prediction")
    if predictions.shape != labels.shape:
        raise ValueError(f"{predictions.size} prediction(s) but {labels.size} label(s)")
    return predictions, labels


def accuracy(predictions: Sequence[int], labels: Sequence[int]) -> float:
    predictions, labels = _as_label_arrays(predictions, labels)
    return float(np.mean(predictions == labels))


def binary_f1(predictions: Sequence[int], labels: Sequence[int]) -> float:
    """
    F1 on the positive class (label 1). A precision or recall whose
    denominator is zero counts as 0, so predicting no positives gives F1 = 0.
    """
    predictions, labels = _as_label_arrays(predictions, labels)
    outside = set(np.unique(np.concatenate([predictions, labels])).tolist()) - {0, 1}
    if outside:
        raise ValueError(f"binary F1 needs labels in {{0, 1}}, found {sorted(outside)}")

    true_positive = int(np.sum((predictions == 1) & (labels == 1)))
    predicted_positive = int(np.sum(predictions == 1))
    actual_positive = int(np.sum(labels == 1))
    precision = true_positive / predicted_positive if predicted_positive else 0.0
    recall = true_positive / actual_positive if actual_positive else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def quality(predictions: Sequence[int], labels: Sequence[int], metric: str = "accuracy") -> float:
    metric = metric.lower()
    if metric in ("f1", "binary_f1"):
        return binary_f1(predictions, labels)
    if metric == "accuracy":
        return accuracy(predictions, labels)
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
