"""Evaluation metrics."""

import numpy as np


def rmsge(manifold, predictions, truths):
    """Root-mean-square geodesic error ``sqrt(mean_i d(pred_i, truth_i)^2)``."""
    if len(predictions) != len(truths):
        raise ValueError(f"length mismatch: {len(predictions)} predictions vs {len(truths)} truths")
    if len(truths) == 0:
        raise ValueError("rmsge of an empty set")
    d2 = [manifold.dist(p, q) ** 2 for p, q in zip(predictions, truths)]
    return float(np.sqrt(np.mean(d2)))
