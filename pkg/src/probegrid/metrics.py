"""Quality metrics and Pareto bookkeeping for the evaluation harness."""

from __future__ import annotations

import math

import numpy as np

from .errors import DimensionMismatch


def psnr(reference: np.ndarray, test: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB over normalized [0,1] values.

    20*log10(1/sqrt(MSE)) with the MSE averaged over all pixels and
    channels; identical inputs report infinity.
    """
    reference = np.asarray(reference, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if reference.shape != test.shape:
        raise DimensionMismatch(
            f"image shapes differ: {reference.shape} vs {test.shape}")
    mse = float(np.mean((reference - test) ** 2))
    if mse == 0.0:
        return float("inf")
    return -10.0 * math.log10(mse)


def pareto_front(points):
    """Subset of points not dominated in (smaller size, higher PSNR).

    A point is dominated when another point is at least as small and at
    least as good, and strictly better in one of the two.  Accepts any
    objects with ``size_bytes`` and ``psnr_db`` attributes, or (size, psnr)
    pairs; returns them in ascending size order, ties included.
    """
    def key(p):
        if hasattr(p, "size_bytes"):
            return float(p.size_bytes), float(p.psnr_db)
        return float(p[0]), float(p[1])

    order = sorted(range(len(points)), key=lambda i: (key(points[i])[0],
                                                      -key(points[i])[1]))
    front = []
    best_psnr = -math.inf
    i = 0
    while i < len(order):
        size = key(points[order[i]])[0]
        group = []
        while i < len(order) and key(points[order[i]])[0] == size:
            group.append(order[i])
            i += 1
        group_best = max(key(points[g])[1] for g in group)
        if group_best > best_psnr:
            front.extend(g for g in group if key(points[g])[1] == group_best)
            best_psnr = group_best
    return [points[g] for g in front]
