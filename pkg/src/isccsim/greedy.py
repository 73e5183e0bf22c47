"""Sensing-centric greedy sub-band allocation.

Used both as the alternating loop's warm start and as the bound generator
for the branch-and-bound search. Seeds the sub-bands with the vehicles that
interfere most with each other, then places each remaining vehicle on the
band where it induces the least interference.
"""

from __future__ import annotations

import numpy as np

from .config import SystemConfig
from .metrics import Allocation
from .scenario import ChannelSet


def interference_matrix(powers: np.ndarray, channels: ChannelSet) -> np.ndarray:
    """Pairwise metric I[i, j] = p_i * mean_l |g_{i,j}^l|^2, diagonal zero.

    Averaged over sub-bands since the metric is consumed before any
    assignment exists.
    """
    powers = np.asarray(powers, dtype=float)
    if (powers < 0).any():
        raise ValueError("powers must be nonnegative")
    gain = np.mean(np.abs(channels.cross) ** 2, axis=2)
    metric = powers[:, None] * gain
    np.fill_diagonal(metric, 0.0)
    return metric


def greedy_allocate(metric: np.ndarray, config: SystemConfig) -> Allocation:
    """Greedy max-min sensing allocation; ties always break to lowest index."""
    k_tot = metric.shape[0]
    n_bands = config.num_subbands
    if n_bands > k_tot:
        raise ValueError(f"need at least as many vehicles as sub-bands "
                         f"(K={k_tot}, L={n_bands})")
    bands = np.full(k_tot, -1, dtype=int)
    if n_bands == 1:
        bands[:] = 0
        return Allocation.from_bands(bands, n_bands)

    sym = metric + metric.T
    # seed: the pair with the strongest mutual interference
    pair_scores = np.triu(sym, 1)
    if pair_scores.max() > 0:
        i0, j0 = np.unravel_index(np.argmax(pair_scores), pair_scores.shape)
    else:
        i0, j0 = 0, 1  # degenerate all-zero metric
    selected = [int(i0), int(j0)]
    bands[i0], bands[j0] = 0, 1

    # grow to L vehicles by total mutual interference with the selected set
    while len(selected) < n_bands:
        scores = sym[:, selected].sum(axis=1)
        scores[selected] = -np.inf
        nxt = int(np.argmax(scores))
        bands[nxt] = len(selected)
        selected.append(nxt)

    # place the rest: strongest spread between average and best band first
    unassigned = [k for k in range(k_tot) if bands[k] < 0]
    while unassigned:
        per_band = np.zeros((len(unassigned), n_bands))
        for row, k in enumerate(unassigned):
            for l in range(n_bands):
                members = np.flatnonzero(bands == l)
                per_band[row, l] = metric[k, members].sum()
        totals = per_band.sum(axis=1)
        best_band_cost = per_band.min(axis=1)
        scores = (totals - best_band_cost) / (n_bands - 1)
        row = int(np.argmax(scores))
        k = unassigned[row]
        bands[k] = int(np.argmin(per_band[row]))
        unassigned.remove(k)
    return Allocation.from_bands(bands, n_bands)
