"""Hot numeric kernels over int64 timestamp arrays.

Auditing a dataset means scanning tens of millions of commit timestamps, so
the inner loops live here as array kernels. Each kernel has a numba
``@njit`` implementation and a pure-numpy one; the active backend is chosen
at import time from the ``CHRONOLINT_KERNELS`` environment variable:

    auto   use numba when importable, else numpy (default)
    numba  require numba, fail loudly if missing
    numpy  force the pure-numpy path

``benchmarks/bench_kernels.py`` compares the two backends.
"""

import os

import numpy as np

_BACKEND = os.environ.get("CHRONOLINT_KERNELS", "auto").strip().lower()
if _BACKEND not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"CHRONOLINT_KERNELS={_BACKEND!r}: expected auto, numba or numpy"
    )

njit = None
if _BACKEND in ("auto", "numba"):
    try:
        from numba import njit
    except ImportError:
        if _BACKEND == "numba":
            raise
        njit = None

USING_NUMBA = njit is not None
BACKEND = "numba" if USING_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def linear_out_of_order_mask_numpy(epochs, merge_mask, exclude_merges):
    """Flag positions whose timestamp is strictly below the previous one.

    ``epochs`` is the selected date per commit, in linearized order. With
    ``exclude_merges`` set, a position is not flagged when it or its
    predecessor is a merge-like commit. Position 0 is never flagged; the
    predecessor always advances regardless of flagging.
    """
    n = epochs.shape[0]
    flags = np.zeros(n, dtype=np.bool_)
    if n < 2:
        return flags
    drop = epochs[1:] < epochs[:-1]
    if exclude_merges:
        drop &= ~(merge_mask[1:] | merge_mask[:-1])
    flags[1:] = drop
    return flags


def max_parent_delta_numpy(child_idx, deltas, n_nodes):
    """Per child node, the largest positive (parent - child) delta.

    ``child_idx``/``deltas`` are parallel per-edge arrays. Nodes with no
    positive-delta edge get 0.
    """
    out = np.zeros(n_nodes, dtype=np.int64)
    pos = deltas > 0
    np.maximum.at(out, child_idx[pos], deltas[pos])
    return out


def bucket_counts_numpy(values, bounds):
    """Count values into buckets; a value lands in the first bucket whose
    upper bound it does not exceed. ``bounds`` is sorted ascending and the
    last bucket is unbounded (bucket count = len(bounds) + 1)."""
    idx = np.searchsorted(bounds, values, side="left")
    return np.bincount(idx, minlength=bounds.shape[0] + 1).astype(np.int64)


def changeset_breaks_numpy(author_codes, epochs, window):
    """Start-of-changeset mask over per-file changes sorted by
    (author, timestamp): a new changeset starts on an author switch or when
    the gap to the previous change exceeds ``window`` seconds."""
    n = epochs.shape[0]
    breaks = np.zeros(n, dtype=np.bool_)
    if n == 0:
        return breaks
    breaks[0] = True
    breaks[1:] = (author_codes[1:] != author_codes[:-1]) | (
        epochs[1:] - epochs[:-1] > window
    )
    return breaks


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if USING_NUMBA:

    @njit(cache=True)
    def linear_out_of_order_mask_numba(epochs, merge_mask, exclude_merges):
        n = epochs.shape[0]
        flags = np.zeros(n, dtype=np.bool_)
        for i in range(1, n):
            if epochs[i] < epochs[i - 1]:
                if exclude_merges and (merge_mask[i] or merge_mask[i - 1]):
                    continue
                flags[i] = True
        return flags

    @njit(cache=True)
    def max_parent_delta_numba(child_idx, deltas, n_nodes):
        out = np.zeros(n_nodes, dtype=np.int64)
        for e in range(child_idx.shape[0]):
            d = deltas[e]
            if d > 0 and d > out[child_idx[e]]:
                out[child_idx[e]] = d
        return out

    @njit(cache=True)
    def bucket_counts_numba(values, bounds):
        nb = bounds.shape[0]
        out = np.zeros(nb + 1, dtype=np.int64)
        for i in range(values.shape[0]):
            v = values[i]
            j = 0
            while j < nb and v > bounds[j]:
                j += 1
            out[j] += 1
        return out

    @njit(cache=True)
    def changeset_breaks_numba(author_codes, epochs, window):
        n = epochs.shape[0]
        breaks = np.zeros(n, dtype=np.bool_)
        if n == 0:
            return breaks
        breaks[0] = True
        for i in range(1, n):
            breaks[i] = (author_codes[i] != author_codes[i - 1]) or (
                epochs[i] - epochs[i - 1] > window
            )
        return breaks

    linear_out_of_order_mask = linear_out_of_order_mask_numba
    max_parent_delta = max_parent_delta_numba
    bucket_counts = bucket_counts_numba
    changeset_breaks = changeset_breaks_numba
else:
    linear_out_of_order_mask = linear_out_of_order_mask_numpy
    max_parent_delta = max_parent_delta_numpy
    bucket_counts = bucket_counts_numpy
    changeset_breaks = changeset_breaks_numpy
