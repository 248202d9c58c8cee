"""Deterministic row partitions keyed to row identifiers."""

import hashlib

import numpy as np


def row_hashes(row_ids, seed: int, salt: str = "fold") -> np.ndarray:
    out = np.empty(len(row_ids), dtype=np.uint64)
    for i, rid in enumerate(row_ids):
        digest = hashlib.blake2b(f"{salt}|{seed}|{rid}".encode(), digest_size=8).digest()
        out[i] = int.from_bytes(digest, "little")
    return out


def hash_order(row_ids, seed: int, salt: str = "fold") -> np.ndarray:
    """Row positions sorted by hash (ties broken by the id itself)."""
    h = row_hashes(row_ids, seed, salt)
    ids = np.asarray([str(r) for r in row_ids], dtype=object)
    return np.lexsort((ids, h))


def fold_assignment(row_ids, k: int, seed: int, salt: str = "fold") -> np.ndarray:
    """Fold index in ``0..k-1`` for every row.

    Rows are ranked by a keyed hash of their id and dealt round-robin, so fold
    sizes differ by at most one and a row keeps its fold under any reordering.
    """
    n = len(row_ids)
    if k < 2:
        raise ValueError("need at least 2 folds")
    if k > n:
        raise ValueError(f"{k} folds requested for {n} rows")
    folds = np.empty(n, dtype=np.int64)
    folds[hash_order(row_ids, seed, salt)] = np.arange(n) % k
    return folds


def holdout_mask(row_ids, fraction: float, seed: int) -> np.ndarray:
    """Boolean mask selecting ``round(fraction * n)`` rows by keyed hash."""
    n = len(row_ids)
    m = int(round(fraction * n))
    mask = np.zeros(n, dtype=bool)
    mask[hash_order(row_ids, seed, salt="holdout")[:m]] = True
    return mask


def merge_degenerate(folds, y, log=None) -> np.ndarray:
    """Fold labels after merging any fold whose training part has one class into its neighbor.

    Merging stops at two folds; the caller's model then decides how to treat
    a single-class training set.
    """
    folds = np.asarray(folds).copy()
    y = np.asarray(y)
    while True:
        ids = np.unique(folds)
        if ids.size <= 2:
            return folds
        for pos, k in enumerate(ids):
            train = y[folds != k]
            if train.min() == train.max():
                neighbor = ids[(pos + 1) % ids.size]
                if log is not None:
                    log.warning("fold %d has single-class training labels; merged into fold %d",
                                k, neighbor)
                folds[folds == k] = neighbor
                break
        else:
            return folds
