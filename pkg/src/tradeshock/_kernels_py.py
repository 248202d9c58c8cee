"""Pure-Python/numpy implementation of the hot kernels.

Mirrors ``_kernels.pyx`` operation for operation (same accumulation order,
same tie-breaking, same random stream) so that both backends grow identical
trees and converge to the same coordinate-descent solutions.
"""

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_ZERO_SLACK = 1e-10


class _SplitMix64:
    def __init__(self, seed):
        self.state = int(seed) & _MASK64

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)


def cd_gram(G, c, beta, lam, pf, max_sweeps, tol):
    """Cyclic coordinate descent on an L1-penalized quadratic, by covariance updates.

    Minimises ``0.5 * b'Gb - c'b + lam * sum(pf * |b|)`` in place of ``beta``.
    Coordinates with ``pf == 0`` (the intercept) are unpenalized. A full sweep
    over every coordinate alternates with sweeps restricted to the nonzero
    ones until a full sweep moves no coordinate by more than ``tol`` in
    ``G[j, j] * change**2``.

    Returns ``(sweeps, converged)``.
    """
    m = beta.shape[0]
    q = G @ beta
    sweeps = 0
    converged = False
    full = True
    while sweeps < max_sweeps:
        sweeps += 1
        max_change = 0.0
        for j in range(m):
            if not full and beta[j] == 0.0 and pf[j] != 0.0:
                continue
            a = G[j, j]
            if a <= 0.0:
                continue
            old = beta[j]
            g = c[j] - q[j] + a * old
            thr = lam * pf[j]
            ag = abs(g)
            if ag <= thr * (1.0 + _ZERO_SLACK):
                new = 0.0
            else:
                new = np.copysign(ag - thr, g) / a
            d = new - old
            if d != 0.0:
                q += d * G[:, j]
                beta[j] = new
                change = a * d * d
                if change > max_change:
                    max_change = change
        if max_change < tol:
            if full:
                converged = True
                break
            full = True
        else:
            full = False
    return sweeps, converged


def build_tree(Xb, n_bins, t, w, rows, max_depth, min_leaf_weight, max_features, seed):
    """Grow a binary tree on binned features by weighted squared-error splits.

    For 0/1 targets the weighted squared error equals half the weighted Gini
    impurity, so the same routine serves classification and regression.
    A row goes left when ``Xb[row, feature] <= bin``.

    Returns ``(feature, bin, left, right, value, weight)`` arrays; leaves have
    ``feature == -1``.
    """
    n_features = Xb.shape[1]
    rows = np.array(rows, dtype=np.int64, copy=True)
    rng = _SplitMix64(seed)
    m = n_features if max_features <= 0 or max_features >= n_features else int(max_features)

    feature, split_bin, left, right, value, weight = [], [], [], [], [], []

    def new_node():
        feature.append(-1)
        split_bin.append(-1)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        weight.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, 0, rows.shape[0], 0)]
    while stack:
        node, start, end, depth = stack.pop()
        idx = rows[start:end]
        wi = w[idx]
        ti = t[idx]
        W = 0.0
        S = 0.0
        Q = 0.0
        for a, b in zip(wi.tolist(), ti.tolist()):
            W += a
            S += a * b
            Q += a * b * b
        value[node] = S / W if W > 0.0 else 0.0
        weight[node] = W
        if W <= 0.0:
            continue
        sse = Q - S * S / W
        if depth >= max_depth or W < 2.0 * min_leaf_weight or sse <= 1e-12 * W:
            continue

        if m < n_features:
            perm = list(range(n_features))
            for i in range(m):
                k = i + int(rng.next() % (n_features - i))
                perm[i], perm[k] = perm[k], perm[i]
            candidates = perm[:m]
        else:
            candidates = range(n_features)

        parent = S * S / W
        best_gain = 1e-14 * W
        best_f = -1
        best_b = -1
        wt = wi * ti
        for f in candidates:
            nb = int(n_bins[f])
            if nb < 2:
                continue
            codes = Xb[idx, f]
            hw = np.bincount(codes, weights=wi, minlength=nb)
            hs = np.bincount(codes, weights=wt, minlength=nb)
            WL = np.cumsum(hw[: nb - 1])
            SL = np.cumsum(hs[: nb - 1])
            WR = W - WL
            SR = S - SL
            ok = (WL >= min_leaf_weight) & (WR >= min_leaf_weight)
            if not ok.any():
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                gain = SL * SL / WL + SR * SR / WR - parent
            gain = np.where(ok, gain, -np.inf)
            b = int(np.argmax(gain))
            if gain[b] > best_gain:
                best_gain = float(gain[b])
                best_f = int(f)
                best_b = b
        if best_f < 0:
            continue

        go_left = Xb[idx, best_f] <= best_b
        n_left = int(go_left.sum())
        rows[start:end] = np.concatenate([idx[go_left], idx[~go_left]])
        feature[node] = best_f
        split_bin[node] = best_b
        lc = new_node()
        rc = new_node()
        left[node] = lc
        right[node] = rc
        stack.append((rc, start + n_left, end, depth + 1))
        stack.append((lc, start, start + n_left, depth + 1))

    return (
        np.asarray(feature, dtype=np.int64),
        np.asarray(split_bin, dtype=np.int64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=np.float64),
        np.asarray(weight, dtype=np.float64),
    )


def tree_apply(X, feature, threshold, left, right):
    """Leaf index reached by every row of ``X`` (goes left when ``x <= threshold``)."""
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    pending = np.flatnonzero(feature[node] >= 0)
    while pending.size:
        cur = node[pending]
        f = feature[cur]
        go_left = X[pending, f] <= threshold[cur]
        node[pending] = np.where(go_left, left[cur], right[cur])
        pending = pending[feature[node[pending]] >= 0]
    return node
