"""Pure numpy leaf-wise tree grower (fallback for the compiled kernel).

Both implementations must perform the same floating point operations in the
same order so that trees are bit-identical:

* node totals G, H are sequential sums over the node's samples in the order
  of feature 0;
* left sums are sequential prefix sums along each feature's sorted order;
* gain = 0.5 * (GL*GL/(HL+lam) + GR*GR/(HR+lam) - G*G/(H+lam)) with
  GR = G - GL and HR = H - HL;
* the best candidate is the first maximum scanning features in index order
  and positions in ascending order, accepted only if gain > 0.
"""

import numpy as np

BACKEND = "python"


def midpoint(a, b):
    t = (a + b) / 2.0
    # adjacent floats: the midpoint may round up onto b
    return a if t >= b else t


class _Grower:
    def __init__(self, X, order, g, h, min_samples_leaf, lambda_l2):
        self.X = X
        self.order = order
        self.g = g
        self.h = h
        self.min_leaf = min_samples_leaf
        self.lam = lambda_l2
        self.cols = np.arange(X.shape[1])[:, None]

    def totals(self, start, end):
        seg = self.order[0, start:end]
        G = np.cumsum(self.g[seg])[-1]
        H = np.cumsum(self.h[seg])[-1]
        return float(G), float(H)

    def best_split(self, start, end, G, H):
        """Return (gain, feature, threshold, n_left) or None."""
        m = end - start
        ml = self.min_leaf
        if m < 2 * ml:
            return None
        seg = self.order[:, start:end]  # (F, m)
        xs = self.X[seg, self.cols]
        GL = np.cumsum(self.g[seg], axis=1)[:, :-1]
        HL = np.cumsum(self.h[seg], axis=1)[:, :-1]
        lam = self.lam
        GR = G - GL
        HR = H - HL
        parent = G * G / (H + lam)
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - parent)
        valid = xs[:, :-1] < xs[:, 1:]
        # position i puts i+1 samples on the left
        valid[:, : ml - 1] = False
        valid[:, m - ml:] = False
        gain = np.where(valid & ~np.isnan(gain), gain, -np.inf)
        k = int(np.argmax(gain))
        best = gain.flat[k]
        if not best > 0:
            return None
        f, i = divmod(k, m - 1)
        return float(best), f, midpoint(float(xs[f, i]), float(xs[f, i + 1])), i + 1

    def partition(self, start, end, feature, threshold):
        seg = self.order[:, start:end]
        goes_left = self.X[seg, feature] <= threshold
        n_left = int(goes_left[0].sum())
        F, m = seg.shape
        left = seg[goes_left].reshape(F, n_left)
        right = seg[~goes_left].reshape(F, m - n_left)
        self.order[:, start:start + n_left] = left
        self.order[:, start + n_left:end] = right
        return n_left


def grow_tree(X, order, g, h, max_leaves, max_depth, min_samples_leaf, lambda_l2):
    """Grow one regression tree on gradients ``g`` and hessians ``h``.

    ``order`` is an (n_features, n_samples) array of per-feature ascending
    sample orders; it is permuted in place. ``max_depth < 0`` means no limit.
    Returns a dict of node arrays plus ``leaf_of`` (leaf node per sample).
    """
    n = X.shape[0]
    gr = _Grower(X, order, g, h, min_samples_leaf, lambda_l2)
    cap = 2 * max_leaves - 1
    feature = np.full(cap, -1, dtype=np.intp)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.intp)
    right = np.full(cap, -1, dtype=np.intp)
    value = np.zeros(cap)
    gain = np.zeros(cap)
    count = np.zeros(cap, dtype=np.intp)

    start = {0: 0}
    end = {0: n}
    depth = {0: 0}
    G, H = gr.totals(0, n)
    sums = {0: (G, H)}
    candidates = {}

    def evaluate(node):
        G, H = sums[node]
        denom = H + lambda_l2
        value[node] = -(G / denom) if denom != 0 else 0.0
        count[node] = end[node] - start[node]
        if max_depth >= 0 and depth[node] >= max_depth:
            return
        split = gr.best_split(start[node], end[node], G, H)
        if split is not None:
            candidates[node] = split

    evaluate(0)
    n_nodes = 1
    n_leaves = 1
    while n_leaves < max_leaves and candidates:
        node = None
        for nd in sorted(candidates):
            if node is None or candidates[nd][0] > candidates[node][0]:
                node = nd
        best_gain, f, thr, n_left = candidates.pop(node)
        s, e = start[node], end[node]
        got = gr.partition(s, e, f, thr)
        assert got == n_left
        feature[node] = f
        threshold[node] = thr
        gain[node] = best_gain
        for child, (cs, ce) in ((n_nodes, (s, s + n_left)), (n_nodes + 1, (s + n_left, e))):
            start[child], end[child] = cs, ce
            depth[child] = depth[node] + 1
            sums[child] = gr.totals(cs, ce)
        left[node], right[node] = n_nodes, n_nodes + 1
        evaluate(n_nodes)
        evaluate(n_nodes + 1)
        n_nodes += 2
        n_leaves += 1

    leaf_of = np.empty(n, dtype=np.intp)
    for node in range(n_nodes):
        if feature[node] < 0:
            leaf_of[order[0, start[node]:end[node]]] = node
    return {
        "feature": feature[:n_nodes],
        "threshold": threshold[:n_nodes],
        "left": left[:n_nodes],
        "right": right[:n_nodes],
        "value": value[:n_nodes],
        "gain": gain[:n_nodes],
        "count": count[:n_nodes],
        "leaf_of": leaf_of,
    }
