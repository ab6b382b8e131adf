"""Inner loops shared by the measure, model and head-map code.

Every kernel exists twice: ``<name>_numba`` (an ``@njit`` loop) and
``<name>_numpy`` (vectorised numpy).  The public ``<name>`` picks one
according to :data:`socialgaze._accel.USE_NUMBA`.  Both consume identical
inputs (random draws are made by the caller), so the two paths agree up to
floating point summation order.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# run-length encoding


@njit(cache=True)
def run_lengths_numba(binary):
    n = binary.shape[0]
    starts = np.empty(n, dtype=np.int64)
    lengths = np.empty(n, dtype=np.int64)
    k = 0
    i = 0
    while i < n:
        if binary[i]:
            j = i
            while j < n and binary[j]:
                j += 1
            starts[k] = i
            lengths[k] = j - i
            k += 1
            i = j
        else:
            i += 1
    return starts[:k].copy(), lengths[:k].copy()


def run_lengths_numpy(binary):
    b = np.asarray(binary, dtype=np.int8)
    if b.size == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    edges = np.diff(np.concatenate(([0], b, [0])))
    starts = np.flatnonzero(edges == 1).astype(np.int64)
    ends = np.flatnonzero(edges == -1).astype(np.int64)
    return starts, ends - starts


def run_lengths(binary):
    """Maximal runs of ``True`` as ``(starts, lengths)`` int64 arrays."""
    b = np.ascontiguousarray(binary, dtype=np.bool_)
    if USE_NUMBA:
        return run_lengths_numba(b)
    return run_lengths_numpy(b)


# ---------------------------------------------------------------------------
# regression trees
#
# A tree is five parallel arrays indexed by node id: split feature (-1 for a
# leaf), threshold, left child, right child and leaf value.  Nodes are
# numbered in creation order of a depth-first build (left child first), and
# row ``node`` of ``keys`` drives the random feature subset at that node.


def max_tree_nodes(n_samples, max_depth):
    cap = 2 * max(int(n_samples), 1) - 1
    if max_depth < 0 or max_depth >= 30:
        return cap
    return min(cap, 2 ** (max_depth + 1) - 1)


@njit(cache=True)
def _node_features_nb(keys_row, n_sub, p):
    if n_sub >= p:
        return np.arange(p)
    return np.argsort(keys_row, kind="mergesort")[:n_sub]


@njit(cache=True)
def build_tree_numba(X, y, sample, max_depth, min_leaf, n_sub, keys):
    m = sample.shape[0]
    p = X.shape[1]
    cap = keys.shape[0]
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    depth = np.zeros(cap, dtype=np.int64)
    lo = np.zeros(cap, dtype=np.int64)
    hi = np.zeros(cap, dtype=np.int64)

    idx = sample.copy()
    lo[0] = 0
    hi[0] = m
    n_nodes = 1
    stack = np.empty(cap, dtype=np.int64)
    stack[0] = 0
    top = 1
    xs = np.empty(m)
    ys = np.empty(m)
    while top > 0:
        top -= 1
        node = stack[top]
        a = lo[node]
        b = hi[node]
        cnt = b - a
        s = 0.0
        ss = 0.0
        for i in range(a, b):
            v = y[idx[i]]
            s += v
            ss += v * v
        value[node] = s / cnt
        if (max_depth >= 0 and depth[node] >= max_depth) or cnt < 2 * min_leaf:
            continue
        if n_nodes + 2 > cap:
            continue
        sse = ss - s * s / cnt
        if sse <= 1e-12 * (1.0 + ss):
            continue
        parent = s * s / cnt
        best = parent
        best_f = -1
        best_t = 0.0
        feats = _node_features_nb(keys[node], n_sub, p)
        for f in feats:
            for i in range(cnt):
                xs[i] = X[idx[a + i], f]
            order = np.argsort(xs[:cnt], kind="mergesort")
            for i in range(cnt):
                ys[i] = y[idx[a + order[i]]]
            sl = 0.0
            for i in range(1, cnt):
                sl += ys[i - 1]
                if i < min_leaf or cnt - i < min_leaf:
                    continue
                x0 = xs[order[i - 1]]
                x1 = xs[order[i]]
                if not x0 < x1:
                    continue
                sr = s - sl
                score = sl * sl / i + sr * sr / (cnt - i)
                if score > best:
                    best = score
                    best_f = f
                    t = 0.5 * (x0 + x1)
                    if not t < x1:
                        t = x0
                    best_t = t
        if best_f < 0:
            continue
        # stable partition of idx[a:b] on the chosen split
        tmp = idx[a:b].copy()
        k = a
        for i in range(cnt):
            if X[tmp[i], best_f] <= best_t:
                idx[k] = tmp[i]
                k += 1
        mid = k
        for i in range(cnt):
            if not X[tmp[i], best_f] <= best_t:
                idx[k] = tmp[i]
                k += 1
        feature[node] = best_f
        threshold[node] = best_t
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        lo[lnode] = a
        hi[lnode] = mid
        lo[rnode] = mid
        hi[rnode] = b
        depth[lnode] = depth[node] + 1
        depth[rnode] = depth[node] + 1
        stack[top] = rnode
        top += 1
        stack[top] = lnode
        top += 1
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(), value[:n_nodes].copy())


def build_tree_numpy(X, y, sample, max_depth, min_leaf, n_sub, keys):
    p = X.shape[1]
    cap = keys.shape[0]
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.asarray(sample, dtype=np.int64), 0)]
    while stack:
        node, rows, depth = stack.pop()
        yy = y[rows]
        cnt = rows.size
        s = yy.sum()
        ss = (yy * yy).sum()
        value[node] = s / cnt
        if (max_depth >= 0 and depth >= max_depth) or cnt < 2 * min_leaf:
            continue
        if len(feature) + 2 > cap:
            continue
        if ss - s * s / cnt <= 1e-12 * (1.0 + ss):
            continue
        feats = (np.arange(p) if n_sub >= p
                 else np.argsort(keys[node], kind="stable")[:n_sub])
        best, best_f, best_t = s * s / cnt, -1, 0.0
        sizes = np.arange(1, cnt)
        ok_size = (sizes >= min_leaf) & (cnt - sizes >= min_leaf)
        for f in feats:
            xv = X[rows, f]
            order = np.argsort(xv, kind="stable")
            xs = xv[order]
            sl = np.cumsum(yy[order])[:-1]
            sr = s - sl
            score = sl * sl / sizes + sr * sr / (cnt - sizes)
            valid = ok_size & (xs[:-1] < xs[1:])
            if not valid.any():
                continue
            score = np.where(valid, score, -np.inf)
            i = int(np.argmax(score))
            if score[i] > best:
                best = score[i]
                best_f = int(f)
                t = 0.5 * (xs[i] + xs[i + 1])
                best_t = t if t < xs[i + 1] else xs[i]
        if best_f < 0:
            continue
        go_left = X[rows, best_f] <= best_t
        feature[node] = best_f
        threshold[node] = best_t
        lnode = new_node()
        rnode = new_node()
        left[node] = lnode
        right[node] = rnode
        stack.append((rnode, rows[~go_left], depth + 1))
        stack.append((lnode, rows[go_left], depth + 1))
    return (np.array(feature, np.int64), np.array(threshold, float),
            np.array(left, np.int64), np.array(right, np.int64),
            np.array(value, float))


def build_tree(X, y, sample, max_depth, min_leaf, n_sub, keys):
    """Grow one CART regression tree (squared error) on ``X[sample]``."""
    args = (np.ascontiguousarray(X, dtype=np.float64),
            np.ascontiguousarray(y, dtype=np.float64),
            np.ascontiguousarray(sample, dtype=np.int64),
            int(max_depth), int(min_leaf), int(n_sub),
            np.ascontiguousarray(keys, dtype=np.float64))
    if USE_NUMBA:
        return build_tree_numba(*args)
    return build_tree_numpy(*args)


@njit(cache=True)
def tree_predict_numba(X, feature, threshold, left, right, value):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


def tree_predict_numpy(X, feature, threshold, left, right, value):
    node = np.zeros(X.shape[0], dtype=np.int64)
    rows = np.arange(X.shape[0])
    active = feature[node] >= 0
    while active.any():
        r = rows[active]
        nd = node[r]
        go_left = X[r, feature[nd]] <= threshold[nd]
        node[r] = np.where(go_left, left[nd], right[nd])
        active = feature[node] >= 0
    return value[node]


def tree_predict(X, tree):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if USE_NUMBA:
        return tree_predict_numba(X, *tree)
    return tree_predict_numpy(X, *tree)


# ---------------------------------------------------------------------------
# Lasso coordinate descent on centred data: min (1/2n)|y - Xb|^2 + lam |b|_1


@njit(cache=True)
def lasso_cd_numba(X, y, lam, beta, max_iter, tol):
    n, p = X.shape
    col_sq = np.zeros(p)
    for j in range(p):
        acc = 0.0
        for i in range(n):
            acc += X[i, j] * X[i, j]
        col_sq[j] = acc / n
    r = y.copy()
    for j in range(p):
        if beta[j] != 0.0:
            for i in range(n):
                r[i] -= X[i, j] * beta[j]
    objective = np.empty(max_iter + 1)
    rr = 0.0
    for i in range(n):
        rr += r[i] * r[i]
    l1 = 0.0
    for j in range(p):
        l1 += abs(beta[j])
    objective[0] = rr / (2.0 * n) + lam * l1
    it = 0
    while it < max_iter:
        delta = 0.0
        for j in range(p):
            if col_sq[j] <= 0.0:
                beta[j] = 0.0
                continue
            rho = 0.0
            for i in range(n):
                rho += X[i, j] * r[i]
            rho = rho / n + col_sq[j] * beta[j]
            if rho > lam:
                new = (rho - lam) / col_sq[j]
            elif rho < -lam:
                new = (rho + lam) / col_sq[j]
            else:
                new = 0.0
            d = new - beta[j]
            if d != 0.0:
                for i in range(n):
                    r[i] -= X[i, j] * d
                beta[j] = new
                step = abs(d) * np.sqrt(col_sq[j])
                if step > delta:
                    delta = step
        it += 1
        rr = 0.0
        for i in range(n):
            rr += r[i] * r[i]
        l1 = 0.0
        for j in range(p):
            l1 += abs(beta[j])
        objective[it] = rr / (2.0 * n) + lam * l1
        if delta <= tol:
            break
    return beta, objective[: it + 1].copy()


def lasso_cd_numpy(X, y, lam, beta, max_iter, tol):
    n, p = X.shape
    col_sq = (X * X).sum(axis=0) / n
    r = y - X @ beta
    objective = [r @ r / (2.0 * n) + lam * np.abs(beta).sum()]
    for _ in range(max_iter):
        delta = 0.0
        for j in range(p):
            if col_sq[j] <= 0.0:
                beta[j] = 0.0
                continue
            rho = X[:, j] @ r / n + col_sq[j] * beta[j]
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / col_sq[j]
            d = new - beta[j]
            if d != 0.0:
                r -= X[:, j] * d
                beta[j] = new
                delta = max(delta, abs(d) * np.sqrt(col_sq[j]))
        objective.append(r @ r / (2.0 * n) + lam * np.abs(beta).sum())
        if delta <= tol:
            break
    return beta, np.array(objective)


def lasso_cd(X, y, lam, beta=None, max_iter=10000, tol=1e-10):
    """Cyclic coordinate descent; returns ``(beta, objective_per_sweep)``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    beta = (np.zeros(X.shape[1]) if beta is None
            else np.array(beta, dtype=np.float64, copy=True))
    if USE_NUMBA:
        return lasso_cd_numba(X, y, float(lam), beta, int(max_iter), float(tol))
    return lasso_cd_numpy(X, y, float(lam), beta, int(max_iter), float(tol))


# ---------------------------------------------------------------------------
# linear epsilon-insensitive SVR by full-batch subgradient descent
#   J(w, b) = 0.5 |w|^2 + C * sum_i max(0, |y_i - x_i.w - b| - eps)


@njit(cache=True)
def svr_subgradient_numba(X, y, C, eps, lr, n_steps, w, b):
    n, p = X.shape
    best_w = w.copy()
    best_b = b
    best_obj = np.inf
    gw = np.empty(p)
    for t in range(n_steps + 1):
        for j in range(p):
            gw[j] = w[j]
        gb = 0.0
        loss = 0.0
        for i in range(n):
            f = b
            for j in range(p):
                f += X[i, j] * w[j]
            resid = y[i] - f
            if resid > eps:
                loss += resid - eps
                gb -= C
                for j in range(p):
                    gw[j] -= C * X[i, j]
            elif resid < -eps:
                loss += -resid - eps
                gb += C
                for j in range(p):
                    gw[j] += C * X[i, j]
        ww = 0.0
        for j in range(p):
            ww += w[j] * w[j]
        obj = 0.5 * ww + C * loss
        if obj < best_obj:
            best_obj = obj
            best_b = b
            for j in range(p):
                best_w[j] = w[j]
        if t == n_steps:
            break
        eta = lr / np.sqrt(t + 1.0)
        for j in range(p):
            w[j] -= eta * gw[j]
        b -= eta * gb
    return best_w, best_b, best_obj


def svr_subgradient_numpy(X, y, C, eps, lr, n_steps, w, b):
    best_w, best_b, best_obj = w.copy(), b, np.inf
    for t in range(n_steps + 1):
        resid = y - (X @ w + b)
        s = np.where(resid > eps, 1.0, np.where(resid < -eps, -1.0, 0.0))
        loss = np.maximum(np.abs(resid) - eps, 0.0).sum()
        obj = 0.5 * (w @ w) + C * loss
        if obj < best_obj:
            best_obj, best_w, best_b = obj, w.copy(), b
        if t == n_steps:
            break
        eta = lr / np.sqrt(t + 1.0)
        gw = w - C * (s @ X)
        gb = -C * s.sum()
        w = w - eta * gw
        b = b - eta * gb
    return best_w, best_b, best_obj


def svr_subgradient(X, y, C, eps, lr, n_steps, w0, b0):
    """Return the lowest-objective iterate ``(w, b, objective)``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    w = np.array(w0, dtype=np.float64, copy=True)
    args = (X, y, float(C), float(eps), float(lr), int(n_steps), w, float(b0))
    if USE_NUMBA:
        return svr_subgradient_numba(*args)
    return svr_subgradient_numpy(*args)


# ---------------------------------------------------------------------------
# one-hidden-layer tanh MLP, loss (1/2n) sum (f - y)^2, full-batch GD


@njit(cache=True)
def mlp_train_numba(X, y, W1, b1, w2, b2, lr, epochs):
    n, p = X.shape
    h = W1.shape[1]
    losses = np.empty(epochs)
    A = np.empty((n, h))
    d = np.empty(n)
    gW1 = np.empty((p, h))
    gb1 = np.empty(h)
    gw2 = np.empty(h)
    for ep in range(epochs):
        loss = 0.0
        for i in range(n):
            f = b2
            for k in range(h):
                z = b1[k]
                for j in range(p):
                    z += X[i, j] * W1[j, k]
                a = np.tanh(z)
                A[i, k] = a
                f += a * w2[k]
            r = f - y[i]
            loss += r * r
            d[i] = r / n
        losses[ep] = loss / (2.0 * n)
        gb2 = 0.0
        for k in range(h):
            gw2[k] = 0.0
            gb1[k] = 0.0
            for j in range(p):
                gW1[j, k] = 0.0
        for i in range(n):
            gb2 += d[i]
            for k in range(h):
                gw2[k] += A[i, k] * d[i]
                da = d[i] * w2[k] * (1.0 - A[i, k] * A[i, k])
                gb1[k] += da
                for j in range(p):
                    gW1[j, k] += X[i, j] * da
        for k in range(h):
            w2[k] -= lr * gw2[k]
            b1[k] -= lr * gb1[k]
            for j in range(p):
                W1[j, k] -= lr * gW1[j, k]
        b2 -= lr * gb2
    return W1, b1, w2, b2, losses


def mlp_train_numpy(X, y, W1, b1, w2, b2, lr, epochs):
    n = X.shape[0]
    losses = np.empty(epochs)
    for ep in range(epochs):
        A = np.tanh(X @ W1 + b1)
        r = A @ w2 + b2 - y
        losses[ep] = r @ r / (2.0 * n)
        d = r / n
        da = np.outer(d, w2) * (1.0 - A * A)
        gw2 = A.T @ d
        gb2 = d.sum()
        W1 = W1 - lr * (X.T @ da)
        b1 = b1 - lr * da.sum(axis=0)
        w2 = w2 - lr * gw2
        b2 = b2 - lr * gb2
    return W1, b1, w2, b2, losses


def mlp_train(X, y, W1, b1, w2, b2, lr, epochs):
    """Train in place of copies; returns ``(W1, b1, w2, b2, losses)``."""
    args = (np.ascontiguousarray(X, dtype=np.float64),
            np.ascontiguousarray(y, dtype=np.float64),
            np.array(W1, dtype=np.float64, copy=True),
            np.array(b1, dtype=np.float64, copy=True),
            np.array(w2, dtype=np.float64, copy=True),
            float(b2), float(lr), int(epochs))
    if USE_NUMBA:
        return mlp_train_numba(*args)
    return mlp_train_numpy(*args)


# ---------------------------------------------------------------------------
# isotropic Gaussian splatting onto a square grid (cell centres at integers)


@njit(cache=True)
def render_gaussians_numba(size, xs, ys, sigmas, amps, additive):
    grid = np.zeros((size, size))
    for g in range(xs.shape[0]):
        inv = 1.0 / (2.0 * sigmas[g] * sigmas[g])
        for r in range(size):
            dy = r - ys[g]
            for c in range(size):
                dx = c - xs[g]
                v = amps[g] * np.exp(-(dx * dx + dy * dy) * inv)
                if additive:
                    grid[r, c] += v
                elif v > grid[r, c]:
                    grid[r, c] = v
    return grid


def render_gaussians_numpy(size, xs, ys, sigmas, amps, additive):
    grid = np.zeros((size, size))
    coords = np.arange(size, dtype=np.float64)
    for x, y, s, a in zip(xs, ys, sigmas, amps):
        gx = np.exp(-((coords - x) ** 2) / (2.0 * s * s))
        gy = np.exp(-((coords - y) ** 2) / (2.0 * s * s))
        blob = a * np.outer(gy, gx)
        if additive:
            grid += blob
        else:
            np.maximum(grid, blob, out=grid)
    return grid


def render_gaussians(size, xs, ys, sigmas, amps, additive=True):
    """Render one Gaussian per (x, y, sigma, amplitude) in cell units."""
    args = (int(size),
            np.ascontiguousarray(xs, dtype=np.float64),
            np.ascontiguousarray(ys, dtype=np.float64),
            np.ascontiguousarray(sigmas, dtype=np.float64),
            np.ascontiguousarray(amps, dtype=np.float64),
            bool(additive))
    if USE_NUMBA:
        return render_gaussians_numba(*args)
    return render_gaussians_numpy(*args)
