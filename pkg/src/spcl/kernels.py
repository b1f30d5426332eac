"""Hot loops, each in a numba flavour (``*_jit``) and a numpy flavour (``*_np``).

The public names at the bottom point at one flavour or the other depending on
``spcl._accel.USE_NUMBA``.  Both flavours must agree; ``tests/test_kernels.py``
checks that and ``benchmarks/bench_kernels.py`` times them.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

_TAU = 1e-12


# --------------------------------------------------------------------------
# box overlap

@njit
def iou_matrix_jit(a, b):
    n = a.shape[0]
    m = b.shape[0]
    out = np.zeros((n, m))
    for i in range(n):
        area_a = (a[i, 2] - a[i, 0]) * (a[i, 3] - a[i, 1])
        for j in range(m):
            iw = min(a[i, 2], b[j, 2]) - max(a[i, 0], b[j, 0])
            if iw <= 0.0:
                continue
            ih = min(a[i, 3], b[j, 3]) - max(a[i, 1], b[j, 1])
            if ih <= 0.0:
                continue
            inter = iw * ih
            area_b = (b[j, 2] - b[j, 0]) * (b[j, 3] - b[j, 1])
            out[i, j] = inter / (area_a + area_b - inter)
    return out


def iou_matrix_np(a, b):
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(inter > 0.0, inter / union, 0.0)


# --------------------------------------------------------------------------
# greedy non-maximum suppression

@njit
def nms_jit(boxes, scores, thresh):
    n = boxes.shape[0]
    order = np.argsort(-scores, kind="mergesort")
    suppressed = np.zeros(n, dtype=np.bool_)
    keep = np.empty(n, dtype=np.int64)
    nkeep = 0
    for oi in range(n):
        i = order[oi]
        if suppressed[i]:
            continue
        keep[nkeep] = i
        nkeep += 1
        area_i = (boxes[i, 2] - boxes[i, 0]) * (boxes[i, 3] - boxes[i, 1])
        for oj in range(oi + 1, n):
            j = order[oj]
            if suppressed[j]:
                continue
            iw = min(boxes[i, 2], boxes[j, 2]) - max(boxes[i, 0], boxes[j, 0])
            ih = min(boxes[i, 3], boxes[j, 3]) - max(boxes[i, 1], boxes[j, 1])
            if iw <= 0.0 or ih <= 0.0:
                continue
            inter = iw * ih
            area_j = (boxes[j, 2] - boxes[j, 0]) * (boxes[j, 3] - boxes[j, 1])
            if inter / (area_i + area_j - inter) > thresh:
                suppressed[j] = True
    return keep[:nkeep]


def nms_np(boxes, scores, thresh):
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="mergesort")
    keep = []
    while order.size:
        i = order[0]
        keep.append(i)
        rest = order[1:]
        ovr = iou_matrix_np(boxes[i:i + 1], boxes[rest])[0]
        order = rest[ovr <= thresh]
    return np.asarray(keep, dtype=np.int64)


# --------------------------------------------------------------------------
# weighted linear SVM, dual SMO with second-order working-set selection
#
#   min_a  0.5 a'Qa - sum(a)   s.t.  0 <= a_t <= cost_t,  y'a = 0
#
# Q_st = y_s y_t K_st with K a precomputed Gram matrix; the active problem is
# the rows/columns ``idx`` of K.  ``alpha0`` must be feasible and ``G0`` the
# matching gradient Qa - 1 (zeros and -1 for a cold start).  Returns the dual
# variables, the bias and the iteration count.

@njit
def _bias_from_gradient(y, G, alpha, cost):
    ub = np.inf
    lb = -np.inf
    nfree = 0
    sfree = 0.0
    for t in range(y.shape[0]):
        yg = y[t] * G[t]
        if alpha[t] >= cost[t]:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0.0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            nfree += 1
            sfree += yg
    if nfree > 0:
        rho = sfree / nfree
    else:
        rho = 0.5 * (ub + lb)
    return -rho


@njit
def _select_jit(K, idx, y, cost, alpha, G, diag, act, na):
    # i: maximal violator in I_up
    gmax = -np.inf
    i = -1
    for a in range(na):
        t = act[a]
        if y[t] > 0:
            if alpha[t] < cost[t] and -G[t] >= gmax:
                gmax = -G[t]
                i = t
        else:
            if alpha[t] > 0.0 and G[t] >= gmax:
                gmax = G[t]
                i = t
    if i < 0:
        return -1, -1, gmax, -np.inf
    Ki = K[idx[i]]
    # j: best second-order gain in I_low
    gmax2 = -np.inf
    j = -1
    best = np.inf
    for a in range(na):
        t = act[a]
        if y[t] > 0:
            if alpha[t] <= 0.0:
                continue
            yg = G[t]
        else:
            if alpha[t] >= cost[t]:
                continue
            yg = -G[t]
        if yg >= gmax2:
            gmax2 = yg
        grad_diff = gmax + yg
        if grad_diff > 0.0:
            quad = diag[i] + diag[t] - 2.0 * Ki[idx[t]]
            if quad <= 0.0:
                quad = _TAU
            obj = -(grad_diff * grad_diff) / quad
            if obj <= best:
                best = obj
                j = t
    return i, j, gmax, gmax2


@njit
def _reconstruct_jit(K, idx, y, alpha, G, inactive):
    n = idx.shape[0]
    for t in range(n):
        if not inactive[t]:
            continue
        Kt = K[idx[t]]
        acc = 0.0
        for s in range(n):
            if alpha[s] > 0.0:
                acc += alpha[s] * y[s] * Kt[idx[s]]
        G[t] = y[t] * acc - 1.0


@njit
def _shrink_jit(K, idx, y, cost, alpha, G, act, na, unshrunk, tol):
    n = idx.shape[0]
    g1 = -np.inf
    g2 = -np.inf
    for a in range(na):
        t = act[a]
        up = alpha[t] >= cost[t]
        low = alpha[t] <= 0.0
        if y[t] > 0:
            if not up:
                g1 = max(g1, -G[t])
            if not low:
                g2 = max(g2, G[t])
        else:
            if not up:
                g2 = max(g2, -G[t])
            if not low:
                g1 = max(g1, G[t])
    if not unshrunk and g1 + g2 <= 10.0 * tol:
        unshrunk = True
        inactive = np.ones(n, dtype=np.bool_)
        for a in range(na):
            inactive[act[a]] = False
        _reconstruct_jit(K, idx, y, alpha, G, inactive)
        for t in range(n):
            act[t] = t
        na = n
    m = 0
    for a in range(na):
        t = act[a]
        drop = False
        if alpha[t] >= cost[t]:
            drop = -G[t] > (g1 if y[t] > 0 else g2)
        elif alpha[t] <= 0.0:
            drop = G[t] > (g2 if y[t] > 0 else g1)
        if not drop:
            act[m] = t
            m += 1
    return m, unshrunk


@njit
def _unshrink_jit(K, idx, y, alpha, G, act, na):
    n = idx.shape[0]
    inactive = np.ones(n, dtype=np.bool_)
    for a in range(na):
        inactive[act[a]] = False
    _reconstruct_jit(K, idx, y, alpha, G, inactive)
    for t in range(n):
        act[t] = t
    return n


@njit
def smo_jit(K, idx, y, cost, tol, max_iter, alpha0, G0, shrinking=True):
    n = idx.shape[0]
    alpha = alpha0.copy()
    G = G0.copy()
    diag = np.empty(n)
    for t in range(n):
        diag[t] = K[idx[t], idx[t]]
    act = np.arange(n)
    na = n
    unshrunk = False
    counter = min(n, 1000)
    it = 0
    while it < max_iter:
        if shrinking:
            counter -= 1
            if counter == 0:
                counter = min(n, 1000)
                na, unshrunk = _shrink_jit(K, idx, y, cost, alpha, G, act, na, unshrunk, tol)
        i, j, gmax, gmax2 = _select_jit(K, idx, y, cost, alpha, G, diag, act, na)
        if i < 0 or j < 0 or gmax + gmax2 < tol:
            if na == n:
                break
            na = _unshrink_jit(K, idx, y, alpha, G, act, na)
            i, j, gmax, gmax2 = _select_jit(K, idx, y, cost, alpha, G, diag, act, na)
            if i < 0 or j < 0 or gmax + gmax2 < tol:
                break
            counter = 1
        it += 1
        Ki = K[idx[i]]
        Kj = K[idx[j]]

        ci = cost[i]
        cj = cost[j]
        ai_old = alpha[i]
        aj_old = alpha[j]
        quad = diag[i] + diag[j] - 2.0 * Ki[idx[j]]
        if quad <= 0.0:
            quad = _TAU
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0.0:
                if alpha[j] < 0.0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0.0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > ci - cj:
                if alpha[i] > ci:
                    alpha[i] = ci
                    alpha[j] = ci - diff
            else:
                if alpha[j] > cj:
                    alpha[j] = cj
                    alpha[i] = cj + diff
        else:
            delta = (G[i] - G[j]) / quad
            tot = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if tot > ci:
                if alpha[i] > ci:
                    alpha[i] = ci
                    alpha[j] = tot - ci
            else:
                if alpha[j] < 0.0:
                    alpha[j] = 0.0
                    alpha[i] = tot
            if tot > cj:
                if alpha[j] > cj:
                    alpha[j] = cj
                    alpha[i] = tot - cj
            else:
                if alpha[i] < 0.0:
                    alpha[i] = 0.0
                    alpha[j] = tot

        di = (alpha[i] - ai_old) * y[i]
        dj = (alpha[j] - aj_old) * y[j]
        for a in range(na):
            t = act[a]
            G[t] += y[t] * (di * Ki[idx[t]] + dj * Kj[idx[t]])
    if na < n:
        _unshrink_jit(K, idx, y, alpha, G, act, na)
    b = _bias_from_gradient(y, G, alpha, cost)
    return alpha, b, it


def _last_argmax(a):
    return a.shape[0] - 1 - int(np.argmax(a[::-1]))


def _select_np(K, idx, y, cost, alpha, G, diag, act):
    ya, Ga, aa, ca = y[act], G[act], alpha[act], cost[act]
    pos = ya > 0
    not_upper = aa < ca
    not_lower = aa > 0.0
    in_up = np.where(pos, not_upper, not_lower)
    in_low = np.where(pos, not_lower, not_upper)
    if not in_up.any():
        return -1, -1, -np.inf, -np.inf
    cand = np.where(in_up, -ya * Ga, -np.inf)
    ii = _last_argmax(cand)
    i = int(act[ii])
    gmax = cand[ii]
    yg = np.where(in_low, ya * Ga, -np.inf)
    gmax2 = yg.max() if in_low.any() else -np.inf
    Ki = K[idx[i], idx[act]]
    grad_diff = gmax + yg
    quad = diag[i] + diag[act] - 2.0 * Ki
    quad = np.where(quad <= 0.0, _TAU, quad)
    ok = in_low & (grad_diff > 0.0)
    if not ok.any():
        return i, -1, gmax, gmax2
    gain = np.where(ok, (grad_diff * grad_diff) / quad, -np.inf)
    return i, int(act[_last_argmax(gain)]), gmax, gmax2


def _reconstruct_np(K, idx, y, alpha, G, inactive):
    t = np.flatnonzero(inactive)
    s = np.flatnonzero(alpha > 0.0)
    if t.size == 0:
        return
    if s.size == 0:
        G[t] = -1.0
        return
    # same summation order as the compiled loop
    acc = np.zeros(t.size)
    for k in s:
        acc += alpha[k] * y[k] * K[idx[t], idx[k]]
    G[t] = y[t] * acc - 1.0


def _shrink_np(K, idx, y, cost, alpha, G, act, unshrunk, tol):
    n = idx.shape[0]
    ya, Ga, aa, ca = y[act], G[act], alpha[act], cost[act]
    pos = ya > 0
    up = aa >= ca
    low = aa <= 0.0
    m1 = np.where(pos, ~up, ~low)
    m2 = np.where(pos, ~low, ~up)
    g1 = np.where(pos, -Ga, Ga)[m1].max() if m1.any() else -np.inf
    g2 = np.where(pos, Ga, -Ga)[m2].max() if m2.any() else -np.inf
    if not unshrunk and g1 + g2 <= 10.0 * tol:
        unshrunk = True
        inactive = np.ones(n, dtype=bool)
        inactive[act] = False
        _reconstruct_np(K, idx, y, alpha, G, inactive)
        act = np.arange(n)
        ya, Ga, aa, ca = y, G, alpha, cost
        pos = ya > 0
        up = aa >= ca
        low = aa <= 0.0
    drop_up = up & (-Ga > np.where(pos, g1, g2))
    drop_low = ~up & low & (Ga > np.where(pos, g2, g1))
    return act[~(drop_up | drop_low)], unshrunk


def _unshrink_np(K, idx, y, alpha, G, act):
    n = idx.shape[0]
    inactive = np.ones(n, dtype=bool)
    inactive[act] = False
    _reconstruct_np(K, idx, y, alpha, G, inactive)
    return np.arange(n)


def smo_np(K, idx, y, cost, tol, max_iter, alpha0, G0, shrinking=True):
    n = idx.shape[0]
    alpha = alpha0.copy()
    G = G0.copy()
    diag = K[idx, idx]
    act = np.arange(n)
    unshrunk = False
    counter = min(n, 1000)
    it = 0
    while it < max_iter:
        if shrinking:
            counter -= 1
            if counter == 0:
                counter = min(n, 1000)
                act, unshrunk = _shrink_np(K, idx, y, cost, alpha, G, act, unshrunk, tol)
        i, j, gmax, gmax2 = _select_np(K, idx, y, cost, alpha, G, diag, act)
        if i < 0 or j < 0 or gmax + gmax2 < tol:
            if act.size == n:
                break
            act = _unshrink_np(K, idx, y, alpha, G, act)
            i, j, gmax, gmax2 = _select_np(K, idx, y, cost, alpha, G, diag, act)
            if i < 0 or j < 0 or gmax + gmax2 < tol:
                break
            counter = 1
        it += 1
        Ki = K[idx[i], idx[act]]
        Kj = K[idx[j], idx[act]]

        ci, cj = cost[i], cost[j]
        ai_old, aj_old = alpha[i], alpha[j]
        q = diag[i] + diag[j] - 2.0 * K[idx[i], idx[j]]
        if q <= 0.0:
            q = _TAU
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / q
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0.0:
                if aj < 0.0:
                    aj, ai = 0.0, diff
            elif ai < 0.0:
                ai, aj = 0.0, -diff
            if diff > ci - cj:
                if ai > ci:
                    ai, aj = ci, ci - diff
            elif aj > cj:
                aj, ai = cj, cj + diff
        else:
            delta = (G[i] - G[j]) / q
            tot = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if tot > ci:
                if ai > ci:
                    ai, aj = ci, tot - ci
            elif aj < 0.0:
                aj, ai = 0.0, tot
            if tot > cj:
                if aj > cj:
                    aj, ai = cj, tot - cj
            elif ai < 0.0:
                ai, aj = 0.0, tot
        alpha[i], alpha[j] = ai, aj
        G[act] += y[act] * ((ai - ai_old) * y[i] * Ki + (aj - aj_old) * y[j] * Kj)
    if act.size < n:
        _unshrink_np(K, idx, y, alpha, G, act)
    b = _bias_from_gradient_np(y, G, alpha, cost)
    return alpha, b, it


def _bias_from_gradient_np(y, G, alpha, cost):
    yg = y * G
    at_upper = alpha >= cost
    at_lower = (alpha <= 0.0) & ~at_upper
    free = ~at_upper & ~at_lower
    if free.any():
        return -float(yg[free].mean())
    ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = yg[ub_mask].min() if ub_mask.any() else np.inf
    lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
    return -0.5 * (ub + lb)


# --------------------------------------------------------------------------
# closed-form self-paced weights, one segment (bag) at a time
#
# Each segment solves  min_{v in [0,1]^n} sum v*l - lam*sum v - gam*sqrt(sum v)
# by walking the losses in ascending order.

@njit
def spl_weights_jit(losses, offsets, lam, gam):
    out = np.zeros(losses.shape[0])
    for k in range(offsets.shape[0] - 1):
        lo = offsets[k]
        hi = offsets[k + 1]
        n = hi - lo
        if n == 0:
            continue
        seg = losses[lo:hi]
        order = np.argsort(seg, kind="mergesort")
        ls = seg[order]
        v = np.zeros(n)
        i = 0
        while i < n:
            if ls[i] < lam + gam / (2.0 * np.sqrt(i + 1.0)):
                v[i] = 1.0
                i += 1
                continue
            m = 1
            while i + m < n and ls[i + m] == ls[i]:
                m += 1
            if gam > 0.0 and ls[i] > lam:
                a = gam / (2.0 * (ls[i] - lam))
                val = (a * a - i) / m
            else:
                val = 0.0
            val = min(max(val, 0.0), 1.0)
            for t in range(i, i + m):
                v[t] = val
            break
        # tied losses share their mass evenly (objective unchanged)
        s = 0
        while s < n:
            e = s + 1
            while e < n and ls[e] == ls[s]:
                e += 1
            if e - s > 1:
                tot = 0.0
                for t in range(s, e):
                    tot += v[t]
                for t in range(s, e):
                    v[t] = tot / (e - s)
            s = e
        for t in range(n):
            out[lo + order[t]] = v[t]
    return out


def spl_weights_np(losses, offsets, lam, gam):
    losses = np.asarray(losses, dtype=np.float64)
    out = np.zeros(losses.shape[0])
    for k in range(len(offsets) - 1):
        lo, hi = int(offsets[k]), int(offsets[k + 1])
        n = hi - lo
        if n == 0:
            continue
        seg = losses[lo:hi]
        order = np.argsort(seg, kind="mergesort")
        ls = seg[order]
        thresh = lam + gam / (2.0 * np.sqrt(np.arange(1, n + 1)))
        v = np.zeros(n)
        fail = np.flatnonzero(ls >= thresh)
        if fail.size == 0:
            v[:] = 1.0
        else:
            i = int(fail[0])
            v[:i] = 1.0
            m = int(np.count_nonzero(ls[i:] == ls[i]))
            if gam > 0.0 and ls[i] > lam:
                a = gam / (2.0 * (ls[i] - lam))
                val = (a * a - i) / m
            else:
                val = 0.0
            v[i:i + m] = min(max(val, 0.0), 1.0)
        uniq, inv = np.unique(ls, return_inverse=True)
        if uniq.size < n:
            v = (np.bincount(inv, weights=v) / np.bincount(inv))[inv]
        out[lo + order] = v
    return out


if USE_NUMBA:
    iou_matrix = iou_matrix_jit
    nms = nms_jit
    smo = smo_jit
    spl_weights = spl_weights_jit
else:
    iou_matrix = iou_matrix_np
    nms = nms_np
    smo = smo_np
    spl_weights = spl_weights_np
