"""Independent reference implementations used only by the test-suite."""
import numpy as np


def numeric_grad(f, x, h=1e-5):
    """Central finite differences of scalar ``f`` with respect to array ``x`` (in place)."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gf[i] = (fp - fm) / (2 * h)
    return g


def rel_err(analytic, numeric):
    """Max absolute deviation relative to the larger max-magnitude of the two gradients."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
    return float(np.abs(analytic - numeric).max() / scale)


def conv_loops(x, kernels, bias):
    """Direct nested-loop same-padding 3x3 correlation, NHWC input, (O, C, 3, 3) kernels."""
    b, h, w, c = x.shape
    o = kernels.shape[0]
    out = np.zeros((b, h, w, o))
    for n in range(b):
        for i in range(h):
            for j in range(w):
                for q in range(o):
                    acc = bias[q]
                    for di in range(3):
                        for dj in range(3):
                            ii, jj = i + di - 1, j + dj - 1
                            if 0 <= ii < h and 0 <= jj < w:
                                for p in range(c):
                                    acc += kernels[q, p, di, dj] * x[n, ii, jj, p]
                    out[n, i, j, q] = acc
    return out


def maxpool_loops(x):
    b, h, w, c = x.shape
    ho, wo = -(-h // 2), -(-w // 2)
    out = np.zeros((b, ho, wo, c), dtype=x.dtype)
    for n in range(b):
        for i in range(ho):
            for j in range(wo):
                for q in range(c):
                    best = -np.inf
                    for di in range(2):
                        for dj in range(2):
                            ii, jj = 2 * i + di, 2 * j + dj
                            if ii < h and jj < w and x[n, ii, jj, q] > best:
                                best = x[n, ii, jj, q]
                    out[n, i, j, q] = best
    return out


def mse_loops(a, b):
    total = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            d = float(a[i, j]) - float(b[i, j])
            total += d * d
    return total / a.size


def tv_loops(x):
    h, w = x.shape
    total = 0.0
    for i in range(h):
        for j in range(w):
            dh = x[i + 1, j] - x[i, j] if i + 1 < h else 0.0
            dw = x[i, j + 1] - x[i, j] if j + 1 < w else 0.0
            total += (dh * dh + dw * dw) ** 0.5
    return total


def tv_prox_subgradient(v, weight, iters=200_000):
    """Brute-force prox oracle: subgradient descent with 1/sqrt(k) steps, best iterate kept."""
    def obj(x):
        return 0.5 * float(np.sum((x - v) ** 2)) + weight * tv_loops_fast(x)

    x = v.copy()
    best, best_val = x.copy(), obj(x)
    for k in range(1, iters + 1):
        dh = np.zeros_like(x)
        dw = np.zeros_like(x)
        dh[:-1] = x[1:] - x[:-1]
        dw[:, :-1] = x[:, 1:] - x[:, :-1]
        n = np.sqrt(dh * dh + dw * dw)
        safe = np.where(n > 0, n, 1.0)
        ph, pw = np.where(n > 0, dh / safe, 0.0), np.where(n > 0, dw / safe, 0.0)
        # gradient of TV: -div(p)
        g = np.zeros_like(x)
        g[:-1] -= ph[:-1]
        g[1:] += ph[:-1]
        g[:, :-1] -= pw[:, :-1]
        g[:, 1:] += pw[:, :-1]
        x = x - (0.05 / np.sqrt(k)) * ((x - v) + weight * g)
        if k % 50 == 0 or k == iters:
            val = obj(x)
            if val < best_val:
                best, best_val = x.copy(), val
    return best, best_val


def tv_loops_fast(x):
    dh = np.zeros_like(x)
    dw = np.zeros_like(x)
    dh[:-1] = x[1:] - x[:-1]
    dw[:, :-1] = x[:, 1:] - x[:, :-1]
    return float(np.sum(np.sqrt(dh * dh + dw * dw)))
