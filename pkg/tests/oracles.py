"""Independent reference implementations used as test oracles.

Everything here is deliberately naive (loops, brute force) and shares no
code with the package's computational paths.
"""

import numpy as np


def central_diff(f, arr, idx, h=1e-5):
    """Central finite difference of scalar-valued f at one coordinate."""
    flat = arr.reshape(-1)
    orig = flat[idx]
    flat[idx] = orig + h
    fp = f()
    flat[idx] = orig - h
    fm = f()
    flat[idx] = orig
    return (fp - fm) / (2.0 * h)


def fd_gradient(f, arr, h=1e-5, coords=None):
    """Full or sampled finite-difference gradient of scalar f wrt arr."""
    if coords is None:
        coords = range(arr.size)
    grad = np.zeros(arr.size)
    for i in coords:
        grad[i] = central_diff(f, arr, i, h)
    return grad.reshape(arr.shape)


def max_rel_error(analytic, numeric, floor=1e-3):
    a = np.asarray(analytic).reshape(-1)
    n = np.asarray(numeric).reshape(-1)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def conv2d_bruteforce(x, w, b, stride, padding):
    """Quadruple-loop convolution, the slow way."""
    n, c, h, wd = x.shape
    co, ci, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, co, oh, ow))
    for ni in range(n):
        for oi in range(co):
            for yi in range(oh):
                for xi in range(ow):
                    patch = xp[ni, :, yi * stride:yi * stride + kh,
                               xi * stride:xi * stride + kw]
                    out[ni, oi, yi, xi] = np.sum(patch * w[oi]) + b[oi]
    return out


def adam_scalar_oracle(value, grads, lr, beta1, beta2, eps):
    """Textbook ADAM recurrence on one scalar parameter."""
    m = v = 0.0
    t = 0
    for g in grads:
        t += 1
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        value = value - lr * m_hat / (np.sqrt(v_hat) + eps)
    return value


def coverage_map(h, w, size, stride):
    """How many sliding windows cover each pixel; independent loop version."""
    def origins(extent):
        out = list(range(0, extent - size + 1, stride))
        if out[-1] != extent - size:
            out.append(extent - size)
        return out

    count = np.zeros((h, w), dtype=int)
    for oy in origins(h):
        for ox in origins(w):
            count[oy:oy + size, ox:ox + size] += 1
    return count
