"""Independent oracles used across the test suite.

These deliberately avoid the library's own code paths: finite differences for
gradients, a scalar Adam re-implementation, exhaustive pair counting for AUROC,
and brute-force matching enumeration. Keep them dumb and obviously correct.
"""

import itertools
import math

import numpy as np

from mucran.nn import (Conv3dStrided, Dense, Network, SmoothLeaky, SoftmaxRows)


def finite_difference_grads(loss_fn, params, h=1e-3):
    """Central finite differences of loss_fn() wrt every element of every param array."""
    grads = []
    for p in params:
        g = np.zeros_like(p, dtype=np.float64)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_fn()
            flat[i] = orig - h
            lm = loss_fn()
            flat[i] = orig
            gflat[i] = (lp - lm) / (2.0 * h)
        grads.append(g)
    return grads


def assert_grads_close(analytic, numeric, rel=1e-4, abs_tol=1e-6):
    for a, n in zip(analytic, numeric):
        a = np.asarray(a, dtype=np.float64)
        n = np.asarray(n, dtype=np.float64)
        tol = np.maximum(abs_tol, rel * np.maximum(np.abs(a), np.abs(n)))
        bad = np.abs(a - n) > tol
        assert not bad.any(), (
            f"gradient mismatch: analytic {a[bad][:5]} vs numeric {n[bad][:5]}"
        )


def random_small_network(rng, dtype=np.float64):
    """A random network with <= 500 parameters plus a matching random input batch."""
    kind = rng.integers(0, 3)
    if kind == 0:  # dense chain
        n_in, h, n_out = rng.integers(2, 7, size=3)
        layers = [Dense(n_in, h, rng=rng, dtype=dtype), SmoothLeaky(dtype=dtype),
                  Dense(h, n_out, rng=rng, dtype=dtype)]
        x = rng.standard_normal((2, n_in))
    elif kind == 1:  # dense chain into row softmax
        arities = [int(a) for a in rng.integers(2, 5, size=rng.integers(1, 4))]
        width = sum(arities)
        n_in = int(rng.integers(2, 6))
        layers = [Dense(n_in, width, rng=rng, dtype=dtype), SmoothLeaky(dtype=dtype),
                  Dense(width, width, rng=rng, dtype=dtype), SoftmaxRows(arities, dtype=dtype)]
        x = rng.standard_normal((2, n_in))
    else:  # strided conv stack
        d = int(rng.integers(4, 7))
        c1 = int(rng.integers(1, 3))
        conv = Conv3dStrided(1, c1, rng=rng, dtype=dtype)
        do = conv.out_dims((d, d, d))
        flat = c1 * int(np.prod(do))
        layers = [conv, SmoothLeaky(dtype=dtype), Dense(flat, 3, rng=rng, dtype=dtype)]
        x = rng.standard_normal((2, 1, d, d, d))
    net = Network(layers)
    assert net.n_params() <= 500
    return net, x


def network_gradcheck(net, x, rng, rel=1e-4, abs_tol=1e-6, h=1e-3):
    """Check analytic gradients of a random linear functional of the output."""
    y = net.forward(x)
    proj = rng.standard_normal(y.shape)

    def loss():
        return float((net.forward(x) * proj).sum())

    net.zero_grad()
    net.forward(x)
    net.backward(proj)
    analytic = [g.copy() for g in net.grads()]
    numeric = finite_difference_grads(loss, net.params(), h=h)
    assert_grads_close(analytic, numeric, rel=rel, abs_tol=abs_tol)


def scalar_adam_step(param, grad, m, v, t, lr, beta1, beta2, eps):
    """One Adam update on plain floats; returns (new_param, new_m, new_v)."""
    m = beta1 * m + (1 - beta1) * grad
    v = beta2 * v + (1 - beta2) * grad * grad
    mhat = m / (1 - beta1 ** t)
    vhat = v / (1 - beta2 ** t)
    return param - lr * mhat / (math.sqrt(vhat) + eps), m, v


def pair_count_auroc(scores, flags):
    """AUROC by exhaustive pair counting, ties worth one half."""
    pos = [s for s, f in zip(scores, flags) if f]
    neg = [s for s, f in zip(scores, flags) if not f]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def exhaustive_best_matching(a_vals, b_vals, tolerance):
    """Best (max pairs, then min total |diff|) matching by brute force; <= ~10 elements.

    Returns (n_pairs, total_cost).
    """
    a_vals, b_vals = list(a_vals), list(b_vals)
    if len(a_vals) > len(b_vals):
        a_vals, b_vals = b_vals, a_vals
    best = (0, 0.0)
    nb = len(b_vals)
    for k in range(len(a_vals), -1, -1):
        if k < best[0]:
            break
        found = None
        for a_sub in itertools.combinations(range(len(a_vals)), k):
            for b_perm in itertools.permutations(range(nb), k):
                cost = 0.0
                ok = True
                for ai, bi in zip(a_sub, b_perm):
                    d = abs(a_vals[ai] - b_vals[bi])
                    if d > tolerance:
                        ok = False
                        break
                    cost += d
                if ok and (found is None or cost < found):
                    found = cost
        if found is not None:
            best = (k, found)
            break
    return best


def straightline_dense_forward(weights, biases, slope, x):
    """Loop-based forward through dense+smooth-leaky pairs, final layer linear."""
    h = [float(v) for v in x]
    for li, (w, b) in enumerate(zip(weights, biases)):
        out = []
        for o in range(len(b)):
            acc = float(b[o])
            for i, xi in enumerate(h):
                acc += float(w[o][i]) * xi
            out.append(acc)
        if li < len(weights) - 1:
            act = []
            for z in out:
                sp = max(z, 0.0) + math.log1p(math.exp(-abs(z)))
                act.append(slope * z + (1.0 - slope) * sp)
            h = act
        else:
            h = out
    return h
