"""Independent references: plain-Python scalar loops and finite differences.

Nothing here touches the tape or numpy linear algebra, so agreement with
the vectorised code is meaningful.
"""

import math

import numpy as np

from snelsd.tensor import Tape, Tensor, weighted_sum


def sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def mv(W, x):
    return [sum(W[i][j] * x[j] for j in range(len(x))) for i in range(len(W))]


def vadd(*vs):
    return [sum(v[i] for v in vs) for i in range(len(vs[0]))]


def lst(t):
    return t.data.tolist()


def lstm_ref(x, h, c, p):
    """p maps names to nested lists."""
    def pre(g):
        return vadd(mv(p[f"W_{g}"], x), mv(p[f"U_{g}"], h), p[f"b_{g}"])

    i = [sig(z) for z in pre("i")]
    f = [sig(z) for z in pre("f")]
    o = [sig(z) for z in pre("o")]
    u = [math.tanh(z) for z in pre("c")]
    c_new = [f[k] * c[k] + i[k] * u[k] for k in range(len(c))]
    h_new = [o[k] * math.tanh(c_new[k]) for k in range(len(c))]
    return h_new, c_new


def tree_ref(x, hL, cL, hR, cR, p, candidate="sigmoid"):
    act = sig if candidate == "sigmoid" else math.tanh

    def pre(W, UL, UR, b):
        return vadd(mv(p[W], x), mv(p[UL], hL), mv(p[UR], hR), p[b])

    i = [sig(z) for z in pre("W_i", "U_iL", "U_iR", "b_i")]
    fL = [sig(z) for z in pre("W_f", "U_fLL", "U_fLR", "b_fL")]
    fR = [sig(z) for z in pre("W_f", "U_fRL", "U_fRR", "b_fR")]
    o = [sig(z) for z in pre("W_o", "U_oL", "U_oR", "b_o")]
    u = [act(z) for z in pre("W_c", "U_cL", "U_cR", "b_u")]
    n = len(i)
    c = [fL[k] * cL[k] + fR[k] * cR[k] + i[k] * u[k] for k in range(n)]
    h = [o[k] * math.tanh(c[k]) for k in range(n)]
    return h, c


def detect_ref(x, x_next, r_prev, p_prev, p):
    i0 = [sig(z) for z in vadd(mv(p["W_i0"], x), mv(p["U_i0"], p_prev), p["b_i0"])]
    f0 = [sig(z) for z in vadd(mv(p["W_f0"], x), mv(p["U_f0"], p_prev), p["b_f0"])]
    cand = [math.tanh(z) for z in vadd(mv(p["W_p0"], x), mv(p["U_p0"], p_prev), p["b_p0"])]
    p0 = [f0[k] * p_prev[k] + i0[k] * cand[k] for k in range(len(p_prev))]
    p1 = [math.tanh(z) for z in vadd(mv(p["W_p1"], x), p["b_p1"])]
    pt = [(1 - r_prev) * p0[k] + r_prev * p1[k] for k in range(len(p0))]
    z = pt + list(x_next)
    r = sig(sum(a * b for a, b in zip(z, p["u_r"])))
    return pt, r


def describe_ref(pt, r, h, c, lstm_p, p_star):
    m = [(1 - r) * p_star[k] + r * pt[k] for k in range(len(pt))]
    return lstm_ref(m, h, c, lstm_p)


def snelsd_ref(xs, dp, sp, p_star, clamp=None):
    d_p = len(dp["b_p1"])
    d_h = len(sp["b_i"])
    r, pv = 1.0, [0.0] * d_p
    h, c = [0.0] * d_h, [0.0] * d_h
    states, rs = [], []
    for t, x in enumerate(xs):
        x_next = xs[t + 1] if t + 1 < len(xs) else [0.0] * len(x)
        pv, r = detect_ref(x, x_next, r, pv, dp)
        if clamp is not None:
            r = clamp
        h, c = describe_ref(pv, r, h, c, sp, p_star)
        states.append(h)
        rs.append(r)
    return states, rs


def chain_ref(xs, p):
    d_h = len(p["b_i"])
    h, c = [0.0] * d_h, [0.0] * d_h
    out = []
    for x in xs:
        h, c = lstm_ref(x, h, c, p)
        out.append(h)
    return out


def as_lists(bundle):
    return {name: lst(t) for name, t in bundle.named()}


def adam_ref(theta, grad_fn, steps, lr=0.0004, b1=0.9, b2=0.999, eps=1e-8):
    theta = list(theta)
    m = [0.0] * len(theta)
    v = [0.0] * len(theta)
    traj = []
    for t in range(1, steps + 1):
        g = grad_fn(theta)
        for k in range(len(theta)):
            m[k] = b1 * m[k] + (1 - b1) * g[k]
            v[k] = b2 * v[k] + (1 - b2) * g[k] * g[k]
            mh = m[k] / (1 - b1**t)
            vh = v[k] / (1 - b2**t)
            theta[k] = theta[k] - lr * mh / (math.sqrt(vh) + eps)
        traj.append(list(theta))
    return traj


def adadelta_ref(theta, grad_fn, steps, rho=0.95, eps=1e-6):
    theta = list(theta)
    eg = [0.0] * len(theta)
    ex = [0.0] * len(theta)
    traj = []
    for _ in range(steps):
        g = grad_fn(theta)
        for k in range(len(theta)):
            eg[k] = rho * eg[k] + (1 - rho) * g[k] ** 2
            dx = math.sqrt(ex[k] + eps) / math.sqrt(eg[k] + eps) * g[k]
            ex[k] = rho * ex[k] + (1 - rho) * dx**2
            theta[k] -= dx
        traj.append(list(theta))
    return traj


# -- finite differences -----------------------------------------------------

FD_STEP = 1e-5
FD_RTOL = 1e-4


def rel_error(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


def gradcheck(build, leaves, seed=0, h=FD_STEP):
    """Max relative error between tape gradients and central differences.

    ``build()`` returns a tensor; the loss is a fixed random weighting of
    its entries so that no gradient vanishes by symmetry.
    """
    out = build()
    w = np.random.default_rng(seed).normal(size=out.shape)
    for leaf in leaves:
        leaf.grad = None
    with Tape() as tape:
        loss = weighted_sum(build(), w)
    tape.backward(loss)
    worst = 0.0
    for leaf in leaves:
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        flat = leaf.data.reshape(-1)
        fd = np.zeros(flat.size)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            up = float((build().data * w).sum())
            flat[k] = old - h
            down = float((build().data * w).sum())
            flat[k] = old
            fd[k] = (up - down) / (2 * h)
        worst = max(worst, float(rel_error(analytic.reshape(-1), fd).max(initial=0.0)))
    return worst


def leaf(rng, *shape, scale=1.0):
    return Tensor(rng.normal(scale=scale, size=shape), requires_grad=True)
