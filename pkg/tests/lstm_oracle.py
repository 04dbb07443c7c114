"""Independent scalar-loop LSTM oracle. No numpy: plain Python floats and
loops, deliberately written separately from the production vectorized path.
Used for forward-pass equivalence checks and as the loss function behind
central finite differences."""

import math


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def cell_forward(p, x, h, c):
    """One step. p is an LstmParams-like object whose arrays are indexable;
    x, h, c are plain sequences. Returns (h', c', y) as Python lists/float."""
    hidden = p.hidden_size
    inputs = p.input_size
    h2 = [0.0] * hidden
    c2 = [0.0] * hidden
    acts = {}
    for name in ("i", "f", "o", "g"):
        W, U, b = p.W[name], p.U[name], p.b[name]
        pre = []
        for j in range(hidden):
            s = float(b[j])
            for k in range(inputs):
                s += float(W[j][k]) * float(x[k])
            for k in range(hidden):
                s += float(U[j][k]) * float(h[k])
            pre.append(s)
        acts[name] = pre
    for j in range(hidden):
        i = _sigmoid(acts["i"][j])
        f = _sigmoid(acts["f"][j])
        o = _sigmoid(acts["o"][j])
        g = math.tanh(acts["g"][j])
        c2[j] = f * float(c[j]) + i * g
        h2[j] = o * math.tanh(c2[j])
    y = float(p.b_y)
    for j in range(hidden):
        y += float(p.w_y[j]) * h2[j]
    return h2, c2, y


def sequence_loss(p, xs, targets) -> float:
    """Mean squared error of per-step outputs over one sequence."""
    hidden = p.hidden_size
    h = [0.0] * hidden
    c = [0.0] * hidden
    total = 0.0
    for x, target in zip(xs, targets):
        h, c, y = cell_forward(p, x, h, c)
        total += (y - float(target)) ** 2
    return total / len(targets)
