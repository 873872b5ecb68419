"""Independent reference implementations used only to produce expected values.

Everything here is deliberately written scalar-by-scalar with the math module
so it shares no code path (and no numpy reduction order) with the package.
"""

import math

GELU_C = 0.7978845608028654
GELU_A = 0.044715


def scalar_forward_loss(params, widths, activation, head, inputs, targets):
    """Straight-line per-example evaluation of the MLP mean loss."""
    layers = []
    off = 0
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        w = [[params[off + i * fan_out + j] for j in range(fan_out)]
             for i in range(fan_in)]
        off += fan_in * fan_out
        b = [params[off + j] for j in range(fan_out)]
        off += fan_out
        layers.append((w, b))

    def act(x):
        if activation == "relu":
            return x if x > 0 else 0.0
        if activation == "identity":
            return x
        u = GELU_C * (x + GELU_A * x ** 3)
        return 0.5 * x * (1.0 + math.tanh(u))

    total = 0.0
    n = len(inputs)
    for row in range(n):
        a = list(inputs[row])
        for li, (w, b) in enumerate(layers):
            z = []
            for j in range(len(b)):
                acc = b[j]
                for i in range(len(a)):
                    acc += a[i] * w[i][j]
                z.append(acc)
            if li < len(layers) - 1:
                a = [act(x) for x in z]
            else:
                a = z
        if head == "mse":
            t = targets[row]
            if not isinstance(t, (list, tuple)):
                t = [t]
            total += 0.5 * sum((ai - ti) ** 2 for ai, ti in zip(a, t))
        else:
            label = int(targets[row])
            zmax = max(a)
            logz = math.log(sum(math.exp(x - zmax) for x in a))
            total += logz - (a[label] - zmax)
    return total / n


def central_difference_gradient(loss_fn, params, rel_step=1e-4):
    """Coordinate-wise central finite difference of a scalar loss."""
    grad = []
    for i in range(len(params)):
        h = rel_step * (1.0 + abs(params[i]))
        plus = list(params)
        minus = list(params)
        plus[i] += h
        minus[i] -= h
        grad.append((loss_fn(plus) - loss_fn(minus)) / (2.0 * h))
    return grad
