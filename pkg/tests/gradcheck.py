"""Central finite-difference gradient oracle on float64 shadow layers."""
import numpy as np

FD_STEP = 1e-3
REL_TOL = 1e-4


def scalar_loss(layer, x, weights, training=False, rng_factory=None):
    rng = rng_factory() if rng_factory else None
    out = layer.forward(x, training=training, rng=rng)
    return float((out * weights).sum())


def analytic_grads(layer, x, weights, training=False, rng_factory=None):
    rng = rng_factory() if rng_factory else None
    layer.forward(x, training=training, rng=rng)
    dx = layer.backward(weights)
    return [g.copy() for g in layer.grads()], dx


def fd_grads(layer, x, weights, training=False, rng_factory=None):
    """Central differences over every parameter and input element."""
    param_grads = []
    for p in layer.params():
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + FD_STEP
            hi = scalar_loss(layer, x, weights, training, rng_factory)
            flat[i] = orig - FD_STEP
            lo = scalar_loss(layer, x, weights, training, rng_factory)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * FD_STEP)
        param_grads.append(g)

    dx = np.zeros_like(x)
    xflat = x.reshape(-1)
    gflat = dx.reshape(-1)
    for i in range(xflat.size):
        orig = xflat[i]
        xflat[i] = orig + FD_STEP
        hi = scalar_loss(layer, x, weights, training, rng_factory)
        xflat[i] = orig - FD_STEP
        lo = scalar_loss(layer, x, weights, training, rng_factory)
        xflat[i] = orig
        gflat[i] = (hi - lo) / (2 * FD_STEP)
    return param_grads, dx


def relative_error(a, b):
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-4)
    return float((np.abs(a - b) / denom).max())


def check_layer(layer, x, weights, training=False, rng_factory=None):
    """Max relative error between analytic and finite-difference grads."""
    ana_p, ana_x = analytic_grads(layer, x, weights, training, rng_factory)
    fd_p, fd_x = fd_grads(layer, x, weights, training, rng_factory)
    errs = [relative_error(a, f) for a, f in zip(ana_p, fd_p)]
    errs.append(relative_error(ana_x, fd_x))
    return max(errs)
