"""Function-preserving network morphisms.

`net2wider` replaces a layer by a wider one: new units copy the incoming
weights of randomly chosen existing units, and the consuming layer's
weights are divided by each source unit's replication count so the
network computes the same function (exactly, at noise scale 0).

`net2deeper` inserts an identity-initialized layer. The inserted layer is
followed by ReLU, which composes with the surrounding ReLUs without
changing the output.

Both operate on a (Network, ArchDescriptor) pair and return a new pair;
inputs are never mutated.
"""
import math

import numpy as np

from .arch import ArchDescriptor, LayerSpec, deepen_sites, widen_sites
from .errors import SiteError, WidthError
from .layers import Conv2D, Dense, Dropout, Flatten, MaxPool2D, SoftmaxOutput
from .network import Network

# one widening action takes a layer from n to ceil(WIDEN_FACTOR * n) units
WIDEN_FACTOR = 1.5


def _consumer_index(layers, idx):
    """Index of the next parameterized layer after idx."""
    for j in range(idx + 1, len(layers)):
        if isinstance(layers[j], (Dense, Conv2D, SoftmaxOutput)):
            return j
    raise SiteError(f"no consumer layer after index {idx}")


def _flatten_spatial(desc):
    """(H, W) of the feature map entering Flatten."""
    h, w, _ = desc.input_shape
    for spec in desc.specs:
        if spec.kind == "pool":
            h, w = h // 2, w // 2
        elif spec.kind == "flatten":
            return h, w
    raise SiteError("descriptor has no flatten layer")


def net2wider(net, desc, layer_idx, new_width, noise_scale=0.0, seed=0):
    """Widen the layer at layer_idx to new_width units/filters."""
    if layer_idx not in widen_sites(desc):
        raise SiteError(f"layer {layer_idx} is not a widening site")
    rng = np.random.default_rng(seed)
    layers = [l.clone() for l in net.layers]
    target = layers[layer_idx]
    n = target.out_dim if isinstance(target, Dense) else target.out_ch
    m = int(new_width)
    if m <= n:
        raise WidthError(f"new width {m} must exceed current width {n}")

    # replication map: identity on existing units, uniform for the rest
    g = np.concatenate([np.arange(n), rng.integers(0, n, size=m - n)])
    counts = np.bincount(g, minlength=n).astype(np.float64)
    scale = _copy_noise(rng, noise_scale, m - n, target.W.dtype)

    if isinstance(target, Dense):
        wider = Dense(target.in_dim, m, target.activation, target.W.dtype)
        wider.W = target.W[:, g].copy()
        wider.W[:, n:] *= scale
        wider.b = target.b[g].copy()
    else:
        wider = Conv2D(target.in_ch, m, target.W.dtype)
        wider.W = target.W[:, :, :, g].copy()
        wider.W[:, :, :, n:] *= scale
        wider.b = target.b[g].copy()
    layers[layer_idx] = wider

    cidx = _consumer_index(layers, layer_idx)
    consumer = layers[cidx]
    div = (counts[g]).astype(consumer.W.dtype)
    if isinstance(consumer, Conv2D):
        remapped = Conv2D(m, consumer.out_ch, consumer.W.dtype)
        remapped.W = consumer.W[:, :, g, :] / div[None, None, :, None]
        remapped.b = consumer.b.copy()
    else:
        # Dense or SoftmaxOutput consumer. If the widened layer is a conv,
        # the consumer sits behind Flatten and its fan-in is indexed
        # (spatial position, channel); remap the channel axis per position.
        if isinstance(target, Conv2D):
            h, w = _flatten_spatial(desc)
            old = consumer.W.reshape(h * w, n, -1)
            new_w = (old[:, g, :] / div[None, :, None]).reshape(
                h * w * m, -1)
        else:
            new_w = consumer.W[g, :] / div[:, None]
        if isinstance(consumer, SoftmaxOutput):
            remapped = SoftmaxOutput(new_w.shape[0], consumer.classes,
                                     consumer.W.dtype)
        else:
            remapped = Dense(new_w.shape[0], consumer.out_dim,
                             consumer.activation, consumer.W.dtype)
        remapped.W = new_w.astype(consumer.W.dtype)
        remapped.b = consumer.b.copy()
    layers[cidx] = remapped

    new_desc = desc.replace(layer_idx,
                            LayerSpec(desc.specs[layer_idx].kind, m))
    return Network(layers), new_desc


def _copy_noise(rng, noise_scale, count, dtype):
    """Multiplicative symmetry-breaking factors for the copied units."""
    if noise_scale == 0.0:
        return np.ones(count, dtype=dtype)
    return (1.0 + rng.uniform(-noise_scale, noise_scale,
                              size=count)).astype(dtype)


def net2deeper(net, desc, insert_point):
    """Insert an identity layer at insert_point = (spec_index, kind)."""
    if insert_point not in deepen_sites(desc):
        raise SiteError(f"{insert_point} is not a deepening site")
    pos, kind = insert_point
    layers = [l.clone() for l in net.layers]
    prev = layers[pos - 1]
    if kind == "dense":
        k = prev.out_dim
        identity = Dense(k, k, "relu", prev.W.dtype)
        identity.W = np.eye(k, dtype=prev.W.dtype)
        spec = LayerSpec("dense", k)
    else:
        c = prev.out_ch
        identity = Conv2D(c, c, prev.W.dtype)
        for i in range(c):
            identity.W[1, 1, i, i] = 1.0  # center-tap identity kernel
        spec = LayerSpec("conv", c)
    layers.insert(pos, identity)
    return Network(layers), desc.insert(pos, spec)


def apply_actions(net, desc, action, noise_scale=0.0, seed=0,
                  widen_factor=WIDEN_FACTOR):
    """Apply a composite expansion: deepenings first, then widenings.

    Sites are drawn uniformly from the eligible ones; deepening first means
    freshly inserted identity layers can themselves be widened. Returns the
    transformed network with its descriptor; an all-zero action returns an
    unchanged clone.
    """
    rng = np.random.default_rng(seed)
    for _ in range(action.deeper_count):
        sites = deepen_sites(desc)
        point = sites[rng.integers(len(sites))]
        net, desc = net2deeper(net, desc, point)
    for _ in range(action.wider_count):
        sites = widen_sites(desc)
        idx = sites[rng.integers(len(sites))]
        n = int(desc.specs[idx].arg)
        new_width = math.ceil(widen_factor * n)
        net, desc = net2wider(net, desc, idx, new_width, noise_scale,
                              seed=rng.integers(2 ** 63))
    if action.deeper_count == 0 and action.wider_count == 0:
        net = net.clone()
    return net, desc
