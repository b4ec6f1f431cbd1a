"""Symbolic architecture descriptors and output-layer growth.

A descriptor records layer kinds and sizes only; `instantiate` turns it
into a parameterized Network. Descriptors serialize to a one-layer-per-line
text form used in config files and reports, e.g.::

    input 8x8x1
    conv 8
    pool
    dropout 0.25
    flatten
    dense 32
    softmax 10
"""
from dataclasses import dataclass

import numpy as np

from .errors import DescriptorError, NoOpError
from .layers import Conv2D, Dense, Dropout, Flatten, MaxPool2D, SoftmaxOutput
from .network import Network

# new output units: weights ~ N(0, sigma), biases zero
OUTPUT_INIT_SIGMA = 0.01


@dataclass(frozen=True)
class LayerSpec:
    kind: str          # conv | pool | dropout | flatten | dense | softmax
    arg: float = 0.0   # out_ch / rate / width / classes; unused for pool+flatten

    def __str__(self):
        if self.kind in ("pool", "flatten"):
            return self.kind
        if self.kind == "dropout":
            return f"dropout {self.arg:g}"
        return f"{self.kind} {int(self.arg)}"


@dataclass(frozen=True)
class ExpansionAction:
    wider_count: int = 0
    deeper_count: int = 0

    def __post_init__(self):
        if self.wider_count < 0 or self.deeper_count < 0:
            raise ValueError("action counts must be non-negative")


class ArchDescriptor:
    """Immutable layer-by-layer description of the task network."""

    def __init__(self, input_shape, specs):
        self.input_shape = tuple(int(d) for d in input_shape)
        self.specs = tuple(specs)
        self._validate()

    def _validate(self):
        if len(self.input_shape) != 3:
            raise DescriptorError("input shape must be (H, W, C)")
        kinds = [s.kind for s in self.specs]
        if kinds.count("softmax") != 1 or kinds[-1] != "softmax":
            raise DescriptorError(
                "descriptor needs exactly one trailing softmax layer")
        if kinds.count("flatten") != 1:
            raise DescriptorError("descriptor needs exactly one flatten")
        flat = kinds.index("flatten")
        for k in kinds[:flat]:
            if k not in ("conv", "pool", "dropout"):
                raise DescriptorError(f"{k} not allowed before flatten")
        for k in kinds[flat + 1:-1]:
            if k not in ("dense", "dropout"):
                raise DescriptorError(f"{k} not allowed after flatten")
        for s in self.specs:
            if s.kind in ("conv", "dense", "softmax") and int(s.arg) < 1:
                raise DescriptorError(f"{s.kind} width must be >= 1")
            if s.kind == "dropout" and not 0.0 <= s.arg < 1.0:
                raise DescriptorError("dropout rate must be in [0, 1)")
        if self.a_conv < 1 or self.a_fc < 1:
            raise DescriptorError(
                "descriptor needs at least one conv and one hidden dense")

    @property
    def a_conv(self):
        return sum(1 for s in self.specs if s.kind == "conv")

    @property
    def a_fc(self):
        return sum(1 for s in self.specs if s.kind == "dense")

    @property
    def class_count(self):
        return int(self.specs[-1].arg)

    def with_classes(self, classes):
        specs = list(self.specs[:-1]) + [LayerSpec("softmax", classes)]
        return ArchDescriptor(self.input_shape, specs)

    def replace(self, idx, spec):
        specs = list(self.specs)
        specs[idx] = spec
        return ArchDescriptor(self.input_shape, specs)

    def insert(self, idx, spec):
        specs = list(self.specs)
        specs.insert(idx, spec)
        return ArchDescriptor(self.input_shape, specs)

    def __eq__(self, other):
        return (isinstance(other, ArchDescriptor)
                and self.input_shape == other.input_shape
                and self.specs == other.specs)

    def __hash__(self):
        return hash((self.input_shape, self.specs))

    def to_text(self):
        h, w, c = self.input_shape
        lines = [f"input {h}x{w}x{c}"]
        lines.extend(str(s) for s in self.specs)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        lines = [ln.strip() for ln in text.splitlines()
                 if ln.strip() and not ln.strip().startswith("#")]
        if not lines or not lines[0].startswith("input "):
            raise DescriptorError("descriptor text must start with 'input'")
        try:
            shape = tuple(int(d) for d in lines[0].split()[1].split("x"))
        except ValueError as e:
            raise DescriptorError(f"bad input shape line: {lines[0]}") from e
        specs = []
        for ln in lines[1:]:
            parts = ln.split()
            kind = parts[0]
            if kind in ("pool", "flatten"):
                specs.append(LayerSpec(kind))
            elif kind == "dropout":
                specs.append(LayerSpec(kind, float(parts[1])))
            elif kind in ("conv", "dense", "softmax"):
                specs.append(LayerSpec(kind, int(parts[1])))
            else:
                raise DescriptorError(f"unknown layer kind: {ln}")
        return cls(shape, specs)

    def __repr__(self):
        inner = ", ".join(str(s) for s in self.specs)
        return f"ArchDescriptor({self.input_shape}, [{inner}])"


def instantiate(desc, seed):
    """Build a Network matching the descriptor; deterministic under seed."""
    rng = np.random.default_rng(seed)
    h, w, c = desc.input_shape
    layers = []
    flat_dim = None
    for spec in desc.specs:
        if spec.kind == "conv":
            layers.append(Conv2D(c, int(spec.arg)))
            c = int(spec.arg)
        elif spec.kind == "pool":
            h, w = h // 2, w // 2
            if h == 0 or w == 0:
                raise DescriptorError("pooling shrinks the image to nothing")
            layers.append(MaxPool2D())
        elif spec.kind == "dropout":
            layers.append(Dropout(spec.arg))
        elif spec.kind == "flatten":
            flat_dim = h * w * c
            layers.append(Flatten())
        elif spec.kind == "dense":
            layers.append(Dense(flat_dim, int(spec.arg)))
            flat_dim = int(spec.arg)
        elif spec.kind == "softmax":
            layers.append(SoftmaxOutput(flat_dim, int(spec.arg)))
    for layer in layers:
        if hasattr(layer, "init_params"):
            layer.init_params(rng)
    return Network(layers)


def expand_output(net, new_total_classes, seed):
    """Grow the output layer to cover newly arrived classes.

    Old-class weights and biases are copied bit-identically, so old-class
    logits are unchanged for every input; new-unit weights are small
    zero-mean normal draws and new biases are exactly zero.
    """
    old = net.output_layer
    if new_total_classes <= old.classes:
        raise NoOpError(
            f"already have {old.classes} classes; asked for "
            f"{new_total_classes}")
    rng = np.random.default_rng(seed)
    grown = SoftmaxOutput(old.in_dim, new_total_classes, old.W.dtype)
    grown.W[:, :old.classes] = old.W
    grown.W[:, old.classes:] = rng.normal(
        0.0, OUTPUT_INIT_SIGMA,
        size=(old.in_dim, new_total_classes - old.classes)).astype(old.W.dtype)
    grown.b[:old.classes] = old.b
    clone = net.clone()
    clone.layers[-1] = grown
    return Network(clone.layers)


def widen_sites(desc):
    """Indices of layers eligible for widening: convs and hidden denses."""
    return [i for i, s in enumerate(desc.specs)
            if s.kind in ("conv", "dense")]


def deepen_sites(desc):
    """Insertion points: (spec_index, kind) meaning a new identity layer of
    `kind` goes in at spec_index, i.e. directly after an existing conv or
    hidden dense layer."""
    return [(i + 1, s.kind) for i, s in enumerate(desc.specs)
            if s.kind in ("conv", "dense")]


def descriptor_of(net, input_shape):
    """Re-derive the symbolic descriptor of an instantiated network."""
    specs = []
    for layer in net.layers:
        if isinstance(layer, Conv2D):
            specs.append(LayerSpec("conv", layer.out_ch))
        elif isinstance(layer, MaxPool2D):
            specs.append(LayerSpec("pool"))
        elif isinstance(layer, Dropout):
            specs.append(LayerSpec("dropout", layer.rate))
        elif isinstance(layer, Flatten):
            specs.append(LayerSpec("flatten"))
        elif isinstance(layer, SoftmaxOutput):
            specs.append(LayerSpec("softmax", layer.classes))
        elif isinstance(layer, Dense):
            specs.append(LayerSpec("dense", layer.out_dim))
    return ArchDescriptor(input_shape, specs)
