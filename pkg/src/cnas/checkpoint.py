"""Binary network checkpoints.

Format (little-endian throughout):

    magic   4 bytes  b"CNAS"
    version u16      currently 1
    count   u32      number of layers
    layer table, one entry per layer:
        kind u8, then kind-specific fields:
          1 Dense         in u32, out u32, relu u8
          2 Conv2D        in_ch u32, out_ch u32
          3 MaxPool2D     -
          4 Dropout       rate f32
          5 Flatten       -
          6 SoftmaxOutput in u32, classes u32
    parameter blocks: for each parameterized layer in order, W then b,
    raw float32 values in row-major order.
"""
import struct

import numpy as np

from .errors import FormatError
from .layers import Conv2D, Dense, Dropout, Flatten, MaxPool2D, SoftmaxOutput
from .network import Network

MAGIC = b"CNAS"
VERSION = 1

_DENSE, _CONV, _POOL, _DROPOUT, _FLATTEN, _SOFTMAX = range(1, 7)


def save_network(net, path):
    with open(path, "wb") as f:
        f.write(network_bytes(net))


def network_bytes(net):
    out = [MAGIC, struct.pack("<H", VERSION),
           struct.pack("<I", len(net.layers))]
    for layer in net.layers:
        if isinstance(layer, Dense):
            out.append(struct.pack("<BIIB", _DENSE, layer.in_dim,
                                   layer.out_dim,
                                   1 if layer.activation == "relu" else 0))
        elif isinstance(layer, Conv2D):
            out.append(struct.pack("<BII", _CONV, layer.in_ch, layer.out_ch))
        elif isinstance(layer, MaxPool2D):
            out.append(struct.pack("<B", _POOL))
        elif isinstance(layer, Dropout):
            out.append(struct.pack("<Bf", _DROPOUT, layer.rate))
        elif isinstance(layer, Flatten):
            out.append(struct.pack("<B", _FLATTEN))
        elif isinstance(layer, SoftmaxOutput):
            out.append(struct.pack("<BII", _SOFTMAX, layer.in_dim,
                                   layer.classes))
        else:
            raise FormatError(f"unserializable layer {type(layer).__name__}")
    for layer in net.layers:
        for p in layer.params():
            out.append(np.ascontiguousarray(p, dtype="<f4").tobytes())
    return b"".join(out)


def load_network(path):
    with open(path, "rb") as f:
        return network_from_bytes(f.read())


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def unpack(self, fmt):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise FormatError("truncated checkpoint")
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals

    def array(self, shape):
        size = 4 * int(np.prod(shape))
        if self.pos + size > len(self.data):
            raise FormatError("truncated parameter block")
        a = np.frombuffer(self.data, dtype="<f4", count=int(np.prod(shape)),
                          offset=self.pos).reshape(shape)
        self.pos += size
        return np.ascontiguousarray(a, dtype=np.float32)


def network_from_bytes(data):
    r = _Reader(data)
    if bytes(r.unpack("<4s")[0]) != MAGIC:
        raise FormatError("bad magic; not a network checkpoint")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    (count,) = r.unpack("<I")
    layers = []
    for _ in range(count):
        (kind,) = r.unpack("<B")
        if kind == _DENSE:
            in_dim, out_dim, act = r.unpack("<IIB")
            layers.append(Dense(in_dim, out_dim,
                                "relu" if act else "identity"))
        elif kind == _CONV:
            in_ch, out_ch = r.unpack("<II")
            layers.append(Conv2D(in_ch, out_ch))
        elif kind == _POOL:
            layers.append(MaxPool2D())
        elif kind == _DROPOUT:
            layers.append(Dropout(r.unpack("<f")[0]))
        elif kind == _FLATTEN:
            layers.append(Flatten())
        elif kind == _SOFTMAX:
            in_dim, classes = r.unpack("<II")
            layers.append(SoftmaxOutput(in_dim, classes))
        else:
            raise FormatError(f"unknown layer kind {kind}")
    for layer in layers:
        for p in layer.params():
            np.copyto(p, r.array(p.shape))
    if r.pos != len(data):
        raise FormatError("trailing bytes after parameter blocks")
    return Network(layers)
