"""Task network: an ordered stack of layers ending in a softmax output."""
import numpy as np

from .errors import ShapeError
from .layers import Conv2D, Dense, Dropout, Flatten, MaxPool2D, SoftmaxOutput


class Network:
    """Instantiated network: topology plus parameters.

    The final layer must be a SoftmaxOutput; `class_count` is its width.
    """

    def __init__(self, layers):
        if not layers or not isinstance(layers[-1], SoftmaxOutput):
            raise ShapeError("network must end in a SoftmaxOutput layer")
        self.layers = list(layers)

    @property
    def class_count(self):
        return self.layers[-1].classes

    @property
    def output_layer(self):
        return self.layers[-1]

    def forward(self, batch, training=False, rng=None):
        """Class probabilities for a batch; rows sum to 1."""
        x = batch
        for layer in self.layers:
            x = layer.forward(x, training=training, rng=rng)
        return x

    def forward_logits(self, batch):
        """Pre-softmax logits (evaluation mode)."""
        self.forward(batch, training=False)
        return self.output_layer.logits

    def backward(self, dlogits):
        """Backpropagate a gradient w.r.t. the output logits.

        Populates each layer's parameter gradients and returns the
        gradient w.r.t. the network input.
        """
        d = dlogits
        for layer in reversed(self.layers):
            d = layer.backward(d)
        return d

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def grads(self):
        out = []
        for layer in self.layers:
            out.extend(layer.grads())
        return out

    def count_params(self):
        return sum(int(p.size) for p in self.params())

    def clone(self):
        return Network([layer.clone() for layer in self.layers])

    def set_params_from(self, other):
        """Copy parameter values from a network with identical topology."""
        for mine, theirs in zip(self.params(), other.params()):
            np.copyto(mine, theirs)

    def hidden_layers(self):
        """(index, layer) pairs for parameterized hidden layers."""
        return [(i, l) for i, l in enumerate(self.layers)
                if isinstance(l, (Dense, Conv2D))]


def count_params(net):
    """Exact count of weight and bias elements.

    Accepts a Network or a bare iterable of layers.
    """
    if isinstance(net, Network):
        return net.count_params()
    return sum(int(p.size) for layer in net for p in layer.params())


__all__ = [
    "Network", "count_params",
    "Conv2D", "Dense", "Dropout", "Flatten", "MaxPool2D", "SoftmaxOutput",
]
