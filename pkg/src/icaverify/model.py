"""Feed-forward ReLU networks: loading, evaluation and neuron enumeration."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

RELU = "relu"
LINEAR = "linear"
_ACTIVATIONS = (RELU, LINEAR)


class NetworkError(ValueError):
    """Malformed network document or inconsistent layer shapes."""


class NeuronId(NamedTuple):
    """1-based (layer, neuron) address of a ReLU neuron."""

    layer: int
    neuron: int

    def __str__(self):
        return f"r{self.layer}_{self.neuron}"


@dataclass(frozen=True, eq=False)
class Layer:
    weights: np.ndarray
    bias: np.ndarray
    activation: str = RELU

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


class Network:
    """An immutable stack of fully connected layers.

    Each layer computes ``z = W x + b`` followed by ``max(0, z)`` for relu
    layers or the identity for linear ones.
    """

    def __init__(self, layers):
        layers = list(layers)
        if not layers:
            raise NetworkError("network needs at least one layer")
        checked = []
        for i, layer in enumerate(layers):
            w = np.array(layer.weights, dtype=np.float64)
            b = np.array(layer.bias, dtype=np.float64)
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise NetworkError(f"layer {i + 1}: weights/bias shapes {w.shape}, {b.shape} do not match")
            if w.shape[0] == 0 or w.shape[1] == 0:
                raise NetworkError(f"layer {i + 1}: empty weight matrix")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NetworkError(f"layer {i + 1}: non-finite entry")
            if layer.activation not in _ACTIVATIONS:
                raise NetworkError(f"layer {i + 1}: unknown activation {layer.activation!r}")
            if checked and checked[-1].out_dim != w.shape[1]:
                raise NetworkError(
                    f"layer {i + 1} expects {w.shape[1]} inputs but layer {i} produces {checked[-1].out_dim}"
                )
            w.setflags(write=False)
            b.setflags(write=False)
            checked.append(Layer(w, b, layer.activation))
        self.layers = tuple(checked)
        self._relus = tuple(
            NeuronId(li + 1, j + 1)
            for li, layer in enumerate(self.layers)
            if layer.activation == RELU
            for j in range(layer.out_dim)
        )

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def num_relus(self) -> int:
        return len(self._relus)

    def relu_neurons(self) -> list[NeuronId]:
        return list(self._relus)

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.input_dim,):
            raise NetworkError(f"expected input of length {self.input_dim}, got shape {x.shape}")
        for layer in self.layers:
            x = layer.weights @ x + layer.bias
            if layer.activation == RELU:
                x = np.maximum(x, 0.0)
        return x

    def pre_activations(self, x) -> list[np.ndarray]:
        """Pre-activation vector of every layer at input ``x``."""
        x = np.asarray(x, dtype=np.float64)
        pres = []
        for layer in self.layers:
            z = layer.weights @ x + layer.bias
            pres.append(z)
            x = np.maximum(z, 0.0) if layer.activation == RELU else z
        return pres

    def to_dict(self) -> dict:
        return {
            "layers": [
                {"weights": layer.weights.tolist(), "bias": layer.bias.tolist(), "activation": layer.activation}
                for layer in self.layers
            ]
        }

    def __repr__(self):
        widths = [self.input_dim] + [layer.out_dim for layer in self.layers]
        return f"Network({'->'.join(map(str, widths))}, relus={self.num_relus})"


def evaluate(net: Network, x) -> np.ndarray:
    return net.evaluate(x)


def relu_neurons(net: Network) -> list[NeuronId]:
    return net.relu_neurons()


def load_network(text: str) -> Network:
    """Parse a JSON network document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise NetworkError(f"malformed network document: {e}") from e
    return network_from_dict(doc)


def network_from_dict(doc) -> Network:
    if not isinstance(doc, dict) or not isinstance(doc.get("layers"), list):
        raise NetworkError("network document must be an object with a 'layers' list")
    layers = []
    for i, entry in enumerate(doc["layers"]):
        try:
            w = np.array(entry["weights"], dtype=np.float64)
            b = np.array(entry["bias"], dtype=np.float64)
            act = entry.get("activation", RELU)
        except (KeyError, TypeError, ValueError) as e:
            raise NetworkError(f"layer {i + 1}: malformed entry ({e})") from e
        layers.append(Layer(w, b, act))
    return Network(layers)


def random_network(rng: np.random.Generator, widths, scale=1.0) -> Network:
    """Dense net with uniform weights in [-scale, scale]; relu on all but the last layer."""
    layers = []
    for i, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:])):
        act = LINEAR if i == len(widths) - 2 else RELU
        layers.append(
            Layer(rng.uniform(-scale, scale, (n_out, n_in)), rng.uniform(-scale, scale, n_out), act)
        )
    return Network(layers)
