"""
Differentiable building blocks implemented on numpy

Every layer caches what its backward pass needs during forward, so a
backward call must follow the forward call whose gradient it computes.
Layers switch between train and eval behaviour through ``train()`` /
``eval()``; only BatchNorm and the VAE sampling step actually differ.
"""
import logging
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy.special import expit

from app.errors import InvalidArgumentError, NumericalFaultError

logger = logging.getLogger(__name__)


class Parameter:
    """Trainable array with its accumulated gradient"""

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.requires_grad = True

    @property
    def size(self) -> int:
        return int(self.value.size)

    def zero_grad(self):
        self.grad.fill(0.0)

    def __repr__(self) -> str:
        return f"Parameter({self.name}, shape={self.value.shape})"


class Layer:
    """Base class: identity in both directions, no parameters"""

    def __init__(self, name: str = ""):
        self.name = name
        self.training = True

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return grad_out

    def parameters(self) -> List[Parameter]:
        return []

    def buffers(self) -> Dict[str, np.ndarray]:
        return {}

    def set_buffer(self, key: str, value: np.ndarray):
        raise KeyError(f"{type(self).__name__} has no buffer {key}")

    def train(self, mode: bool = True):
        self.training = mode
        return self

    def eval(self):
        return self.train(False)


class Dense(Layer):
    """
    Fully connected layer y = x W^T + b

    Weights use uniform He-style fan-in initialization.
    """

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, name: str = ""):
        super().__init__(name)
        self.in_features = in_features
        self.out_features = out_features
        limit = np.sqrt(6.0 / in_features)
        self.weight = Parameter(f"{name}.weight", rng.uniform(-limit, limit, size=(out_features, in_features)))
        self.bias = Parameter(f"{name}.bias", np.zeros(out_features))
        self._x: Optional[np.ndarray] = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.weight.value.T + self.bias.value

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self.weight.requires_grad:
            self.weight.grad += grad_out.T @ self._x
            self.bias.grad += grad_out.sum(axis=0)
        return grad_out @ self.weight.value

    def parameters(self) -> List[Parameter]:
        return [self.weight, self.bias]

    def __repr__(self) -> str:
        return f"Dense({self.in_features}->{self.out_features})"


class ReLU(Layer):

    def __init__(self, name: str = ""):
        super().__init__(name)
        self.mask: Optional[np.ndarray] = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.mask = x > 0.0
        return np.where(self.mask, x, 0.0)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return grad_out * self.mask


class Sigmoid(Layer):

    def __init__(self, name: str = ""):
        super().__init__(name)
        self._y: Optional[np.ndarray] = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._y = expit(x)
        return self._y

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        return grad_out * self._y * (1.0 - self._y)


class BatchNorm(Layer):
    """
    Per-feature batch normalization

    Train mode normalizes with the batch statistics and updates the running
    estimates (mean, unbiased variance) with the given momentum. Eval mode
    normalizes with the running estimates and mutates nothing.
    """

    def __init__(self, n_features: int, momentum: float = 0.1, eps: float = 1e-5, name: str = ""):
        super().__init__(name)
        self.n_features = n_features
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(f"{name}.gamma", np.ones(n_features))
        self.beta = Parameter(f"{name}.beta", np.zeros(n_features))
        self.running_mean = np.zeros(n_features)
        self.running_var = np.ones(n_features)
        self._xhat: Optional[np.ndarray] = None
        self._inv_std: Optional[np.ndarray] = None
        self._batch_mode = False

    def forward(self, x: np.ndarray) -> np.ndarray:
        if self.training:
            n = x.shape[0]
            if n < 2:
                raise InvalidArgumentError(f"{self.name}: train-mode batch norm needs at least 2 rows, got {n}")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + self.eps)
            self.running_mean = (1.0 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1.0 - self.momentum) * self.running_var + self.momentum * var * n / (n - 1)
            self._batch_mode = True
        else:
            mean = self.running_mean
            inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
            self._batch_mode = False
        self._xhat = (x - mean) * inv_std
        self._inv_std = inv_std
        return self.gamma.value * self._xhat + self.beta.value

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self.gamma.requires_grad:
            self.gamma.grad += (grad_out * self._xhat).sum(axis=0)
            self.beta.grad += grad_out.sum(axis=0)
        dxhat = grad_out * self.gamma.value
        if not self._batch_mode:
            return dxhat * self._inv_std
        n = grad_out.shape[0]
        return (self._inv_std / n) * (
            n * dxhat - dxhat.sum(axis=0) - self._xhat * (dxhat * self._xhat).sum(axis=0)
        )

    def parameters(self) -> List[Parameter]:
        return [self.gamma, self.beta]

    def buffers(self) -> Dict[str, np.ndarray]:
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def set_buffer(self, key: str, value: np.ndarray):
        if key not in ("running_mean", "running_var"):
            super().set_buffer(key, value)
        setattr(self, key, np.array(value, dtype=np.float64))


class Sequential(Layer):
    """
    Ordered stack of layers

    Forward checks every intermediate for non-finite values and reports the
    index of the first offending layer.
    """

    def __init__(self, layers: Sequence[Layer], name: str = ""):
        super().__init__(name)
        self.layers: List[Layer] = list(layers)

    def forward(self, x: np.ndarray) -> np.ndarray:
        for i, layer in enumerate(self.layers):
            x = layer.forward(x)
            if not np.all(np.isfinite(x)):
                logger.error(f"Non-finite activation in {self.name} layer {i} ({layer!r})")
                raise NumericalFaultError(f"Non-finite activation in {self.name} layer {i}", layer_index=i)
        return x

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out

    def parameters(self) -> List[Parameter]:
        return [p for layer in self.layers for p in layer.parameters()]

    def buffers(self) -> Dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            for key, value in layer.buffers().items():
                out[f"{i}.{key}"] = value
        return out

    def set_buffer(self, key: str, value: np.ndarray):
        index, _, sub = key.partition(".")
        self.layers[int(index)].set_buffer(sub, value)

    def train(self, mode: bool = True):
        self.training = mode
        for layer in self.layers:
            layer.train(mode)
        return self

    def relu_masks(self) -> Iterable[np.ndarray]:
        for layer in self.layers:
            if isinstance(layer, ReLU) and layer.mask is not None:
                yield layer.mask

    def __repr__(self) -> str:
        return f"Sequential({self.name}: {', '.join(repr(l) for l in self.layers)})"


def dense_block(in_features: int, out_features: int, rng: np.random.Generator, name: str,
                momentum: float = 0.1, eps: float = 1e-5) -> List[Layer]:
    """Dense -> BatchNorm -> ReLU"""
    return [
        Dense(in_features, out_features, rng, name=f"{name}.dense"),
        BatchNorm(out_features, momentum=momentum, eps=eps, name=f"{name}.bn"),
        ReLU(name=f"{name}.relu"),
    ]
