"""
Adam with bias correction
"""
import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from app.errors import InvalidArgumentError, NumericalFaultError
from app.neuralnet.layers import Parameter

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """First/second moment estimates per parameter array and the step count"""
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], t=0)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> Tuple[List[np.ndarray], AdamState]:
    """
    One Adam update, returning new arrays and a new state

    Raises:
        InvalidArgumentError: mismatched shapes
        NumericalFaultError: an update would produce a non-finite value
    """
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise InvalidArgumentError("params, grads and state must have the same length")
    t = state.t + 1
    bias1 = 1.0 - beta1 ** t
    bias2 = 1.0 - beta2 ** t
    new_params, new_m, new_v = [], [], []
    for i, (p, g, m, v) in enumerate(zip(params, grads, state.m, state.v)):
        if p.shape != g.shape or m.shape != p.shape:
            raise InvalidArgumentError(f"Shape mismatch at parameter {i}: {p.shape} vs {g.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        update = lr * (m / bias1) / (np.sqrt(v / bias2) + eps)
        candidate = p - update
        if not np.all(np.isfinite(candidate)):
            raise NumericalFaultError(f"Non-finite Adam update for parameter {i}", layer_index=i)
        new_params.append(candidate)
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(m=new_m, v=new_v, t=t)


class Adam:
    """Stateful wrapper updating Parameter objects in place"""

    def __init__(self, parameters: Sequence[Parameter], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.parameters = list(parameters)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState.zeros_like([p.value for p in self.parameters])

    def zero_grad(self):
        for p in self.parameters:
            p.zero_grad()

    def step(self):
        try:
            values, self.state = adam_step(
                [p.value for p in self.parameters], [p.grad for p in self.parameters], self.state,
                self.lr, self.beta1, self.beta2, self.eps,
            )
        except NumericalFaultError as e:
            name = self.parameters[e.layer_index].name if e.layer_index is not None else "?"
            logger.error(f"Adam step {self.state.t + 1}: non-finite update for {name}")
            raise NumericalFaultError(f"Non-finite Adam update for {name}", layer_index=e.layer_index) from e
        for p, value in zip(self.parameters, values):
            p.value = value
