"""Parameter storage, global gradient clipping, and online update rules."""

import math

import numpy as np

from .autodiff import Tensor


class ParameterStore:
    """Named parameter tensors with persistent gradient accumulators.

    Gradients are materialized as zeros at registration so update code
    never has to special-case a parameter that no forward pass touched.
    """

    def __init__(self):
        self._params = {}

    def register(self, name: str, data) -> Tensor:
        if name in self._params:
            raise ValueError(f"parameter {name!r} already registered")
        t = Tensor(data)
        t.zero_grad()
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def size(self) -> int:
        """Total number of scalar parameters."""
        return sum(t.data.size for t in self._params.values())

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def grad_norm(self) -> float:
        """Euclidean norm of all gradients taken together."""
        total = 0.0
        for t in self._params.values():
            g = t.grad.ravel()
            total += float(np.dot(g, g))
        return math.sqrt(total)

    def snapshot(self) -> dict:
        return {name: t.data.copy() for name, t in self._params.items()}

    def restore(self, snap: dict) -> None:
        if set(snap) != set(self._params):
            raise ValueError("snapshot does not match the registered parameters")
        for name, arr in snap.items():
            self._params[name].data[...] = arr


def clip_gradient_norm(store: ParameterStore, threshold: float) -> float:
    """Scale all gradients so their joint norm is at most the threshold.

    Returns the factor applied, min(1, threshold / norm).  A zero
    gradient is left alone.
    """
    if threshold <= 0.0:
        raise ValueError(f"clip threshold must be positive, got {threshold}")
    norm = store.grad_norm()
    if norm <= threshold:
        return 1.0
    factor = threshold / norm
    for _, t in store.items():
        t.grad *= factor
    return factor


class Sgd:
    """Plain stochastic gradient descent."""

    method = "sgd"

    def __init__(self, learning_rate: float):
        if learning_rate <= 0.0:
            raise ValueError(f"learning rate must be positive, got {learning_rate}")
        self.learning_rate = learning_rate
        self.step_count = 0

    def step(self, store: ParameterStore) -> None:
        for _, t in store.items():
            t.data -= self.learning_rate * t.grad
        self.step_count += 1
        store.zero_grads()


class Adam:
    """Adam updates with bias-corrected first and second moments."""

    method = "adam"

    def __init__(self, learning_rate: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if learning_rate <= 0.0:
            raise ValueError(f"learning rate must be positive, got {learning_rate}")
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = {}
        self._v = {}

    def step(self, store: ParameterStore) -> None:
        self.step_count += 1
        t = self.step_count
        correct1 = 1.0 - self.beta1 ** t
        correct2 = 1.0 - self.beta2 ** t
        for name, p in store.items():
            m = self._m.get(name)
            if m is None:
                m = self._m[name] = np.zeros_like(p.data)
                self._v[name] = np.zeros_like(p.data)
            v = self._v[name]
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.learning_rate * (m / correct1) / (np.sqrt(v / correct2) + self.eps)
        store.zero_grads()


def make_optimizer(method: str, learning_rate: float):
    name = method.lower()
    if name == "sgd":
        return Sgd(learning_rate)
    if name == "adam":
        return Adam(learning_rate)
    raise ValueError(f"unknown optimizer {method!r}; use sgd or adam")
