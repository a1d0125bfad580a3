"""
Optimizador Adam sobre diccionarios de parámetros con nombre
"""

from typing import Dict, Iterable, Mapping, Optional, Set

import numpy as np

from .tensor import Tensor


class Adam:
    """
    Adam con corrección de sesgo

    Los parámetros listados en `frozen` no se actualizan (p. ej. g durante
    el calentamiento) pero conservan sus momentos en cero.
    """

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m: Dict[str, np.ndarray] = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v: Dict[str, np.ndarray] = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()

    def step(self, frozen: Optional[Iterable[str]] = None) -> None:
        frozen_names: Set[str] = set(frozen or ())
        self.step_count += 1
        correction1 = 1.0 - self.beta1**self.step_count
        correction2 = 1.0 - self.beta2**self.step_count

        # orden fijo de nombres para que la actualización sea determinista
        for name in sorted(self.params):
            if name in frozen_names:
                continue
            tensor = self.params[name]
            if tensor.grad is None:
                continue
            grad = tensor.grad
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad * grad
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            tensor.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
