"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import MissingGradientError


@dataclass
class OptimizerState:
    learning_rate: float = 0.0008
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


class Adam:
    """Adam over a named parameter registry.

    ``params`` is a mapping ``name -> Parameter`` (or any iterable of
    ``(name, tensor)`` pairs). Non-trainable parameters are skipped.
    Gradients are cleared after every step.
    """

    def __init__(self, params, learning_rate=0.0008, beta1=0.9, beta2=0.999, epsilon=1e-7):
        items = params.items() if hasattr(params, "items") else params
        self.params = [(name, p) for name, p in items if getattr(p, "trainable", True)]
        self.state = OptimizerState(learning_rate, beta1, beta2, epsilon)
        for name, p in self.params:
            self.state.first_moment[name] = np.zeros_like(p.data)
            self.state.second_moment[name] = np.zeros_like(p.data)

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None

    def step(self) -> None:
        missing = [name for name, p in self.params if p.grad is None]
        if missing:
            raise MissingGradientError(f"no gradient for {missing[:3]}{'...' if len(missing) > 3 else ''}; "
                                       "call backward() before step()")
        s = self.state
        s.step_count += 1
        t = s.step_count
        correction1 = 1.0 - s.beta1 ** t
        correction2 = 1.0 - s.beta2 ** t
        for name, p in self.params:
            g = p.grad
            m = s.first_moment[name]
            v = s.second_moment[name]
            m *= s.beta1
            m += (1.0 - s.beta1) * g
            v *= s.beta2
            v += (1.0 - s.beta2) * (g * g)
            m_hat = m / correction1
            v_hat = v / correction2
            update = s.learning_rate * m_hat / (np.sqrt(v_hat) + s.epsilon)
            p.data -= update.astype(p.data.dtype, copy=False)
            p.grad = None
