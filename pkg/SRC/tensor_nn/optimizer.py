"""Adam optimizer over named parameter tensors."""

from dataclasses import dataclass, field
from typing import Dict, Mapping, MutableMapping

import numpy as np

from ..shared.exceptions import ShapeError


@dataclass
class AdamState:
    """Moment estimates and step counter for one parameter set.

    Moments are zero-initialized and keyed by parameter name; their shapes
    always mirror the parameter they track.
    """
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def create(
        cls,
        params: Mapping[str, np.ndarray],
        learning_rate: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ) -> "AdamState":
        return cls(
            learning_rate=learning_rate,
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
            first_moment={name: np.zeros_like(p) for name, p in params.items()},
            second_moment={name: np.zeros_like(p) for name, p in params.items()},
        )


def adam_step(
    params: MutableMapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> AdamState:
    """Apply one bias-corrected Adam update in place.

    Only parameters named in grads move. The caller must hold exclusive
    access to params and state.

    Preconditions: every gradient has the shape of its parameter
    Postconditions: params updated, state.step incremented by one
    Raises: ShapeError
    """
    for name, grad in grads.items():
        if name not in params:
            raise ShapeError(f"gradient for unknown parameter {name}")
        if grad.shape != params[name].shape:
            raise ShapeError(
                f"gradient shape {tuple(grad.shape)} does not match parameter {name} {tuple(params[name].shape)}"
            )

    t = state.step + 1
    bias1 = 1.0 - state.beta1 ** t
    bias2 = 1.0 - state.beta2 ** t
    for name, grad in grads.items():
        theta = params[name]
        m = state.first_moment.setdefault(name, np.zeros_like(theta))
        v = state.second_moment.setdefault(name, np.zeros_like(theta))
        if m.shape != theta.shape or v.shape != theta.shape:
            raise ShapeError(f"moment shapes for {name} do not mirror {tuple(theta.shape)}")
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * (grad * grad)
        m_hat = m / bias1
        v_hat = v / bias2
        theta -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    state.step = t
    return state
