"""Adam optimizer over named parameter dictionaries."""

from dataclasses import dataclass, field

import numpy as np

from stacksql.numerics.linalg import ShapeError


@dataclass
class AdamState:
    """First/second moment accumulators mirroring the parameter shapes."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def init_adam(params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    for name, p in params.items():
        state.m[name] = np.zeros_like(p)
        state.v[name] = np.zeros_like(p)
    return state


def adam_step(state, params, grads):
    """One bias-corrected Adam update, applied in place.

    Returns (params, state) for convenience; both are mutated.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name in params:
        g = grads[name]
        p = params[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != param shape {p.shape} for {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        mhat = m / c1
        vhat = v / c2
        p -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return params, state
