"""Central-difference gradient checking for manually written backward passes."""

import math

import numpy as np

from stacksql.numerics.linalg import NumericError


def grad_check(loss_and_grads, params, h=1e-3, param_names=None):
    """Compare analytic gradients against central finite differences.

    loss_and_grads(params) must return (loss, grads) with grads a dict of
    arrays parallel to params.  Every coordinate of every checked parameter
    is perturbed by +/- h.  Returns the maximum over coordinates of

        |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
    """
    loss, analytic = loss_and_grads(params)
    if not math.isfinite(loss):
        raise NumericError("loss is not finite at the evaluation point")
    names = sorted(params) if param_names is None else list(param_names)
    worst = 0.0
    for name in names:
        p = params[name]
        g = analytic[name]
        flat = p.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for idx in range(flat.shape[0]):
            orig = flat[idx]
            flat[idx] = orig + h
            lp = loss_and_grads(params)[0]
            flat[idx] = orig - h
            lm = loss_and_grads(params)[0]
            flat[idx] = orig
            if not (math.isfinite(lp) and math.isfinite(lm)):
                raise NumericError(f"non-finite loss while perturbing {name}[{idx}]")
            numeric = (lp - lm) / (2.0 * h)
            denom = max(abs(gflat[idx]), abs(numeric), 1e-8)
            err = abs(gflat[idx] - numeric) / denom
            if err > worst:
                worst = err
    return worst
