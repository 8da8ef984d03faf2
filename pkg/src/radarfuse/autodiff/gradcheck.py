from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

from .tensor import NonFiniteError, Tape, Tensor


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    return np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))


def numeric_gradient(function: Callable[[], Tensor], param: Tensor, step: float = 1e-5) -> np.ndarray:
    """Central differences of ``function()`` w.r.t. every entry of ``param``."""
    flat = param.data.reshape(-1)
    out = np.empty(flat.shape[0])
    for i in range(flat.shape[0]):
        orig = flat[i]
        flat[i] = orig + step
        fp = float(function().data)
        flat[i] = orig - step
        fm = float(function().data)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"non-finite function value while perturbing coordinate {i}")
        out[i] = (fp - fm) / (2.0 * step)
    return out.reshape(param.shape)


def grad_check(
    function: Callable[[], Tensor],
    params: Mapping[str, Tensor] | Sequence[Tensor],
    step: float = 1e-5,
    return_detail: bool = False,
):
    """Max relative error between tape gradients and central differences.

    ``function`` must be deterministic in ``params`` and return a scalar.
    With ``return_detail`` the per-parameter maxima come back as well.
    """
    named = dict(params) if isinstance(params, Mapping) else {str(i): p for i, p in enumerate(params)}
    with Tape() as tape:
        value = function()
    if not np.all(np.isfinite(value.data)):
        raise NonFiniteError("function value is not finite")
    analytic = tape.backward(value, named)
    worst = 0.0
    detail = {}
    for name, p in named.items():
        num = numeric_gradient(function, p, step)
        err = float(relative_error(analytic[name], num).max()) if p.size else 0.0
        detail[name] = err
        worst = max(worst, err)
    if return_detail:
        return worst, detail
    return worst
