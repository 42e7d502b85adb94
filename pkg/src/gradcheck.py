"""
Central finite differences for checking analytic gradients.

Functions are evaluated on stacks of perturbed points, one row per
perturbation, so a full gradient costs a single vectorized call.
"""
from __future__ import annotations

import logging
from typing import Callable, Dict, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

logger = logging.getLogger(__name__)

MU_STEP = 1e-5
KAPPA_REL_STEP = 1e-5
PARAM_STEP = 1e-6
ERROR_FLOOR = 1e-2

VectorFn = Callable[[NDArray[np.float64]], NDArray[np.float64]]


def relative_error(analytic: ArrayLike, numeric: ArrayLike, floor: float = ERROR_FLOOR) -> float:
    """||a - b|| / max(||a||, ||b||, floor)."""
    a = np.ravel(np.asarray(analytic, dtype=float))
    b = np.ravel(np.asarray(numeric, dtype=float))
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), floor)
    return float(np.linalg.norm(a - b)) / scale


def central_differences(
    fn: VectorFn,
    x: ArrayLike,
    steps: ArrayLike,
    unit_blocks: Sequence[slice] = (),
) -> NDArray[np.float64]:
    """
    Central-difference gradient of ``fn`` at ``x``.

    Args:
        fn: Maps an ``(m, n)`` stack of points to ``(m,)`` values.
        x: Point of shape ``(n,)``.
        steps: Step per coordinate, shape ``(n,)`` or scalar.
        unit_blocks: Coordinate slices holding unit vectors. Perturbed points
            are renormalized on these blocks, so the result there is the
            tangent (Riemannian) gradient.

    Returns:
        Gradient estimate of shape ``(n,)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    h = np.broadcast_to(np.asarray(steps, dtype=float), (n,))
    shift = np.diag(h)
    points = np.concatenate([x + shift, x - shift], axis=0)
    for block in unit_blocks:
        seg = points[:, block]
        points[:, block] = seg / np.linalg.norm(seg, axis=1, keepdims=True)
    values = fn(points)
    return (values[:n] - values[n:]) / (2.0 * h)


def parameter_differences(
    objective: Callable[[Dict[str, NDArray[np.float64]]], float],
    params: Dict[str, NDArray[np.float64]],
    step: float = PARAM_STEP,
) -> Dict[str, NDArray[np.float64]]:
    """Entry-by-entry central differences of a scalar objective over a parameter dict."""
    grads: Dict[str, NDArray[np.float64]] = {}
    for name, value in params.items():
        g = np.zeros(np.shape(value))
        flat = g.reshape(-1)
        for i in range(flat.size):
            plus = {k: v.copy() for k, v in params.items()}
            minus = {k: v.copy() for k, v in params.items()}
            plus[name].reshape(-1)[i] += step
            minus[name].reshape(-1)[i] -= step
            flat[i] = (objective(plus) - objective(minus)) / (2.0 * step)
        grads[name] = g
        logger.debug("finite differences for %s: %d entries", name, flat.size)
    return grads
