"""Shared test utilities: finite-difference gradient checking."""

from __future__ import annotations

import numpy as np


def central_difference(f, x: float, step_scale: float = 1e-6) -> float:
    """Two-sided finite difference with a step of ``step_scale`` of |x|."""
    h = step_scale * max(1.0, abs(x))
    return (f(x + h) - f(x - h)) / (2.0 * h)


def check_gradient(analytic: float, numeric: float,
                   rel_tol: float = 1e-5, abs_tol: float = 1e-8) -> bool:
    diff = abs(analytic - numeric)
    if diff <= abs_tol:
        return True
    return diff <= rel_tol * max(abs(analytic), abs(numeric))


def assert_gradients_match(f, x: float, analytic: float, label: str = "") -> None:
    numeric = central_difference(f, x)
    assert check_gradient(analytic, numeric), (
        f"gradient mismatch {label}: analytic={analytic!r} numeric={numeric!r}"
    )


def perturbed_scalar_function(fn, args: list, index: int, value_index: int = 0):
    """Wrap fn so only args[index] varies; returns the scalar loss value."""

    def wrapped(x):
        new_args = list(args)
        new_args[index] = x
        out = fn(*new_args)
        return out[value_index] if isinstance(out, tuple) else out

    return wrapped


def rigid_transform(points: np.ndarray, angle: float, offset) -> np.ndarray:
    """Rotate (..., 2) points by ``angle`` about the origin, then translate."""
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    return points @ rot.T + np.asarray(offset, dtype=float)
