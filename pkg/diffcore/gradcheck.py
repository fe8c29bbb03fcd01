from dataclasses import dataclass

import numpy as np

from diffcore.tensor import DTYPE, as_tensor


@dataclass(frozen=True)
class GradCheckReport:
    rel_error: float
    max_abs_error: float
    worst_index: tuple
    tol: float
    num_coords: int

    @property
    def passed(self):
        return self.rel_error <= self.tol


def relative_error(analytic, numeric):
    """||a - n|| / (||a|| + ||n||); 0 when both gradients vanish."""
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    return float(np.linalg.norm(analytic - numeric) / max(scale, 1e-12))


def numeric_gradient(f, point, h=1e-3, coords=None):
    """Central differences of the scalar f at point.

    f takes a float32 array and returns either a scalar or (scalar, grad).
    The step actually taken is the float32-rounded one.
    """
    point = as_tensor(point, "grad_check point")
    grad = np.zeros(point.shape, dtype=np.float64)
    shifted = point.copy()
    indices = np.ndindex(point.shape) if coords is None else coords
    for index in indices:
        original = shifted[index]
        plus = DTYPE(original + h)
        minus = DTYPE(original - h)
        shifted[index] = plus
        f_plus = _value(f(shifted))
        shifted[index] = minus
        f_minus = _value(f(shifted))
        shifted[index] = original
        grad[index] = (f_plus - f_minus) / (float(plus) - float(minus))
    return grad


def grad_check(f, point, h=1e-3, tol=1e-2, coords=None):
    """Compare the analytic gradient returned by f with central differences.

    f(x) -> (value, analytic_grad). With coords given, only those indices
    are compared (useful for large inputs).
    """
    point = as_tensor(point, "grad_check point")
    _, analytic = f(point.copy())
    analytic = np.asarray(analytic, dtype=np.float64).reshape(point.shape)
    numeric = numeric_gradient(f, point, h=h, coords=coords)
    if coords is not None:
        coords = list(coords)
        analytic = np.array([analytic[c] for c in coords])
        numeric = np.array([numeric[c] for c in coords])
    diff = np.abs(analytic - numeric)
    worst = np.unravel_index(int(diff.argmax()), diff.shape) if diff.size else ()
    return GradCheckReport(
        rel_error=relative_error(analytic, numeric),
        max_abs_error=float(diff.max()) if diff.size else 0.0,
        worst_index=tuple(int(i) for i in worst),
        tol=tol,
        num_coords=int(diff.size),
    )


def _value(result):
    if isinstance(result, tuple):
        result = result[0]
    return float(result)
