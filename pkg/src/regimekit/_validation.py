import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import NonFiniteInputError


def as_1d_float(x, name="x", allow_nonfinite=False):
    """Coerce a 1-D (or single-column) array-like to contiguous float64."""
    arr = np.asarray(x)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not allow_nonfinite and arr.size and not np.all(np.isfinite(arr.astype(np.float64))):
        raise NonFiniteInputError(f"{name} contains NaN or infinite values")
    if arr.size == 0:
        return arr.astype(np.float64)
    return check_array(arr, ensure_2d=False, dtype=np.float64,
                       ensure_all_finite=not allow_nonfinite, input_name=name).copy()
