"""Wiener-filter reconstruction of source spatial images."""

import numpy as np

from .exceptions import ShapeError
from .offline import _inv, regularized_covariances
from .timefreq import TFTensor


def wiener_gains(model):
    """Per-source Wiener gain fields Omega_j = Rc_j Rx^-1, (J, F, N, I, I).
    The gains sum to identity at machine precision."""
    fields, rx = regularized_covariances(model)
    rx_inv = _inv(rx, "in Wiener filter")
    omega = np.empty((model.n_sources,) + rx.shape, dtype=np.complex128)
    for j, rc in enumerate(fields):
        omega[j] = rc @ rx_inv
    return omega


def wiener_separate(X, model):
    """Source image estimates c_hat_j(f, n) = Omega_j(f, n) x(f, n).

    Returns one TFTensor per source; the per-coefficient sum over sources
    reproduces the mixture up to the covariance regularizer.
    """
    if X.values.shape != (model.n_bins, model.n_frames, model.n_channels):
        raise ShapeError(
            f"mixture {X.values.shape} does not match model "
            f"({model.n_bins}, {model.n_frames}, {model.n_channels})")
    omega = wiener_gains(model)
    return [
        TFTensor(np.einsum("fnab,fnb->fna", omega[j], X.values),
                 X.window_len, X.sample_rate)
        for j in range(model.n_sources)
    ]
