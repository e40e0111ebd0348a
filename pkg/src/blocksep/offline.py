"""Offline GEM estimator with multiplicative spectral updates.

E-step: Wiener gains and posterior source covariances from the empirical
mixture covariance. M-step: per-frequency spatial covariance average and
multiplicative updates of the NMF factor chains driven by the natural
statistics Xi(f, n) = trace(R^-1(f) Rc_hat(f, n)) / I.
"""

import numpy as np

from . import model as model_mod
from .exceptions import ConfigError, DegenerateModelError, NumericalError
from .model import (MixtureModel, init_mixture_model, normalize,
                    source_covariance_field, spectral_variance)

EPS_DENOMINATOR = 1e-12
EPS_REGULARIZATION = 1e-9
SILENT_POWER = 1e-20


def empirical_covariance(X, smoothing_frames=1):
    """Empirical mixture covariance x x^H per (f, n), optionally averaged
    over a centered window of frames (truncated at the edges)."""
    if smoothing_frames < 1 or smoothing_frames % 2 == 0:
        raise ConfigError("smoothing_frames must be odd and >= 1")
    values = X.values if hasattr(X, "values") else np.asarray(X)
    outer = values[:, :, :, None] * values[:, :, None, :].conj()
    if smoothing_frames == 1:
        return outer
    half = (smoothing_frames - 1) // 2
    n = outer.shape[1]
    csum = np.concatenate(
        [np.zeros_like(outer[:, :1]), np.cumsum(outer, axis=1)], axis=1)
    lo = np.maximum(np.arange(n) - half, 0)
    hi = np.minimum(np.arange(n) + half + 1, n)
    avg = (csum[:, hi] - csum[:, lo]) / (hi - lo)[None, :, None, None]
    return avg


def _hermitize(field):
    return 0.5 * (field + np.swapaxes(field, -1, -2).conj())


def mixture_covariance(model, variances=None):
    """Sum of the source covariances plus a small trace-scaled identity so
    downstream inversions stay well conditioned."""
    n_channels = model.n_channels
    rx = None
    for j, source in enumerate(model.sources):
        v = None if variances is None else variances[j]
        field = source_covariance_field(source, v)
        rx = field if rx is None else rx + field
    trace = np.trace(rx, axis1=-2, axis2=-1).real / n_channels
    eye = np.eye(n_channels)
    rx = rx + (EPS_REGULARIZATION * trace)[..., None, None] * eye
    return rx


def _inv(field, context=""):
    try:
        return np.linalg.inv(field)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular covariance {context}".strip()) from exc


def log_likelihood(rhat, rx):
    """Gaussian log-likelihood sum over all (f, n):
    -trace(Rx^-1 Rhat) - log det(pi Rx)."""
    n_channels = rx.shape[-1]
    rx_inv = _inv(rx, "in log-likelihood")
    tr = np.einsum("...ab,...ba->...", rx_inv, rhat).real
    sign, logdet = np.linalg.slogdet(rx)
    ll_field = -tr - (n_channels * np.log(np.pi) + logdet.real)
    if not np.all(np.isfinite(ll_field)):
        f, n = np.argwhere(~np.isfinite(ll_field))[0]
        raise NumericalError("non-finite log-likelihood term",
                             bin_index=int(f), frame_index=int(n))
    return float(ll_field.sum())


def regularized_covariances(model, variances=None):
    """Per-source covariance fields and their regularized sum.

    The trace-scaled identity regularizer is split equally among the sources
    so that the fields still sum exactly to the regularized mixture
    covariance, which makes the Wiener gains sum to identity at machine
    precision.
    """
    if variances is None:
        variances = [spectral_variance(s) for s in model.sources]
    fields = [source_covariance_field(s, v)
              for s, v in zip(model.sources, variances)]
    rx = sum(fields)
    trace = np.trace(rx, axis1=-2, axis2=-1).real / model.n_channels
    eye = np.eye(model.n_channels)
    reg = (EPS_REGULARIZATION * trace)[..., None, None] * eye
    share = reg / model.n_sources
    fields = [rc + share for rc in fields]
    return fields, rx + reg


def e_step(model, rhat):
    """Wiener gains Omega_j = Rc_j Rx^-1 and posterior covariances
    Rc_hat_j = Omega Rhat Omega^H + (I - Omega) Rc_j, re-Hermitized.

    Returns (omega, rhat_c), both shaped (J, F, N, I, I).
    """
    n_channels = model.n_channels
    fields, rx = regularized_covariances(model)
    rx_inv = _inv(rx, "in E-step")
    eye = np.eye(n_channels)
    omega = np.empty((model.n_sources,) + rx.shape, dtype=np.complex128)
    rhat_c = np.empty_like(omega)
    for j, rc in enumerate(fields):
        om = rc @ rx_inv
        post = om @ rhat @ np.swapaxes(om, -1, -2).conj() + (eye - om) @ rc
        omega[j] = om
        rhat_c[j] = _hermitize(post)
    return omega, rhat_c


def xi_field(source, rhat_cj):
    """Xi(f, n) = trace(R^-1(f) Rc_hat(f, n)) / I, clamped at zero.

    The spatial stack gets the same trace-scaled ridge as the mixture
    covariance; fitted spatial matrices can drift arbitrarily close to
    singular."""
    spatial = source.spatial
    trace = np.trace(spatial, axis1=-2, axis2=-1).real / source.n_channels
    ridge = (EPS_REGULARIZATION * trace)[:, None, None] * \
        np.eye(source.n_channels)
    r_inv = _inv(spatial + ridge, "in Xi computation")
    xi = np.einsum("fab,fnba->fn", r_inv, rhat_cj).real / source.n_channels
    return np.maximum(xi, 0.0)


def m_step_spatial(source, rhat_cj, variance):
    """Per-frequency average of Rc_hat(f, n) / v(f, n) over frames."""
    scaled = rhat_cj / variance[:, :, None, None]
    return _hermitize(scaled.mean(axis=1))


def mu_terms(block, other, xi, factor_index):
    """Numerator and denominator of the multiplicative-update ratio for one
    factor of a chain, with the companion part's variance in the bracket."""
    w, u, g, h = (fm.values for fm in block.factors())
    v_own = np.maximum(w @ u @ g @ h, model_mod.EPS_VARIANCE)
    v_other = np.maximum(other.product(), model_mod.EPS_VARIANCE)
    bracket = xi / (v_own * v_own * v_other)
    inv_own = 1.0 / v_own
    if factor_index == 0:
        right = (u @ g @ h).T
        return bracket @ right, inv_own @ right
    if factor_index == 1:
        right = (g @ h).T
        return w.T @ bracket @ right, w.T @ inv_own @ right
    if factor_index == 2:
        left = (w @ u).T
        return left @ bracket @ h.T, left @ inv_own @ h.T
    left = (w @ u @ g).T
    return left @ bracket, left @ inv_own


def apply_mu_ratio(factor, numerator, denominator):
    """Multiply the factor by the update ratio in place.

    Entries that are exactly zero stay zero (they encode structural
    sparsity); positive entries are floored at a tiny epsilon so a silent
    stretch of signal cannot collapse a whole factor to zero."""
    if factor.fixed:
        return
    old = factor.values
    new = old * (numerator / np.maximum(denominator, EPS_DENOMINATOR))
    factor.values = np.where(old > 0.0,
                             np.maximum(new, model_mod.EPS_VARIANCE), new)


def m_step_spectral(source, xi):
    """Sequential multiplicative updates W, U, G, H of the excitation chain
    then the filter chain, recomputing the modeled variance between factors.
    Fixed factors are untouched. Updates in place and returns the source."""
    for block, other in ((source.excitation, source.filter),
                         (source.filter, source.excitation)):
        for idx, factor in enumerate(block.factors()):
            if factor.fixed:
                continue
            num, den = mu_terms(block, other, xi, idx)
            apply_mu_ratio(factor, num, den)
    return source


def offline_fit(X, cfg, rng_seed):
    """Whole-signal GEM loop. Returns the fitted model and the per-iteration
    log-likelihood trace."""
    cfg.validate()
    if float(np.mean(np.abs(X.values) ** 2)) < SILENT_POWER:
        raise DegenerateModelError("mixture is silent; nothing to estimate")
    mixture = init_mixture_model(cfg, X, rng_seed)
    rhat = empirical_covariance(X, cfg.smoothing_frames)
    trace = []
    for iteration in range(cfg.iterations):
        try:
            _, rhat_c = e_step(mixture, rhat)
            for j, source in enumerate(mixture.sources):
                variance = spectral_variance(source)
                if not source.spatial_fixed:
                    source.spatial = m_step_spatial(source, rhat_c[j],
                                                    variance)
                xi = xi_field(source, rhat_c[j])
                m_step_spectral(source, xi)
            normalize(mixture)
            trace.append(log_likelihood(rhat, mixture_covariance(mixture)))
        except NumericalError as exc:
            exc.iteration = iteration
            raise
    return mixture, np.asarray(trace)
