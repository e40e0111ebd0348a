"""Sliding-block online GEM estimator.

Each incoming STFT frame extends a block of at most M frames. Per block, the
temporal weights G and temporal patterns H are re-initialized and updated on
block data only, while the spatial covariances and the W/U factors evolve
through step-size-alpha exponential averages of their update statistics, so
information persists across blocks. alpha = 1 with M covering the whole
signal collapses to the offline estimator.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, ShapeError
from .model import (draw_temporal_weights, init_mixture_model, model_rng,
                    normalize, rescale_to_power, spectral_variance)
from .offline import (apply_mu_ratio, e_step, empirical_covariance,
                      m_step_spatial, mu_terms, xi_field)
from .separate import wiener_gains
from .timefreq import TFTensor


GUARD_RELEASE_RATIO = 0.3   # fraction of running mean power
GUARD_RELEASE_STEPS = 10    # consecutive loud steps needed to unfreeze


def ema(previous, current, alpha):
    """Exponential average step (1 - alpha) * previous + alpha * current."""
    return (1.0 - alpha) * previous + alpha * current


@dataclass
class FactorAccumulators:
    """Running numerators/denominators of the W and U multiplicative ratios."""

    w_num: np.ndarray
    w_den: np.ndarray
    u_num: np.ndarray
    u_den: np.ndarray

    @classmethod
    def zeros_for(cls, block):
        w_shape = block.W.values.shape
        u_shape = block.U.values.shape
        return cls(np.zeros(w_shape), np.zeros(w_shape),
                   np.zeros(u_shape), np.zeros(u_shape))


@dataclass
class OnlineState:
    cfg: object
    seed: int
    model: object
    prev_spatial: list                 # per source, (F, I, I)
    acc: list                          # per source, dict part -> accumulators
    frames: list = field(default_factory=list)
    t: int = 0                         # index of the newest frame
    block_idx: int = 0                 # number of processed blocks
    power_sum: float = 0.0             # running mixture power statistics
    power_count: int = 0
    step_times: list = field(default_factory=list)
    guard_frozen: list = field(default_factory=list)   # (t, source) events
    guard_stats: list = None           # per source, posterior power (or None)
    guard_latched: list = None         # per source, currently frozen?
    guard_release: list = None         # per source, consecutive loud steps
    power_share: list = None           # per source, posterior power fraction

    @property
    def block_len(self):
        return len(self.frames)


def _frame_array(frame, cfg):
    frame = np.asarray(frame, dtype=np.complex128)
    if frame.ndim != 2:
        raise ShapeError("a TF frame must be shaped (n_bins, n_channels)")
    if frame.shape[0] != cfg.window_len // 2 + 1:
        raise ShapeError(
            f"frame has {frame.shape[0]} bins, config window expects "
            f"{cfg.window_len // 2 + 1}")
    return frame


def online_init(cfg, first_frame, rng_seed, sample_rate=None):
    """Fresh state holding the first frame (not yet processed)."""
    cfg.validate()
    frame = _frame_array(first_frame, cfg)
    if sample_rate is None:
        sample_rate = 2 * (frame.shape[0] - 1)  # only pattern grids use it
    x0 = TFTensor(frame[:, None, :], cfg.window_len, sample_rate)
    model = init_mixture_model(cfg, x0, rng_seed)
    acc = [
        {
            "excitation": FactorAccumulators.zeros_for(s.excitation),
            "filter": FactorAccumulators.zeros_for(s.filter),
        }
        for s in model.sources
    ]
    state = OnlineState(cfg=cfg, seed=rng_seed, model=model,
                        prev_spatial=[s.spatial.copy() for s in model.sources],
                        acc=acc, guard_stats=[None] * model.n_sources,
                        guard_latched=[False] * model.n_sources,
                        guard_release=[0] * model.n_sources)
    state.frames.append(frame)
    return state


def push_frame(state, frame):
    """Append a frame to the block buffer, evicting the oldest when full."""
    frame = _frame_array(frame, state.cfg)
    if frame.shape != state.frames[-1].shape:
        raise ShapeError("frame shape changed mid-stream")
    state.frames.append(frame)
    if len(state.frames) > state.cfg.block:
        state.frames.pop(0)
    state.t += 1


def _reinit_block_locals(state, block, block_power):
    """Per-block re-initialization of the temporal factors G and H.

    Each source's modeled power is re-seeded at its share of the block power
    as estimated from the previous block's posterior, so a quiet source is
    not re-inflated to full mixture power every block. Before the first
    block has been processed the shares are taken as equal."""
    rng = model_rng(state.seed, state.block_idx)
    n_frames = block.shape[1]
    n_sources = state.model.n_sources
    for j, source in enumerate(state.model.sources):
        exc, filt = source.excitation, source.filter
        if not exc.G.fixed:
            exc.G.values = draw_temporal_weights(
                rng, (exc.G.values.shape[0], n_frames))
        if not exc.H.fixed:
            exc.H.values = np.eye(n_frames)
        filt.H.values = np.ones((filt.G.values.shape[1], n_frames))
        if not filt.G.fixed:
            filt.G.values = np.ones_like(filt.G.values)
        if state.power_share is None:
            target = block_power
        else:
            target = block_power * n_sources * state.power_share[j]
        if target > 0:
            rescale_to_power(source, target)


def process_block(state):
    """Run iters_per_block GEM iterations on the current block, commit the
    exponential-average statistics, and return the separated newest frame
    for every source."""
    cfg = state.cfg
    alpha = cfg.alpha
    started = time.perf_counter()
    block = np.stack(state.frames, axis=1)  # (F, B, I)
    block_power = float(np.mean(np.abs(block) ** 2))
    state.power_sum += float(np.mean(np.abs(state.frames[-1]) ** 2))
    state.power_count += 1
    mean_power = state.power_sum / state.power_count
    _reinit_block_locals(state, block, block_power)
    rhat = empirical_covariance(block, cfg.smoothing_frames)

    # Guard decision is per block, from the previous block's converged
    # posterior power: within a block the re-drawn temporal weights inflate a
    # silent source's statistics for the first iterations, so an
    # iteration-level decision would flap. The freeze latches: a single loud
    # step (e.g. interference leaking through for one frame) must not resume
    # updates, only sustained power does.
    frozen = [False] * state.model.n_sources
    if cfg.divergence_guard:
        for j, stat in enumerate(state.guard_stats):
            if stat is None:
                continue
            if not state.guard_latched[j]:
                if stat < cfg.guard_threshold * mean_power:
                    state.guard_latched[j] = True
                    state.guard_release[j] = 0
            else:
                if stat > GUARD_RELEASE_RATIO * mean_power:
                    state.guard_release[j] += 1
                    if state.guard_release[j] >= GUARD_RELEASE_STEPS:
                        state.guard_latched[j] = False
                else:
                    state.guard_release[j] = 0
            if state.guard_latched[j]:
                frozen[j] = True
                state.guard_frozen.append((state.t, j))

    acc_candidate = None
    rhat_c = None
    for _ in range(cfg.iters_per_block):
        _, rhat_c = e_step(state.model, rhat)
        acc_candidate = []
        for j, source in enumerate(state.model.sources):
            variance = spectral_variance(source)
            if not source.spatial_fixed:
                if not frozen[j]:
                    block_avg = m_step_spatial(source, rhat_c[j], variance)
                    source.spatial = ema(state.prev_spatial[j], block_avg,
                                         alpha)
            xi = xi_field(source, rhat_c[j])
            parts = {}
            for name, own, other in (
                    ("excitation", source.excitation, source.filter),
                    ("filter", source.filter, source.excitation)):

                prev = state.acc[j][name]
                cand = FactorAccumulators(prev.w_num, prev.w_den,
                                          prev.u_num, prev.u_den)
                num, den = mu_terms(own, other, xi, 0)
                cand.w_num = ema(prev.w_num, num, alpha)
                cand.w_den = ema(prev.w_den, den, alpha)
                apply_mu_ratio(own.W, cand.w_num, cand.w_den)
                num, den = mu_terms(own, other, xi, 1)
                cand.u_num = ema(prev.u_num, num, alpha)
                cand.u_den = ema(prev.u_den, den, alpha)
                apply_mu_ratio(own.U, cand.u_num, cand.u_den)
                for idx, factor in ((2, own.G), (3, own.H)):
                    if factor.fixed:
                        continue
                    num, den = mu_terms(own, other, xi, idx)
                    apply_mu_ratio(factor, num, den)
                parts[name] = cand
            acc_candidate.append(parts)
        normalize(state.model)

    post_power = np.einsum("jfnaa->j", rhat_c).real / (
        rhat_c.shape[1] * rhat_c.shape[2] * state.model.n_channels)
    post_power = np.maximum(post_power, 0.0)
    total = float(post_power.sum())
    if total > 0:
        state.power_share = list(post_power / total)
    for j, source in enumerate(state.model.sources):
        state.prev_spatial[j] = source.spatial.copy()
        state.acc[j] = acc_candidate[j]
        if cfg.divergence_guard:
            # Posterior power per channel of the newest frame, from the last
            # iteration. A per-frame statistic reacts one step after a source
            # falls silent, before the block average does, and unlike the Xi
            # statistic it does not blow up when the spatial covariance is
            # ill conditioned.
            state.guard_stats[j] = float(
                np.einsum("faa->", rhat_c[j][:, -1]).real
                / (rhat_c[j].shape[0] * state.model.n_channels))
    state.block_idx += 1

    omega = wiener_gains(state.model)
    newest = block[:, -1, :]
    outputs = [np.einsum("fab,fb->fa", omega[j][:, -1], newest)
               for j in range(state.model.n_sources)]
    state.step_times.append(time.perf_counter() - started)
    return outputs


def online_step(state, new_frame):
    """Push one frame and process the resulting block. Returns the separated
    newest frame per source."""
    push_frame(state, new_frame)
    return process_block(state)


def online_separate(X, cfg, rng_seed):
    """Causal frame-by-frame separation of a whole TF tensor.

    Returns one TFTensor per source; frame n of each output was emitted at
    step t = n using only frames <= n.
    """
    cfg.validate()
    n_frames = X.n_frames
    if n_frames < 1:
        raise ConfigError("need at least one frame")
    frames = [X.values[:, n, :] for n in range(n_frames)]
    state = online_init(cfg, frames[0], rng_seed, sample_rate=X.sample_rate)
    per_step = [process_block(state)]
    for frame in frames[1:]:
        per_step.append(online_step(state, frame))
    outputs = []
    for j in range(cfg.n_sources):
        values = np.stack([step[j] for step in per_step], axis=1)
        outputs.append(TFTensor(values, X.window_len, X.sample_rate))
    return outputs
