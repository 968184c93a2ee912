"""Node-local hierarchical Gaussian score model.

Each candidate subtree under a node is a group j with intercept
alpha_j = mu_alpha + sigma_alpha * eps_j, and observed scores
r = alpha_j + sigma_y * noise.  Generating a brand-new child corresponds
to a fresh group with no data: its intercept draws a fresh eps from the
fitted (mu_alpha, sigma_alpha), which is what makes the "generate" action
more dispersed than any observed group and keeps exploration alive.

Fitting is an adaptive random-walk Metropolis sampler over the blocks
(mu_alpha, log sigma_alpha, log sigma_y, eps-vector) with Jacobian
corrections for the log-transformed scales.  No external PPL dependency;
the sampler is small enough to test against a grid-integration oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MixedModelPriors:
    """Hyperpriors: Normal for mu_alpha, half-normal for both scales."""

    mu_alpha_mean: float = 0.5
    mu_alpha_sd: float = 0.2
    sigma_alpha_scale: float = 0.2
    sigma_y_scale: float = 0.3

    def __post_init__(self):
        if not (
            self.mu_alpha_sd > 0
            and self.sigma_alpha_scale > 0
            and self.sigma_y_scale > 0
        ):
            raise ValueError("prior scales must be positive")


@dataclass(frozen=True)
class McmcConfig:
    warmup: int = 500
    keep: int = 500
    target_accept: float = 0.375  # middle of the 0.3-0.45 adaptation band
    seed: int = 0

    def __post_init__(self):
        if self.warmup < 1 or self.keep < 1:
            raise ValueError("warmup and keep must be >= 1")


@dataclass
class GroupedObservations:
    """Score lists per candidate group; empty groups are allowed as long
    as at least one group holds data."""

    groups: list[list[float]]

    def __post_init__(self):
        if len(self.groups) < 1:
            raise ValueError("need at least one group")
        flat = [r for g in self.groups for r in g]
        if any(not math.isfinite(r) for r in flat):
            raise ValueError("scores must be finite")

    @property
    def n_total(self) -> int:
        return sum(len(g) for g in self.groups)


@dataclass
class MixedModelFit:
    """Kept posterior draws plus chain diagnostics."""

    mu_alpha: np.ndarray
    sigma_alpha: np.ndarray
    sigma_y: np.ndarray
    eps: np.ndarray  # shape (keep, J)
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return len(self.mu_alpha)

    @property
    def n_groups(self) -> int:
        return self.eps.shape[1]


def log_posterior(
    params: tuple[float, float, float, Sequence[float]],
    obs: GroupedObservations,
    priors: MixedModelPriors,
) -> float:
    """Unnormalized log posterior density in natural (sigma) coordinates."""
    mu_alpha, sigma_alpha, sigma_y, eps = params
    if sigma_alpha <= 0 or sigma_y <= 0:
        raise ValueError("sigma parameters must be positive")
    eps = np.asarray(eps, dtype=float)
    if eps.shape != (len(obs.groups),):
        raise ValueError("eps must hold one entry per group")
    lp = -0.5 * ((mu_alpha - priors.mu_alpha_mean) / priors.mu_alpha_sd) ** 2
    lp += -0.5 * (sigma_alpha / priors.sigma_alpha_scale) ** 2
    lp += -0.5 * (sigma_y / priors.sigma_y_scale) ** 2
    lp += -0.5 * float(np.dot(eps, eps))
    with np.errstate(divide="ignore", over="ignore"):
        for j, scores in enumerate(obs.groups):
            if not scores:
                continue
            arr = np.asarray(scores, dtype=float)
            mean_j = mu_alpha + sigma_alpha * eps[j]
            lp += float(
                -0.5 * np.sum(((arr - mean_j) / sigma_y) ** 2)
                - len(arr) * (math.log(sigma_y) + 0.5 * LOG_2PI)
            )
    return lp


def _target_logp(state: np.ndarray, y, gidx, n_obs, J, priors) -> float:
    """Log density in sampling coordinates (mu, log sa, log sy, eps…),
    including the Jacobian of the log transforms."""
    mu, ls_a, ls_y = state[0], state[1], state[2]
    eps = state[3:]
    sa, sy = math.exp(ls_a), math.exp(ls_y)
    if sy * sy == 0.0 or not math.isfinite(sa):
        # proposal wandered past float range; reject it outright
        return -math.inf
    lp = -0.5 * ((mu - priors.mu_alpha_mean) / priors.mu_alpha_sd) ** 2
    lp += -0.5 * (sa / priors.sigma_alpha_scale) ** 2 + ls_a
    lp += -0.5 * (sy / priors.sigma_y_scale) ** 2 + ls_y
    lp += -0.5 * float(np.dot(eps, eps))
    if n_obs:
        resid = y - (mu + sa * eps[gidx])
        lp += -0.5 * float(np.dot(resid, resid)) / (sy * sy) - n_obs * ls_y
    if not math.isfinite(lp):
        return -math.inf
    return lp


_BLOCKS = ("mu_alpha", "log_sigma_alpha", "log_sigma_y", "eps")


def fit(
    obs: GroupedObservations,
    priors: MixedModelPriors = MixedModelPriors(),
    cfg: McmcConfig = McmcConfig(),
) -> MixedModelFit:
    """Draw from the posterior with blockwise adaptive random-walk MH.

    Proposal scales adapt toward `cfg.target_accept` during warmup only;
    the kept phase runs with frozen scales so the chain is a genuine
    Markov chain. Pure function of (obs, priors, cfg).
    """
    if obs.n_total < 1:
        raise ValueError("need at least one observation to fit")
    J = len(obs.groups)
    y = np.asarray([r for g in obs.groups for r in g], dtype=float)
    gidx = np.asarray(
        [j for j, g in enumerate(obs.groups) for _ in g], dtype=int
    )
    n_obs = len(y)
    rng = np.random.default_rng(cfg.seed)

    state = np.zeros(3 + J)
    state[0] = float(np.clip(y.mean(), 0.0, 1.0))
    state[1] = math.log(priors.sigma_alpha_scale)
    state[2] = math.log(priors.sigma_y_scale)
    # small jitter keeps zero-scatter data off the exact zero-residual
    # manifold, where the density degenerates along log sigma_y
    state += 1e-3 * rng.standard_normal(len(state))
    logp = _target_logp(state, y, gidx, n_obs, J, priors)

    log_scales = {
        "mu_alpha": math.log(0.3),
        "log_sigma_alpha": math.log(0.5),
        "log_sigma_y": math.log(0.5),
        "eps": math.log(0.5),
    }
    slices = {
        "mu_alpha": slice(0, 1),
        "log_sigma_alpha": slice(1, 2),
        "log_sigma_y": slice(2, 3),
        "eps": slice(3, 3 + J),
    }
    accept_counts = {b: 0 for b in _BLOCKS}

    keep_mu = np.empty(cfg.keep)
    keep_sa = np.empty(cfg.keep)
    keep_sy = np.empty(cfg.keep)
    keep_eps = np.empty((cfg.keep, J))

    total = cfg.warmup + cfg.keep
    for t in range(total):
        warm = t < cfg.warmup
        for block in _BLOCKS:
            sl = slices[block]
            width = math.exp(log_scales[block])
            proposal = state.copy()
            proposal[sl] = state[sl] + width * rng.standard_normal(
                sl.stop - sl.start
            )
            logp_new = _target_logp(proposal, y, gidx, n_obs, J, priors)
            log_ratio = logp_new - logp
            accept_prob = 1.0 if log_ratio >= 0 else math.exp(log_ratio)
            if rng.random() < accept_prob:
                state, logp = proposal, logp_new
                if not warm:
                    accept_counts[block] += 1
            if warm:
                step = (t + 10.0) ** -0.6
                log_scales[block] += step * (accept_prob - cfg.target_accept)
        if not warm:
            k = t - cfg.warmup
            keep_mu[k] = state[0]
            keep_sa[k] = math.exp(state[1])
            keep_sy[k] = math.exp(state[2])
            keep_eps[k] = state[3:]

    accept = {b: accept_counts[b] / cfg.keep for b in _BLOCKS}
    diagnostics = {
        "accept": accept,
        "ess": {
            "mu_alpha": effective_sample_size(keep_mu),
            "sigma_alpha": effective_sample_size(keep_sa),
            "sigma_y": effective_sample_size(keep_sy),
        },
        "proposal_scales": {b: math.exp(s) for b, s in log_scales.items()},
    }
    return MixedModelFit(
        mu_alpha=keep_mu,
        sigma_alpha=keep_sa,
        sigma_y=keep_sy,
        eps=keep_eps,
        diagnostics=diagnostics,
    )


def effective_sample_size(chain: np.ndarray) -> float:
    """ESS from the autocorrelation sum, truncated at the first negative lag."""
    n = len(chain)
    if n < 4:
        return float(n)
    x = chain - chain.mean()
    var = float(np.dot(x, x)) / n
    if var == 0.0:
        return float(n)
    # FFT autocorrelation
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    acov = np.fft.irfft(f * np.conjugate(f), m)[:n].real / n
    rho = acov / var
    s = 0.0
    for k in range(1, n):
        if rho[k] <= 0:
            break
        s += rho[k]
    return float(n / (1.0 + 2.0 * s))


GEN_GROUP = None  # sentinel: draw for a brand-new group


def predictive_draw(
    fit: MixedModelFit,
    group: int | None,
    rng: np.random.Generator,
    draw: int | None = None,
) -> float:
    """One predictive score draw for an existing group or a new one.

    Exactly one joint posterior sample backs the draw: `draw` picks it, or
    it is chosen uniformly. A new group (group=None) uses a fresh unit
    normal for its intercept offset.
    """
    if draw is None:
        draw = int(rng.integers(fit.n_draws))
    mu = fit.mu_alpha[draw]
    sa = fit.sigma_alpha[draw]
    sy = fit.sigma_y[draw]
    if group is None:
        eps = rng.standard_normal()
    else:
        if not 0 <= group < fit.n_groups:
            raise ValueError(f"group {group} out of range")
        eps = fit.eps[draw, group]
    return float(mu + sa * eps + sy * rng.standard_normal())
