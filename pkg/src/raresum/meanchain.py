"""Metropolis-Hastings sampling of conditioning points.

The chain targets the law of the sample mean of u(X) restricted to the
region: exactly Gaussian for gaussian-identity models, a first-order
saddlepoint surrogate otherwise.  Normalizing constants drop out of the
acceptance ratio, so neither target needs the rare-event probability.

Disconnected regions are handled by mixing the random walk with an
independence proposal that draws uniformly from a small window inside each
connected component; both kernels are Metropolis-corrected, so the mixture
leaves the target invariant.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, SteepnessError
from .model import GAUSSIAN_IDENTITY, ModelSpec, local_cumulants
from .region import ProductRegion, component_boxes, contains, initial_point
from .tilt import solve_tilt

TARGET_KINDS = ("exact-gaussian", "saddlepoint", "auto")


@dataclass
class MeanChainConfig:
    burn_in: int = 1000
    thinning: int = 5
    proposal_scale: Optional[np.ndarray] = None  # default: sqrt(kappa_jj(0)/n)
    target_kind: str = "auto"
    restart_prob: float = 0.1

    def __post_init__(self):
        if self.burn_in < 0:
            raise ConfigurationError("burn_in must be >= 0")
        if self.thinning < 1:
            raise ConfigurationError("thinning must be >= 1")
        if self.target_kind not in TARGET_KINDS:
            raise ConfigurationError(f"unknown target kind {self.target_kind!r}")
        if self.proposal_scale is not None:
            scale = np.atleast_1d(np.asarray(self.proposal_scale, dtype=float))
            if np.any(scale <= 0):
                raise ConfigurationError("proposal_scale must be positive")
            self.proposal_scale = scale


@dataclass
class MeanChainDiagnostics:
    acceptance_rate: float
    chain_length: int
    mean: np.ndarray
    variance: np.ndarray
    target_kind: str
    stuck: bool = False


def target_logdensity(model: ModelSpec, region: ProductRegion, n: int, v,
                      kind: str = "auto") -> float:
    """Unnormalized log-density of the restricted sample-mean law at v."""
    kind = _resolve_kind(model, kind)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if not contains(region, v):
        return -math.inf
    loc0 = local_cumulants(model, np.zeros(model.s))
    if kind == "exact-gaussian":
        dev = v - loc0.mean
        return float(-0.5 * n * dev @ np.linalg.solve(loc0.covariance, dev))
    return _saddlepoint_logdensity(model, n, v)


def _resolve_kind(model: ModelSpec, kind: str) -> str:
    if kind == "auto":
        return "exact-gaussian" if model.conjugacy_tag == GAUSSIAN_IDENTITY else "saddlepoint"
    return kind


def _saddlepoint_logdensity(model: ModelSpec, n: int, v, t_warm=None) -> float:
    try:
        sol = solve_tilt(model, v, t0=t_warm)
    except SteepnessError:
        warnings.warn("conditioning target unattainable inside the region; "
                      "treating its density as zero", RuntimeWarning)
        return -math.inf
    rate = float(sol.t @ sol.target - model.cumulant(sol.t))
    sign, logdet = np.linalg.slogdet(sol.local.covariance)
    if sign <= 0:
        return -math.inf
    return -n * rate - 0.5 * logdet


class _RestartKernel:
    """Independence proposal: uniform over a window inside each component.

    Windows hug the end of each interval nearest the unconditioned mean,
    where the restricted mass concentrates, with extent one proposal scale.
    """

    def __init__(self, boxes, mu, scales):
        self.windows = []
        for box in boxes:
            lo = np.empty(len(box))
            hi = np.empty(len(box))
            for j, iv in enumerate(box):
                w = float(scales[j])
                a, b = iv.lower, iv.upper
                if math.isfinite(a) and math.isfinite(b):
                    c = 0.5 * (a + b)
                    lo[j], hi[j] = max(a, c - 0.5 * w), min(b, c + 0.5 * w)
                elif math.isfinite(a):
                    lo[j], hi[j] = a, a + w
                elif math.isfinite(b):
                    lo[j], hi[j] = b - w, b
                else:
                    lo[j], hi[j] = mu[j] - 0.5 * w, mu[j] + 0.5 * w
            self.windows.append((lo, hi))
        self._log_vols = np.array([float(np.sum(np.log(hi - lo)))
                                   for lo, hi in self.windows])
        self._n = len(self.windows)

    def sample(self, rng):
        c = rng.integers(self._n)
        lo, hi = self.windows[c]
        return lo + (hi - lo) * rng.random(lo.size)

    def logpdf(self, v):
        dens = 0.0
        for (lo, hi), lv in zip(self.windows, self._log_vols):
            if np.all(v >= lo) and np.all(v <= hi):
                dens += math.exp(-lv)
        if dens <= 0.0:
            return -math.inf
        return math.log(dens / self._n)


def run_chain(model: ModelSpec, region: ProductRegion, n: int,
              config: MeanChainConfig, count: int, rng):
    """Sample `count` conditioning points from the restricted mean law.

    Random-walk MH with Gaussian proposals, plus occasional component
    restarts when the region is disconnected.  Returns the thinned states
    after burn-in and chain diagnostics.
    """
    if count < 1:
        raise ConfigurationError("count must be >= 1")
    if region.is_empty:
        raise ConfigurationError("region is empty")
    kind = _resolve_kind(model, config.target_kind)
    loc0 = local_cumulants(model, np.zeros(model.s))
    if config.proposal_scale is not None:
        scale = np.broadcast_to(config.proposal_scale, (model.s,)).astype(float)
    else:
        scale = np.sqrt(np.diagonal(loc0.covariance) / n)

    if kind == "exact-gaussian":
        prec_chol = np.linalg.cholesky(np.linalg.inv(loc0.covariance))

        def logtarget(v):
            if not contains(region, v):
                return -math.inf
            z = prec_chol.T @ (v - loc0.mean)
            return float(-0.5 * n * z @ z)
    else:
        def logtarget(v):
            if not contains(region, v):
                return -math.inf
            return _saddlepoint_logdensity(model, n, v)

    v = initial_point(region, model, n)
    lt = logtarget(v)
    if not math.isfinite(lt):
        raise ConfigurationError("chain initial point has zero target density")

    boxes = component_boxes(region)
    restart = _RestartKernel(boxes, loc0.mean, scale) if len(boxes) > 1 else None

    total = config.burn_in + config.thinning * count
    states = np.empty((count, model.s))
    stored = 0
    accepted = 0
    for step in range(total):
        if restart is not None and rng.random() < config.restart_prob:
            prop = restart.sample(rng)
            lp = logtarget(prop)
            log_alpha = (lp + restart.logpdf(v)) - (lt + restart.logpdf(prop))
        else:
            prop = v + scale * rng.standard_normal(model.s)
            lp = logtarget(prop)
            log_alpha = lp - lt
        if log_alpha >= 0 or math.log(rng.random()) < log_alpha:
            v, lt = prop, lp
            accepted += 1
        idx = step - config.burn_in
        if idx >= 0 and idx % config.thinning == config.thinning - 1:
            states[stored] = v
            stored += 1
    assert stored == count

    rate = accepted / total
    diag = MeanChainDiagnostics(
        acceptance_rate=rate,
        chain_length=total,
        mean=states.mean(axis=0),
        variance=states.var(axis=0),
        target_kind=kind,
        stuck=(rate == 0.0),
    )
    if diag.stuck:
        warnings.warn("mean chain accepted no moves; estimation proceeds but "
                      "conditioning points are degenerate", RuntimeWarning)
    return states, diag
