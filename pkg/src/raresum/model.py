"""Statistical models: a base density paired with a statistic, plus the
cumulant generating function machinery (mean map, covariance, third-order
terms) that the tilting and run-generation layers consume.

All built-in families expose analytic cumulants where available; anything
missing falls back to central finite differences of the cumulant function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, DomainError, NumericError

Array = np.ndarray

# Relative step for finite-difference fallbacks; see _fd_step.
FD_BASE_STEP = 1e-4
# Iterates are kept strictly inside the cumulant domain by this relative margin.
DOMAIN_MARGIN = 1e-8

GAUSSIAN_IDENTITY = "gaussian-identity"
GENERIC_1D = "generic-1d"
GENERIC = "generic"

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class CumulantDomain:
    """Open box of admissible tilt vectors, with an optional joint predicate."""

    lower: Array
    upper: Array
    predicate: Optional[Callable[[Array], bool]] = None

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if self.lower.shape != self.upper.shape:
            raise ConfigurationError("domain bounds must have matching shapes")
        if np.any(self.lower >= self.upper):
            raise ConfigurationError("domain intervals must be nonempty")

    @property
    def s(self) -> int:
        return self.lower.size

    def margin(self) -> Array:
        """Absolute per-coordinate margin used to stay strictly inside."""
        cached = getattr(self, "_margin", None)
        if cached is not None:
            return cached
        width = self.upper - self.lower
        finite = np.isfinite(width)
        out = np.empty_like(self.lower)
        out[finite] = DOMAIN_MARGIN * width[finite]
        # Half-infinite or free coordinates: margin relative to the finite
        # endpoint's magnitude (or 1 for a fully free axis).
        ref = np.maximum(np.abs(np.where(np.isfinite(self.lower), self.lower, 0.0)),
                         np.abs(np.where(np.isfinite(self.upper), self.upper, 0.0)))
        out[~finite] = DOMAIN_MARGIN * np.maximum(1.0, ref[~finite])
        object.__setattr__(self, "_margin", out)
        return out

    def violation(self, t: Array) -> Optional[int]:
        """Index of the first coordinate outside the open box, else None."""
        t = np.asarray(t, dtype=float)
        bad = (t <= self.lower) | (t >= self.upper)
        if np.any(bad):
            return int(np.argmax(bad))
        return None

    def contains(self, t: Array, margin: bool = False) -> bool:
        t = np.asarray(t, dtype=float)
        lo, hi = self.lower, self.upper
        if margin:
            m = self.margin()
            lo, hi = lo + m, hi - m
        if np.any(t <= lo) or np.any(t >= hi):
            return False
        if self.predicate is not None and not self.predicate(t):
            return False
        return True


def unbounded_domain(s: int) -> CumulantDomain:
    return CumulantDomain(np.full(s, -np.inf), np.full(s, np.inf))


@dataclass(frozen=True)
class LocalCumulants:
    """Mean, covariance and contracted third cumulants of the tilted law at t."""

    t: Array
    mean: Array
    covariance: Array
    third: Array


@dataclass(frozen=True)
class ModelSpec:
    """A base density on R^d together with a statistic u: R^d -> R^s.

    The callables accept either a single point of shape (d,) or a batch of
    shape (m, d); `log_density_x` then returns a scalar / (m,) array and
    `statistic` a (s,) / (m, s) array.  `cumulant` maps a tilt vector (s,)
    to K(t) = log E exp<t, u(X)>.
    """

    d: int
    s: int
    log_density_x: Callable
    statistic: Callable
    cumulant: Callable
    cumulant_domain: CumulantDomain
    conjugacy_tag: str
    name: str = "custom"
    mean_fn: Optional[Callable] = None
    cov_fn: Optional[Callable] = None
    third_fn: Optional[Callable] = None
    tilted_family: Optional[Callable] = None  # t -> (draw(rng, size), logpdf hook)
    step_window_fn: Optional[Callable] = None  # (gauss_mean, beta) -> (lo, hi), d=1 only
    x_window_fn: Optional[Callable] = None  # t -> (lo, hi) effective support, d=1 only
    gauss_identity_params: Optional[tuple] = None  # (mu (s,), sigma2 (s,))

    def __post_init__(self):
        if self.d < 1 or self.s < 1:
            raise ConfigurationError("dimensions d and s must be positive")
        if self.cumulant_domain.s != self.s:
            raise ConfigurationError("cumulant domain dimension must equal s")
        if self.conjugacy_tag not in (GAUSSIAN_IDENTITY, GENERIC_1D, GENERIC):
            raise ConfigurationError(f"unknown conjugacy tag {self.conjugacy_tag!r}")


def _as_tilt(model: ModelSpec, t) -> Array:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.shape != (model.s,):
        raise ConfigurationError(f"tilt vector must have shape ({model.s},), got {t.shape}")
    return t


def _check_domain(model: ModelSpec, t: Array) -> None:
    j = model.cumulant_domain.violation(t)
    if j is not None:
        raise DomainError(f"tilt coordinate {j} = {t[j]:.6g} outside the cumulant domain", coord=j)
    pred = model.cumulant_domain.predicate
    if pred is not None and not pred(t):
        raise DomainError("tilt violates the joint domain predicate")


def _fd_step(model: ModelSpec, t: Array) -> Array:
    h = np.maximum(FD_BASE_STEP, FD_BASE_STEP * np.abs(t))
    # Shrink towards the boundary so that probe points stay inside.
    lo, hi = model.cumulant_domain.lower, model.cumulant_domain.upper
    room = np.minimum(t - lo, hi - t)
    room[~np.isfinite(room)] = np.inf
    return np.minimum(h, 0.25 * room)


def _fd_gradient(model: ModelSpec, t: Array) -> Array:
    h = _fd_step(model, t)
    K = model.cumulant
    g = np.empty(model.s)
    for j in range(model.s):
        e = np.zeros(model.s)
        e[j] = h[j]
        g[j] = (K(t + e) - K(t - e)) / (2.0 * h[j])
    return g


def _fd_hessian(model: ModelSpec, t: Array) -> Array:
    h = _fd_step(model, t)
    K = model.cumulant
    s = model.s
    H = np.empty((s, s))
    K0 = K(t)
    for j in range(s):
        ej = np.zeros(s)
        ej[j] = h[j]
        H[j, j] = (K(t + ej) - 2.0 * K0 + K(t - ej)) / (h[j] ** 2)
        for l in range(j + 1, s):
            el = np.zeros(s)
            el[l] = h[l]
            H[j, l] = H[l, j] = (
                K(t + ej + el) - K(t + ej - el) - K(t - ej + el) + K(t - ej - el)
            ) / (4.0 * h[j] * h[l])
    return H


def _covariance_at(model: ModelSpec, t: Array) -> Array:
    cov = model.cov_fn(t) if model.cov_fn is not None else _fd_hessian(model, t)
    cov = np.asarray(cov, dtype=float)
    return 0.5 * (cov + cov.T)


def _fd_third_contracted(model: ModelSpec, t: Array) -> Array:
    """gamma_p = sum_j d kappa_jj / d t_p via central differences of the Hessian."""
    h = _fd_step(model, t)
    gamma = np.empty(model.s)
    for p in range(model.s):
        e = np.zeros(model.s)
        e[p] = h[p]
        diag_plus = np.diagonal(_covariance_at(model, t + e))
        diag_minus = np.diagonal(_covariance_at(model, t - e))
        gamma[p] = np.sum(diag_plus - diag_minus) / (2.0 * h[p])
    return gamma


def mean_map(model: ModelSpec, t) -> Array:
    """Mean of the tilted law: the gradient of the cumulant function at t."""
    t = _as_tilt(model, t)
    _check_domain(model, t)
    if model.mean_fn is not None:
        return np.asarray(model.mean_fn(t), dtype=float)
    return _fd_gradient(model, t)


def mean_and_cov(model: ModelSpec, t: Array):
    """(m(t), kappa(t)) with a single domain check; hot path of the solver."""
    _check_domain(model, t)
    if model.mean_fn is not None:
        m = np.asarray(model.mean_fn(t), dtype=float)
    else:
        m = _fd_gradient(model, t)
    cov = model.cov_fn(t) if model.cov_fn is not None else _fd_hessian(model, t)
    cov = np.asarray(cov, dtype=float)
    return m, 0.5 * (cov + cov.T)


def local_cumulants(model: ModelSpec, t) -> LocalCumulants:
    """Mean, covariance and contracted third cumulants of the tilted law at t.

    Raises NumericError if the (symmetrized) covariance is not positive
    definite, which signals a tilt too close to the domain boundary.
    """
    t = _as_tilt(model, t)
    mean, cov = mean_and_cov(model, t)
    return assemble_local_cumulants(model, t, mean, cov)


def assemble_local_cumulants(model: ModelSpec, t: Array, mean: Array,
                             cov: Array) -> LocalCumulants:
    """Finish a LocalCumulants from precomputed mean/covariance at t."""
    if cov.shape == (1, 1):
        if not cov[0, 0] > 0:
            raise NumericError(
                f"covariance of the tilted law is not positive definite at t={t}")
    else:
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise NumericError(
                f"covariance of the tilted law is not positive definite at t={t}"
            ) from None
    if model.third_fn is not None:
        third = np.asarray(model.third_fn(t), dtype=float)
    else:
        third = _fd_third_contracted(model, t)
    return LocalCumulants(t=t, mean=mean, covariance=cov, third=third)


# ---------------------------------------------------------------------------
# Built-in families.  Every callable is a partial over a module-level function
# so that ModelSpec instances pickle cleanly for process-parallel estimation.
# ---------------------------------------------------------------------------


def _points(x, d):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
        single = True
    elif x.ndim == 1:
        if d == 1 and x.shape[0] != 1:
            # A bare 1-d array of scalars: interpret as a batch of points.
            x = x.reshape(-1, 1)
            single = False
        else:
            x = x.reshape(1, d)
            single = True
    else:
        single = False
    if x.shape[-1] != d:
        raise ConfigurationError(f"points must have trailing dimension {d}")
    return x, single


class TiltedFamily:
    """Closed-form sampler + exact log-density of a tilted built-in family."""

    def __init__(self, draw, logpdf):
        self._draw = draw
        self._logpdf = logpdf

    def sample(self, rng, size=None):
        return self._draw(rng, size)

    def logpdf(self, x):
        return self._logpdf(x)


# -- gaussian-mean: X ~ N(mu, diag(sigma^2)) on R^d, u = identity -----------


def _gm_logp(x, mu, sigma2):
    pts, single = _points(x, mu.size)
    q = np.sum((pts - mu) ** 2 / sigma2 + np.log(2.0 * np.pi * sigma2), axis=-1)
    out = -0.5 * q
    return float(out[0]) if single else out


def _gm_stat(x, d):
    pts, single = _points(x, d)
    return pts[0] if single else pts


def _gm_cumulant(t, mu, sigma2):
    t = np.asarray(t, dtype=float)
    return float(np.dot(mu, t) + 0.5 * np.dot(sigma2, t * t))


def _gm_mean(t, mu, sigma2):
    return mu + sigma2 * np.asarray(t, dtype=float)


def _gm_cov(t, sigma2):
    return np.diag(sigma2)


def _gm_third(t, s):
    return np.zeros(s)


def _gm_tilted_draw(rng, size, mean, sd):
    if size is None:
        return rng.normal(mean, sd)
    return rng.normal(mean, sd, size=(size, mean.size))


def _gm_tilted_logpdf(x, mean, sigma2):
    return _gm_logp(x, mean, sigma2)


def _gm_tilted(t, mu, sigma2):
    mean = mu + sigma2 * np.asarray(t, dtype=float)
    sd = np.sqrt(sigma2)
    return TiltedFamily(partial(_gm_tilted_draw, mean=mean, sd=sd),
                        partial(_gm_tilted_logpdf, mean=mean, sigma2=sigma2))


def _broadcast(value, d, what):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.full(d, arr[0])
    if arr.shape != (d,):
        raise ConfigurationError(f"{what} must be a scalar or length-{d} sequence")
    return arr


def _gaussian_mean_model(mu, sigma, d) -> ModelSpec:
    mu_vec = _broadcast(mu, d, "mu")
    sigma_vec = _broadcast(sigma, d, "sigma")
    if np.any(sigma_vec <= 0):
        raise ConfigurationError("sigma must be positive")
    sigma2 = sigma_vec**2
    return ModelSpec(
        d=d,
        s=d,
        log_density_x=partial(_gm_logp, mu=mu_vec, sigma2=sigma2),
        statistic=partial(_gm_stat, d=d),
        cumulant=partial(_gm_cumulant, mu=mu_vec, sigma2=sigma2),
        cumulant_domain=unbounded_domain(d),
        conjugacy_tag=GAUSSIAN_IDENTITY,
        name="gaussian-mean",
        mean_fn=partial(_gm_mean, mu=mu_vec, sigma2=sigma2),
        cov_fn=partial(_gm_cov, sigma2=sigma2),
        third_fn=partial(_gm_third, s=d),
        tilted_family=partial(_gm_tilted, mu=mu_vec, sigma2=sigma2),
        gauss_identity_params=(mu_vec, sigma2),
    )


# -- exponential-mean: X ~ Exp(rate) on (0, inf), u = identity (d = 1) ------


def _exp_logp(x, rate):
    # The boundary value log(rate) at 0 is the right-continuous convention,
    # which keeps grid tabulations starting at the support edge exact.
    pts, single = _points(x, 1)
    v = pts[..., 0]
    out = np.where(v >= 0, math.log(rate) - rate * v, -np.inf)
    return float(out[0]) if single else out


def _exp_cumulant(t, rate):
    t = float(np.asarray(t).reshape(()))
    return -math.log1p(-t / rate)


def _exp_mean(t, rate):
    t = np.asarray(t, dtype=float)
    return 1.0 / (rate - t)


def _exp_cov(t, rate):
    inv = 1.0 / (rate - float(np.asarray(t).reshape(())))
    return np.array([[inv * inv]])


def _exp_third(t, rate):
    inv = 1.0 / (rate - float(np.asarray(t).reshape(())))
    return np.array([2.0 * inv * inv * inv])


def _exp_tilted_draw(rng, size, scale):
    if size is None:
        return np.array([rng.exponential(scale)])
    return rng.exponential(scale, size=(size, 1))


def _exp_tilted_logpdf(x, tilted_rate):
    pts, single = _points(x, 1)
    v = pts[..., 0]
    out = np.where(v >= 0, math.log(tilted_rate) - tilted_rate * v, -np.inf)
    return float(out[0]) if single else out


def _exp_tilted(t, rate):
    tilted_rate = rate - float(np.asarray(t).reshape(()))
    if tilted_rate <= 0:
        raise DomainError("tilt at or beyond the exponential rate", coord=0)
    return TiltedFamily(partial(_exp_tilted_draw, scale=1.0 / tilted_rate),
                        partial(_exp_tilted_logpdf, tilted_rate=tilted_rate))


def _exp_step_window(gauss_mean, beta, rate):
    hi = max(40.0 / rate, float(gauss_mean[0]) + 12.0 * math.sqrt(float(beta[0, 0])))
    return (0.0, hi)


def _exp_x_window(t, rate):
    tilted_rate = rate - float(np.asarray(t).reshape(()))
    return (0.0, 40.0 / tilted_rate)


def _exponential_mean_model(rate) -> ModelSpec:
    rate = float(rate)
    if rate <= 0:
        raise ConfigurationError("rate must be positive")
    return ModelSpec(
        d=1,
        s=1,
        log_density_x=partial(_exp_logp, rate=rate),
        statistic=partial(_gm_stat, d=1),
        cumulant=partial(_exp_cumulant, rate=rate),
        cumulant_domain=CumulantDomain(np.array([-np.inf]), np.array([rate])),
        conjugacy_tag=GENERIC_1D,
        name="exponential-mean",
        mean_fn=partial(_exp_mean, rate=rate),
        cov_fn=partial(_exp_cov, rate=rate),
        third_fn=partial(_exp_third, rate=rate),
        tilted_family=partial(_exp_tilted, rate=rate),
        step_window_fn=partial(_exp_step_window, rate=rate),
        x_window_fn=partial(_exp_x_window, rate=rate),
    )


# -- gaussian-mean-and-square: X ~ N(mu, sigma^2) on R, u(x) = (x, x^2) -----


def _ms_logp(x, mu, sigma2):
    pts, single = _points(x, 1)
    v = pts[..., 0]
    out = -0.5 * ((v - mu) ** 2 / sigma2 + math.log(2.0 * math.pi * sigma2))
    return float(out[0]) if single else out


def _ms_stat(x):
    pts, single = _points(x, 1)
    v = pts[..., 0]
    out = np.stack([v, v * v], axis=-1)
    return out[0] if single else out


def _ms_tau(t2, sigma2):
    return 1.0 - 2.0 * sigma2 * t2


def _ms_cumulant(t, mu, sigma2):
    # near the tau -> 0 boundary the value overflows to +inf, which the
    # tilt solver's line search treats correctly
    tau = _ms_tau(float(t[1]), sigma2)
    b = float(t[0]) + mu / sigma2
    with np.errstate(over="ignore"):
        return float(-0.5 * math.log(tau) + b * b * sigma2 / (2.0 * tau)
                     - mu * mu / (2.0 * sigma2))


def _ms_mean(t, mu, sigma2):
    t = np.asarray(t, dtype=float)
    tau = _ms_tau(t[1], sigma2)
    m1 = (t[0] * sigma2 + mu) / tau
    m2 = sigma2 / tau + m1 * m1
    return np.array([m1, m2])


def _ms_cov(t, mu, sigma2):
    tau = _ms_tau(float(t[1]), sigma2)
    m1 = (float(t[0]) * sigma2 + mu) / tau
    with np.errstate(over="ignore"):
        c11 = sigma2 / tau
        c12 = 2.0 * sigma2 * m1 / tau
        c22 = 2.0 * sigma2 * sigma2 / (tau * tau) + 4.0 * sigma2 * m1 * m1 / tau
    return np.array([[c11, c12], [c12, c22]])


def _ms_tilted(t, mu, sigma2):
    t = np.asarray(t, dtype=float)
    tau = _ms_tau(t[1], sigma2)
    if tau <= 0:
        raise DomainError("second tilt coordinate beyond 1/(2 sigma^2)", coord=1)
    var = sigma2 / tau
    mean = var * (t[0] + mu / sigma2)
    return TiltedFamily(
        partial(_gm_tilted_draw, mean=np.array([mean]), sd=np.array([math.sqrt(var)])),
        partial(_ms_logp, mu=mean, sigma2=var),
    )


def _ms_step_window(gauss_mean, beta, mu, sigma2):
    sd = math.sqrt(sigma2)
    half = 12.0 * sd
    reach = float(gauss_mean[1]) + 12.0 * math.sqrt(float(beta[1, 1]))
    if reach > 0:
        half = max(half, math.sqrt(reach) + 2.0 * sd)
    return (mu - half, mu + half)


def _ms_x_window(t, mu, sigma2):
    t = np.asarray(t, dtype=float)
    tau = _ms_tau(t[1], sigma2)
    var = sigma2 / tau
    mean = var * (t[0] + mu / sigma2)
    sd = math.sqrt(var)
    return (mean - 12.0 * sd, mean + 12.0 * sd)


def _ms_predicate(t, sigma2):
    return _ms_tau(float(t[1]), sigma2) > 0


def _gaussian_mean_square_model(mu, sigma) -> ModelSpec:
    mu = float(mu)
    sigma = float(sigma)
    if sigma <= 0:
        raise ConfigurationError("sigma must be positive")
    sigma2 = sigma * sigma
    domain = CumulantDomain(
        np.array([-np.inf, -np.inf]),
        np.array([np.inf, 1.0 / (2.0 * sigma2)]),
        predicate=partial(_ms_predicate, sigma2=sigma2),
    )
    return ModelSpec(
        d=1,
        s=2,
        log_density_x=partial(_ms_logp, mu=mu, sigma2=sigma2),
        statistic=_ms_stat,
        cumulant=partial(_ms_cumulant, mu=mu, sigma2=sigma2),
        cumulant_domain=domain,
        conjugacy_tag=GENERIC_1D,
        name="gaussian-mean-and-square",
        mean_fn=partial(_ms_mean, mu=mu, sigma2=sigma2),
        cov_fn=partial(_ms_cov, mu=mu, sigma2=sigma2),
        tilted_family=partial(_ms_tilted, mu=mu, sigma2=sigma2),
        step_window_fn=partial(_ms_step_window, mu=mu, sigma2=sigma2),
        x_window_fn=partial(_ms_x_window, mu=mu, sigma2=sigma2),
    )


BUILTIN_FAMILIES = ("gaussian-mean", "exponential-mean", "gaussian-mean-and-square")


def builtin_model(name: str, **params) -> ModelSpec:
    """Construct one of the built-in model families.

    gaussian-mean:            mu, sigma, d (u = identity, s = d)
    exponential-mean:         rate (d = s = 1)
    gaussian-mean-and-square: mu, sigma (d = 1, s = 2, u(x) = (x, x^2))
    """
    if name == "gaussian-mean":
        spec = _gaussian_mean_model(params.pop("mu", 0.0), params.pop("sigma", 1.0),
                                    int(params.pop("d", 1)))
    elif name == "exponential-mean":
        spec = _exponential_mean_model(params.pop("rate", 1.0))
    elif name == "gaussian-mean-and-square":
        spec = _gaussian_mean_square_model(params.pop("mu", 0.0), params.pop("sigma", 1.0))
    else:
        raise ConfigurationError(f"unknown model family {name!r}")
    if params:
        raise ConfigurationError(f"unexpected parameters for {name}: {sorted(params)}")
    return spec
