"""Log densities and samplers for the distribution families used by the model.

All densities are fully normalized, including truncation mass, because the
MCMC updates for scale hyperparameters move truncation bounds: dropping a
normalizing constant that depends on another parameter would silently change
the posterior.

Scale/precision conventions follow the model definition:

* Normal is parameterized by mean and *variance*.
* Student-t is parameterized by location ``mu``, *precision* ``prec`` and
  degrees of freedom ``df``; ``(x - mu) * sqrt(prec)`` is standard t.
* Gamma is shape/rate.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import betaln, gammaln, stdtr, stdtrit

LOG_2PI = math.log(2.0 * math.pi)


def norm_logpdf(x, mean, var):
    """Normal log density with variance parameterization."""
    x = np.asarray(x, dtype=float)
    return -0.5 * (LOG_2PI + np.log(var)) - 0.5 * (x - mean) ** 2 / var


def halfnorm_logpdf(x, var):
    """Half-Normal on [0, inf): twice the Normal(0, var) density."""
    x = np.asarray(x, dtype=float)
    out = math.log(2.0) + norm_logpdf(x, 0.0, var)
    return np.where(x >= 0.0, out, -np.inf)


def gamma_logpdf(x, shape, rate):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = shape * np.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x
    return np.where(x > 0.0, out, -np.inf)


def beta_logpdf(x, a, b):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - betaln(a, b)
    return np.where((x > 0.0) & (x < 1.0), out, -np.inf)


def t_logpdf(x, mu, prec, df):
    """Non-standardized Student-t: (x - mu) * sqrt(prec) is t(df)."""
    x = np.asarray(x, dtype=float)
    z2 = prec * (x - mu) ** 2
    return (
        gammaln((df + 1.0) / 2.0)
        - gammaln(df / 2.0)
        + 0.5 * (np.log(prec) - math.log(df) - math.log(math.pi))
        - (df + 1.0) / 2.0 * np.log1p(z2 / df)
    )


def t_cdf(x, mu, prec, df):
    """CDF of the non-standardized Student-t above."""
    x = np.asarray(x, dtype=float)
    return stdtr(df, (x - mu) * np.sqrt(prec))


def halft_logpdf(x, prec, df):
    """Half-t on [0, inf): twice the t(0, prec, df) density."""
    x = np.asarray(x, dtype=float)
    out = math.log(2.0) + t_logpdf(x, 0.0, prec, df)
    return np.where(x >= 0.0, out, -np.inf)


def trunc_t_logpdf(x, prec, df, lower=0.0, upper=np.inf):
    """Student-t(0, prec, df) restricted to [lower, upper], renormalized."""
    x = np.asarray(x, dtype=float)
    if np.isinf(upper):
        mass_hi = 1.0
    else:
        mass_hi = stdtr(df, upper * math.sqrt(prec))
    mass_lo = stdtr(df, lower * math.sqrt(prec)) if lower != 0.0 else 0.5
    if lower == 0.0 and np.isinf(upper):
        return halft_logpdf(x, prec, df)
    mass = mass_hi - mass_lo
    if mass <= 0.0:
        return np.where(np.isnan(x), np.nan, -np.inf)
    out = t_logpdf(x, 0.0, prec, df) - np.log(mass)
    return np.where((x >= lower) & (x <= upper), out, -np.inf)


# ---------------------------------------------------------------------------
# samplers (all take a numpy Generator)


def sample_halfnorm(rng, var, size=None):
    return np.abs(rng.normal(0.0, math.sqrt(var), size=size))


def sample_halft(rng, prec, df, size=None):
    # |T| for central t has density 2 f(x) on [0, inf)
    return np.abs(rng.standard_t(df, size=size)) / math.sqrt(prec)


def sample_trunc_t(rng, prec, df, lower, upper, size=None):
    """Inverse-CDF draw from t(0, prec, df) restricted to [lower, upper]."""
    lo = stdtr(df, lower * math.sqrt(prec))
    hi = 1.0 if np.isinf(upper) else stdtr(df, upper * math.sqrt(prec))
    u = rng.uniform(lo, hi, size=size)
    return stdtrit(df, u) / math.sqrt(prec)
