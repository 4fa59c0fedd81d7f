"""Hierarchical Beta state-space model for multiscale ILI panels.

The observed proportion y[r,s,t] for region r, season s, week t is Beta
distributed around a latent probability theta[r,s,t] with region-specific
concentration lam[r]:

    y ~ Beta(lam * theta, lam * (1 - theta))
    logit(theta) = mu_common[t] + mu_region[r,t] + mu_season[s,t]
                   + mu_interaction[r,s,t]

mu_common and mu_region evolve as Gaussian random walks forward in time.
mu_season and mu_interaction are random walks *backward* in time: the walk is
anchored at the final week and innovates toward week 1, which concentrates
borrowing across seasons in the late-season tail. mu_interaction additionally
shrinks geometrically toward a region intercept eta[r] at the anchor, with
per-step autoregression alpha[r], so E[mu_interaction at k weeks before the
anchor] = alpha^k * eta. All arrays here are stored in forward time.

Walk variances get half-t(df=3) or half-Normal priors; their precisions get
Gamma(shape, rate) priors. The seasonal innovation variance is constrained
below the anchor variance (the walk tightens as it leaves the anchor).
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from scipy.special import expit

from . import densities as dens


class NumericalError(RuntimeError):
    """A density evaluation produced a non-finite value for in-support input."""


@dataclass(frozen=True)
class ModelDims:
    n_regions: int
    n_seasons: int
    n_weeks: int

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_regions, self.n_seasons, self.n_weeks)


@dataclass(frozen=True)
class Hyperconfig:
    """Fixed hyperparameters; defaults are the reference configuration."""

    gamma_shape: float = 5.0
    gamma_rate: float = 5.0
    t_df: float = 3.0
    # prior variance of the half-Normal on sigma2_eta
    eta_scale_prior_var: float = 0.05
    # floor for Beta shape parameters, guards against overflow of logit(theta)
    beta_floor: float = 1e-8


@dataclass
class ModelState:
    """One point in parameter space. Shapes: see ``param_layout``."""

    mu_common: np.ndarray  # (T,)
    mu_region: np.ndarray  # (R, T)
    mu_season: np.ndarray  # (S, T)
    mu_interaction: np.ndarray  # (R, S, T)
    lam: np.ndarray  # (R,) Beta concentrations
    lam_prec: float
    sigma2_common_init: float
    sigma2_common: float
    prec_common_init: float
    prec_common: float
    sigma2_region_init: float
    prec_region_init: float
    sigma2_region: np.ndarray  # (R,)
    prec_region: float
    sigma2_season_last: float  # anchor-week variance of the seasonal walk
    sigma2_season: float  # innovation variance, <= sigma2_season_last
    prec_season: float
    eta: np.ndarray  # (R,) interaction anchor means
    sigma2_eta: float
    alpha: np.ndarray  # (R,) interaction shrinkage in (0,1)
    alpha_a: float
    alpha_b: float
    sigma2_interaction: np.ndarray  # (R, T); [:, t] is the week-t draw variance
    prec_interaction: float

    def copy(self) -> "ModelState":
        kw = {}
        for f in fields(self):
            v = getattr(self, f.name)
            kw[f.name] = v.copy() if isinstance(v, np.ndarray) else v
        return ModelState(**kw)

    @property
    def dims(self) -> ModelDims:
        R, S, T = self.mu_interaction.shape
        return ModelDims(R, S, T)


_SCALAR_PARAMS = (
    "lam_prec",
    "sigma2_common_init",
    "sigma2_common",
    "prec_common_init",
    "prec_common",
    "sigma2_region_init",
    "prec_region_init",
    "prec_region",
    "sigma2_season_last",
    "sigma2_season",
    "prec_season",
    "sigma2_eta",
    "alpha_a",
    "alpha_b",
    "prec_interaction",
)


def param_layout(dims: ModelDims) -> list[tuple[str, tuple[int, ...]]]:
    """Canonical (name, shape) layout used for flattening states."""
    R, S, T = dims.shape
    layout: list[tuple[str, tuple[int, ...]]] = [
        ("mu_common", (T,)),
        ("mu_region", (R, T)),
        ("mu_season", (S, T)),
        ("mu_interaction", (R, S, T)),
        ("lam", (R,)),
        ("sigma2_region", (R,)),
        ("eta", (R,)),
        ("alpha", (R,)),
        ("sigma2_interaction", (R, T)),
    ]
    layout.extend((name, ()) for name in _SCALAR_PARAMS)
    return layout


def flatten_state(state: ModelState) -> np.ndarray:
    parts = []
    for name, shape in param_layout(state.dims):
        v = np.asarray(getattr(state, name), dtype=float)
        parts.append(v.reshape(-1) if shape else v.reshape(1))
    return np.concatenate(parts)


def unflatten_state(vec: np.ndarray, dims: ModelDims) -> ModelState:
    kw = {}
    pos = 0
    for name, shape in param_layout(dims):
        size = int(np.prod(shape)) if shape else 1
        chunk = vec[pos : pos + size]
        kw[name] = chunk.reshape(shape).copy() if shape else float(chunk[0])
        pos += size
    if pos != len(vec):
        raise ValueError(f"flat vector has {len(vec)} entries, expected {pos}")
    return ModelState(**kw)


def param_names(dims: ModelDims) -> list[str]:
    """Scalar coordinate names matching ``flatten_state`` order."""
    names: list[str] = []
    for name, shape in param_layout(dims):
        if not shape:
            names.append(name)
        else:
            for idx in np.ndindex(shape):
                names.append(f"{name}[{','.join(map(str, idx))}]")
    return names


# ---------------------------------------------------------------------------
# densities


def linear_predictor(state: ModelState) -> np.ndarray:
    return (
        state.mu_common[None, None, :]
        + state.mu_region[:, None, :]
        + state.mu_season[None, :, :]
        + state.mu_interaction
    )


def theta_panel(state: ModelState) -> np.ndarray:
    """Latent ILI probabilities, (R, S, T)."""
    return expit(linear_predictor(state))


def beta_shapes(theta: np.ndarray, lam: np.ndarray, floor: float) -> tuple[np.ndarray, np.ndarray]:
    lam = lam[:, None, None]
    return np.maximum(lam * theta, floor), np.maximum(lam * (1.0 - theta), floor)


def log_likelihood(state: ModelState, values: np.ndarray, hyper: Hyperconfig = Hyperconfig()) -> float:
    """Beta log likelihood of a panel; NaN entries are missing."""
    obs = ~np.isnan(values)
    if not obs.any():
        return 0.0
    y = np.where(obs, values, 0.5)
    a, b = beta_shapes(theta_panel(state), np.asarray(state.lam, dtype=float), hyper.beta_floor)
    terms = dens.beta_logpdf(y, a, b)
    total = float(terms[obs].sum())
    if not np.isfinite(total):
        bad = np.argwhere(obs & ~np.isfinite(terms))
        raise NumericalError(f"non-finite likelihood at (r,s,t)={tuple(bad[0])}")
    return total


def log_prior(state: ModelState, hyper: Hyperconfig = Hyperconfig()) -> float:
    """Joint log prior; -inf outside the support."""
    R, S, T = state.dims.shape
    sh, rt, df = hyper.gamma_shape, hyper.gamma_rate, hyper.t_df

    positives = [
        state.lam_prec,
        state.sigma2_common_init,
        state.sigma2_common,
        state.prec_common_init,
        state.prec_common,
        state.sigma2_region_init,
        state.prec_region_init,
        state.prec_region,
        state.sigma2_season_last,
        state.sigma2_season,
        state.prec_season,
        state.sigma2_eta,
        state.alpha_a,
        state.alpha_b,
        state.prec_interaction,
    ]
    if min(positives) <= 0.0:
        return -np.inf
    if (
        (np.asarray(state.lam) <= 0).any()
        or (np.asarray(state.sigma2_region) <= 0).any()
        or (np.asarray(state.sigma2_interaction) <= 0).any()
    ):
        return -np.inf
    alpha = np.asarray(state.alpha, dtype=float)
    if ((alpha <= 0) | (alpha >= 1)).any():
        return -np.inf
    if state.sigma2_season > state.sigma2_season_last:
        return -np.inf

    lp = 0.0
    # hyper precisions
    for x in (
        state.lam_prec,
        state.prec_common_init,
        state.prec_common,
        state.prec_region_init,
        state.prec_region,
        state.prec_season,
        state.prec_interaction,
        state.alpha_a,
        state.alpha_b,
    ):
        lp += float(dens.gamma_logpdf(x, sh, rt))

    # concentrations and scales
    lp += float(dens.halft_logpdf(state.lam, state.lam_prec, df).sum())
    lp += float(dens.halfnorm_logpdf(state.sigma2_common_init, 1.0 / state.prec_common_init))
    lp += float(dens.halfnorm_logpdf(state.sigma2_common, 1.0 / state.prec_common))
    lp += float(dens.halfnorm_logpdf(state.sigma2_region_init, 1.0 / state.prec_region_init))
    lp += float(dens.halft_logpdf(state.sigma2_region, state.prec_region, df).sum())
    lp += float(dens.halft_logpdf(state.sigma2_season_last, state.prec_season, df))
    lp += float(
        dens.trunc_t_logpdf(state.sigma2_season, state.prec_season, df, 0.0, state.sigma2_season_last)
    )
    lp += float(dens.halfnorm_logpdf(state.sigma2_eta, hyper.eta_scale_prior_var))
    lp += float(dens.halft_logpdf(state.sigma2_interaction, state.prec_interaction, df).sum())

    # region intercepts and shrinkage of the interaction walk
    lp += float(dens.norm_logpdf(state.eta, 0.0, state.sigma2_eta).sum())
    lp += float(dens.beta_logpdf(alpha, state.alpha_a, state.alpha_b).sum())

    # forward walks
    lp += float(dens.norm_logpdf(state.mu_common[0], 0.0, state.sigma2_common_init))
    if T > 1:
        lp += float(
            dens.norm_logpdf(state.mu_common[1:], state.mu_common[:-1], state.sigma2_common).sum()
        )
    lp += float(dens.norm_logpdf(state.mu_region[:, 0], 0.0, state.sigma2_region_init).sum())
    if T > 1:
        lp += float(
            dens.norm_logpdf(
                state.mu_region[:, 1:], state.mu_region[:, :-1], state.sigma2_region[:, None]
            ).sum()
        )

    # backward walks, anchored at the final week
    lp += float(dens.norm_logpdf(state.mu_season[:, T - 1], 0.0, state.sigma2_season_last).sum())
    if T > 1:
        lp += float(
            dens.norm_logpdf(state.mu_season[:, :-1], state.mu_season[:, 1:], state.sigma2_season).sum()
        )
    lp += float(
        dens.norm_logpdf(
            state.mu_interaction[:, :, T - 1],
            state.eta[:, None],
            state.sigma2_interaction[:, None, T - 1],
        ).sum()
    )
    if T > 1:
        lp += float(
            dens.norm_logpdf(
                state.mu_interaction[:, :, :-1],
                alpha[:, None, None] * state.mu_interaction[:, :, 1:],
                state.sigma2_interaction[:, None, :-1],
            ).sum()
        )

    if np.isnan(lp):
        raise NumericalError("log prior is NaN inside the support")
    return lp


def log_joint(state: ModelState, values: np.ndarray, hyper: Hyperconfig = Hyperconfig()) -> float:
    lp = log_prior(state, hyper)
    if not np.isfinite(lp):
        return -np.inf
    return lp + log_likelihood(state, values, hyper)


# ---------------------------------------------------------------------------
# prior simulation


def sample_prior(
    dims: ModelDims,
    hyper: Hyperconfig = Hyperconfig(),
    rng: np.random.Generator | None = None,
    overrides: dict | None = None,
) -> ModelState:
    """Ancestral draw from the prior.

    ``overrides`` maps parameter names to fixed values substituted at draw
    time, so later layers condition on them (e.g. fixing ``alpha`` and ``eta``
    to study the interaction walk's shrinkage).
    """
    rng = rng or np.random.default_rng()
    overrides = overrides or {}
    R, S, T = dims.shape
    sh, rt, df = hyper.gamma_shape, hyper.gamma_rate, hyper.t_df

    def take(name, value, shape=None):
        if name in overrides:
            out = np.asarray(overrides[name], dtype=float)
            if shape is not None:
                out = np.broadcast_to(out, shape).copy()
            else:
                out = float(out)
            return out
        return value

    lam_prec = take("lam_prec", float(rng.gamma(sh, 1.0 / rt)))
    prec_common_init = take("prec_common_init", float(rng.gamma(sh, 1.0 / rt)))
    prec_common = take("prec_common", float(rng.gamma(sh, 1.0 / rt)))
    prec_region_init = take("prec_region_init", float(rng.gamma(sh, 1.0 / rt)))
    prec_region = take("prec_region", float(rng.gamma(sh, 1.0 / rt)))
    prec_season = take("prec_season", float(rng.gamma(sh, 1.0 / rt)))
    prec_interaction = take("prec_interaction", float(rng.gamma(sh, 1.0 / rt)))
    alpha_a = take("alpha_a", float(rng.gamma(sh, 1.0 / rt)))
    alpha_b = take("alpha_b", float(rng.gamma(sh, 1.0 / rt)))

    lam = take("lam", dens.sample_halft(rng, lam_prec, df, size=R), (R,))
    sigma2_common_init = take("sigma2_common_init", float(dens.sample_halfnorm(rng, 1.0 / prec_common_init)))
    sigma2_common = take("sigma2_common", float(dens.sample_halfnorm(rng, 1.0 / prec_common)))
    sigma2_region_init = take("sigma2_region_init", float(dens.sample_halfnorm(rng, 1.0 / prec_region_init)))
    sigma2_region = take("sigma2_region", dens.sample_halft(rng, prec_region, df, size=R), (R,))
    sigma2_season_last = take("sigma2_season_last", float(dens.sample_halft(rng, prec_season, df)))
    sigma2_season = take(
        "sigma2_season",
        float(dens.sample_trunc_t(rng, prec_season, df, 0.0, sigma2_season_last)),
    )
    sigma2_eta = take("sigma2_eta", float(dens.sample_halfnorm(rng, hyper.eta_scale_prior_var)))
    sigma2_interaction = take(
        "sigma2_interaction", dens.sample_halft(rng, prec_interaction, df, size=(R, T)), (R, T)
    )

    eta = take("eta", rng.normal(0.0, np.sqrt(sigma2_eta), size=R), (R,))
    alpha = take("alpha", rng.beta(alpha_a, alpha_b, size=R), (R,))

    mu_common = np.empty(T)
    mu_common[0] = rng.normal(0.0, np.sqrt(sigma2_common_init))
    for t in range(1, T):
        mu_common[t] = rng.normal(mu_common[t - 1], np.sqrt(sigma2_common))
    mu_common = take("mu_common", mu_common, (T,))

    mu_region = np.empty((R, T))
    mu_region[:, 0] = rng.normal(0.0, np.sqrt(sigma2_region_init), size=R)
    for t in range(1, T):
        mu_region[:, t] = rng.normal(mu_region[:, t - 1], np.sqrt(sigma2_region))
    mu_region = take("mu_region", mu_region, (R, T))

    mu_season = np.empty((S, T))
    mu_season[:, T - 1] = rng.normal(0.0, np.sqrt(sigma2_season_last), size=S)
    for t in range(T - 2, -1, -1):
        mu_season[:, t] = rng.normal(mu_season[:, t + 1], np.sqrt(sigma2_season))
    mu_season = take("mu_season", mu_season, (S, T))

    mu_interaction = np.empty((R, S, T))
    mu_interaction[:, :, T - 1] = rng.normal(
        eta[:, None], np.sqrt(sigma2_interaction[:, None, T - 1]), size=(R, S)
    )
    for t in range(T - 2, -1, -1):
        mu_interaction[:, :, t] = rng.normal(
            alpha[:, None] * mu_interaction[:, :, t + 1],
            np.sqrt(sigma2_interaction[:, None, t]),
            size=(R, S),
        )
    mu_interaction = take("mu_interaction", mu_interaction, (R, S, T))

    return ModelState(
        mu_common=mu_common,
        mu_region=mu_region,
        mu_season=mu_season,
        mu_interaction=mu_interaction,
        lam=lam,
        lam_prec=lam_prec,
        sigma2_common_init=sigma2_common_init,
        sigma2_common=sigma2_common,
        prec_common_init=prec_common_init,
        prec_common=prec_common,
        sigma2_region_init=sigma2_region_init,
        prec_region_init=prec_region_init,
        sigma2_region=sigma2_region,
        prec_region=prec_region,
        sigma2_season_last=sigma2_season_last,
        sigma2_season=sigma2_season,
        prec_season=prec_season,
        eta=eta,
        sigma2_eta=sigma2_eta,
        alpha=alpha,
        alpha_a=alpha_a,
        alpha_b=alpha_b,
        sigma2_interaction=sigma2_interaction,
        prec_interaction=prec_interaction,
    )


def sample_observations(
    state: ModelState,
    rng: np.random.Generator,
    hyper: Hyperconfig = Hyperconfig(),
) -> np.ndarray:
    """Draw a full synthetic panel from the observation model, (R, S, T).

    Draws are nudged off the {0, 1} boundary, where the Beta density is
    improper to evaluate; the clip is far below surveillance resolution.
    """
    a, b = beta_shapes(theta_panel(state), np.asarray(state.lam, dtype=float), hyper.beta_floor)
    y = rng.beta(a, b)
    return np.clip(y, 1e-300, 1.0 - 1e-16)


def _log_gamma_draw(shape: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # Gamma(k) == Gamma(k + 1) * U^(1/k), which stays exact in log space even
    # when the draw itself would underflow to zero for small k.
    g = rng.standard_gamma(shape + 1.0)
    u = -np.log1p(-rng.random(size=np.shape(shape)))
    return np.log(g) - u / shape


def sample_observations_log(
    state: ModelState,
    rng: np.random.Generator,
    hyper: Hyperconfig = Hyperconfig(),
) -> tuple[np.ndarray, np.ndarray]:
    """Draw a panel in log space, returning ``(log y, log(1 - y))``.

    Equivalent in distribution to :func:`sample_observations` but exact for
    arbitrarily extreme Beta shapes: direct draws collapse onto {0, 1} atoms
    once the density mass sits below float resolution, and any clipped atom
    disagrees with the continuous density the likelihood evaluates.
    """
    a, b = beta_shapes(theta_panel(state), np.asarray(state.lam, dtype=float), hyper.beta_floor)
    log_g1 = _log_gamma_draw(a, rng)
    log_g2 = _log_gamma_draw(b, rng)
    log_total = np.logaddexp(log_g1, log_g2)
    return log_g1 - log_total, log_g2 - log_total
