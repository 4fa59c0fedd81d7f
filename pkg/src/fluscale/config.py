"""Flat key = value configuration files with dotted section keys.

Example::

    # season window
    season.start_epiweek = 40
    season.length = 35
    model.gamma_shape = 5
    mcmc.iterations = 30000

Unknown keys are rejected so typos fail loudly. Command-line flags override
file values.
"""

from __future__ import annotations

from .data import SeasonCalendar
from .model import Hyperconfig
from .sampler import McmcConfig

KNOWN_KEYS = {
    "season.start_epiweek": int,
    "season.length": int,
    "model.gamma_shape": float,
    "model.gamma_rate": float,
    "model.t_df": float,
    "model.eta_scale_prior_var": float,
    "model.beta_floor": float,
    "mcmc.chains": int,
    "mcmc.iterations": int,
    "mcmc.thin": int,
    "mcmc.burnin": int,
    "mcmc.seed": int,
    "mcmc.target_accept": float,
    "mcmc.init_step": float,
    "evaluation.first_week": int,
    "evaluation.last_week": int,
    "evaluation.point_estimator": lambda v: _choice(v, ("mean", "mode")),
    "selfcheck.cycles": int,
}


def _choice(value: str, allowed: tuple[str, ...]) -> str:
    if value not in allowed:
        raise ValueError(value)
    return value


class ConfigError(ValueError):
    pass


def parse_config(path) -> dict:
    """Parse a config file into {dotted key: typed value}."""
    out: dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: line {lineno}: expected key = value")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in KNOWN_KEYS:
                raise ConfigError(f"{path}: line {lineno}: unknown key {key!r}")
            try:
                out[key] = KNOWN_KEYS[key](value.strip())
            except ValueError:
                raise ConfigError(f"{path}: line {lineno}: bad value for {key}") from None
    return out


def calendar_from(cfg: dict) -> SeasonCalendar:
    return SeasonCalendar(
        start_epiweek=cfg.get("season.start_epiweek", 40),
        n_weeks=cfg.get("season.length", 35),
    )


def hyper_from(cfg: dict) -> Hyperconfig:
    base = Hyperconfig()
    return Hyperconfig(
        gamma_shape=cfg.get("model.gamma_shape", base.gamma_shape),
        gamma_rate=cfg.get("model.gamma_rate", base.gamma_rate),
        t_df=cfg.get("model.t_df", base.t_df),
        eta_scale_prior_var=cfg.get("model.eta_scale_prior_var", base.eta_scale_prior_var),
        beta_floor=cfg.get("model.beta_floor", base.beta_floor),
    )


def mcmc_from(cfg: dict, seed: int | None = None) -> McmcConfig:
    base = McmcConfig()
    return McmcConfig(
        n_chains=cfg.get("mcmc.chains", base.n_chains),
        n_iterations=cfg.get("mcmc.iterations", base.n_iterations),
        thin=cfg.get("mcmc.thin", base.thin),
        burnin=cfg.get("mcmc.burnin", base.burnin),
        seed=seed if seed is not None else cfg.get("mcmc.seed", base.seed),
        target_accept=cfg.get("mcmc.target_accept", base.target_accept),
        init_step=cfg.get("mcmc.init_step", base.init_step),
    )
