"""Adaptive random-walk Metropolis-within-Gibbs sampler for the panel model.

Every scalar parameter is updated by a univariate Metropolis step on a
transformed scale chosen to make the walk unconstrained: identity for means,
log for positive scales/precisions, logit for the shrinkage parameters, and a
logit on the ratio for the innovation variance bounded by its anchor variance
(proposal ratios carry the matching Jacobian terms). Step sizes adapt toward a
target acceptance rate by stochastic approximation during burn-in and are
frozen afterward, so retained draws come from a fixed Markov kernel.

Updates are vectorized over conditionally independent coordinates: weekly
walk values of the same time parity share no factor of the joint density and
are proposed/accepted together (the walk graphs are chains, so two colors
suffice); region-indexed blocks are independent across regions. Each block
evaluates only the factors of the joint density that mention it, which the
tests cross-check against the full joint.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit, gammaln, logit

from . import densities as dens
from .model import (
    Hyperconfig,
    ModelDims,
    ModelState,
    flatten_state,
    log_joint,
    log_prior,
    param_layout,
    param_names,
    sample_observations,
    sample_observations_log,
    sample_prior,
    unflatten_state,
)

LOG_2PI = math.log(2.0 * math.pi)


class SamplerError(RuntimeError):
    pass


@dataclass(frozen=True)
class McmcConfig:
    """Chain layout and adaptation settings.

    ``burnin`` counts *thinned* draws discarded from the front of each chain;
    the reference protocol keeps 30000/10 - 1500 = 1500 draws per chain.
    """

    n_chains: int = 3
    n_iterations: int = 30000
    thin: int = 10
    burnin: int = 1500
    seed: int = 1
    target_accept: float = 0.44
    init_step: float = 0.5
    adapt_cap: float = 0.25  # cap on the stochastic-approximation gain
    max_init_tries: int = 100

    @property
    def kept_per_chain(self) -> int:
        return self.n_iterations // self.thin - self.burnin

    def validate(self) -> None:
        if self.thin < 1 or self.n_chains < 1:
            raise ValueError("thin and n_chains must be positive")
        if self.kept_per_chain <= 0:
            raise ValueError("burn-in discards every thinned draw")


def layout_offsets(dims: ModelDims) -> dict[str, tuple[int, tuple[int, ...]]]:
    """Name -> (flat offset, shape) for the canonical flat layout."""
    out = {}
    pos = 0
    for name, shape in param_layout(dims):
        out[name] = (pos, shape)
        pos += int(np.prod(shape)) if shape else 1
    return out


@dataclass
class PosteriorDraws:
    """Pooled retained draws from one or more chains, as flat vectors."""

    draws: np.ndarray  # (M, P)
    chain_id: np.ndarray  # (M,)
    dims: ModelDims
    config: McmcConfig
    diagnostics: dict = field(default_factory=dict)
    accept_rates: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    def state_at(self, i: int) -> ModelState:
        return unflatten_state(self.draws[i], self.dims)

    def component(self, name: str) -> np.ndarray:
        """(M, *shape) view of one parameter across draws."""
        off, shape = layout_offsets(self.dims)[name]
        size = int(np.prod(shape)) if shape else 1
        block = self.draws[:, off : off + size]
        return block.reshape((self.n_draws,) + shape) if shape else block[:, 0]

    def scalar_names(self) -> list[str]:
        return param_names(self.dims)

    def save(self, path) -> None:
        np.savez_compressed(
            path,
            draws=self.draws,
            chain_id=self.chain_id,
            dims=np.array(self.dims.shape),
            config=np.array(json.dumps(asdict(self.config))),
            accept=np.array(json.dumps(self.accept_rates)),
        )

    @classmethod
    def load(cls, path) -> "PosteriorDraws":
        with np.load(path, allow_pickle=False) as z:
            dims = ModelDims(*(int(v) for v in z["dims"]))
            config = McmcConfig(**json.loads(str(z["config"])))
            return cls(
                draws=z["draws"],
                chain_id=z["chain_id"],
                dims=dims,
                config=config,
                accept_rates=json.loads(str(z["accept"])),
            )


def theta_draws(draws: PosteriorDraws) -> np.ndarray:
    """Latent probabilities theta for every retained draw, (M, R, S, T)."""
    mc = draws.component("mu_common")
    mr = draws.component("mu_region")
    ms = draws.component("mu_season")
    mi = draws.component("mu_interaction")
    pi = mc[:, None, None, :] + mr[:, :, None, :] + ms[:, None, :, :] + mi
    return expit(pi)


# ---------------------------------------------------------------------------
# the sweeper


class _Sweeper:
    """Mutable chain state plus cached panel quantities for one chain."""

    _WALKS = ("mu_common", "mu_region", "mu_season", "mu_interaction")
    _SCALARS = (
        ("lam_prec", "log"),
        ("prec_common_init", "log"),
        ("prec_common", "log"),
        ("prec_region_init", "log"),
        ("prec_region", "log"),
        ("prec_season", "log"),
        ("prec_interaction", "log"),
        ("alpha_a", "log"),
        ("alpha_b", "log"),
        ("sigma2_common_init", "log"),
        ("sigma2_common", "log"),
        ("sigma2_region_init", "log"),
        ("sigma2_season_last", "log"),
        ("sigma2_season", "ratio_logit"),
        ("sigma2_eta", "log"),
    )

    def __init__(self, state: ModelState, values: np.ndarray, hyper: Hyperconfig,
                 config: McmcConfig, rng: np.random.Generator, jacobian: bool = True,
                 log_values: tuple[np.ndarray, np.ndarray] | None = None):
        self.state = state
        self.hyper = hyper
        self.config = config
        self.rng = rng
        self.jacobian = jacobian
        R, S, T = state.dims.shape
        self.R, self.S, self.T = R, S, T

        obs = ~np.isnan(values)
        y = np.where(obs, values, 0.5)
        self.obsf = obs.astype(float)
        if log_values is not None:
            # exact (log y, log(1-y)) pair, used by the synthetic-data
            # validation paths where y itself may underflow
            self.logy = np.where(obs, log_values[0], 0.0)
            self.log1my = np.where(obs, log_values[1], 0.0)
        else:
            self.logy = np.where(obs, np.log(y), 0.0)
            self.log1my = np.where(obs, np.log1p(-y), 0.0)
        self.has_data = bool(obs.any())

        self.colors = [np.arange(0, T, 2), np.arange(1, T, 2)]
        # per-color contiguous copies of the data slices
        self.obsf_c = [self.obsf[:, :, sel].copy() for sel in self.colors]
        self.logy_c = [self.logy[:, :, sel].copy() for sel in self.colors]
        self.log1my_c = [self.log1my[:, :, sel].copy() for sel in self.colors]

        self.pi = np.asarray(
            state.mu_common[None, None, :]
            + state.mu_region[:, None, :]
            + state.mu_season[None, :, :]
            + state.mu_interaction
        )

        self.steps: dict[str, np.ndarray] = {
            "mu_common": np.full(T, config.init_step),
            "mu_region": np.full((R, T), config.init_step),
            "mu_season": np.full((S, T), config.init_step),
            "mu_interaction": np.full((R, S, T), config.init_step),
            "lam": np.full(R, config.init_step),
            "sigma2_region": np.full(R, config.init_step),
            "sigma2_interaction": np.full((R, T), config.init_step),
            "eta": np.full(R, config.init_step),
            "alpha": np.full(R, config.init_step),
            # translation moves along directions the likelihood cannot see
            "shift_common_region": np.full(T, config.init_step),
            "shift_common_season": np.full(T, config.init_step),
            "shift_season_interaction": np.full((S, T), config.init_step),
            "shift_region_interaction": np.full((R, T), config.init_step),
            "shift_series_common_region": np.full((), config.init_step),
            "shift_series_common_season": np.full((), config.init_step),
            "shift_series_season_interaction": np.full(S, config.init_step),
            "shift_series_region_interaction": np.full(R, config.init_step),
        }
        for name, _ in self._SCALARS:
            self.steps[name] = np.full((), config.init_step)

        self.acc_sum = {name: 0.0 for name in self.steps}
        self.acc_n = {name: 0 for name in self.steps}
        self.iteration = 0
        self.adapting = True

    # -- likelihood helpers -------------------------------------------------

    def _beta_terms(self, pi_slice: np.ndarray, color: int) -> np.ndarray:
        """Masked Beta log-density terms for the weeks of one color, given a
        candidate linear predictor slice; (R, S, K)."""
        th = expit(pi_slice)
        lam = self.state.lam[:, None, None]
        floor = self.hyper.beta_floor
        a = np.maximum(lam * th, floor)
        b = np.maximum(lam - lam * th, floor)
        terms = (
            gammaln(a + b)
            - gammaln(a)
            - gammaln(b)
            + (a - 1.0) * self.logy_c[color]
            + (b - 1.0) * self.log1my_c[color]
        )
        return terms * self.obsf_c[color]

    def _lik_lam(self, lam: np.ndarray, th: np.ndarray) -> np.ndarray:
        """Per-region log likelihood for candidate concentrations; (R,)."""
        lam3 = lam[:, None, None]
        floor = self.hyper.beta_floor
        a = np.maximum(lam3 * th, floor)
        b = np.maximum(lam3 - lam3 * th, floor)
        terms = (
            gammaln(a + b)
            - gammaln(a)
            - gammaln(b)
            + (a - 1.0) * self.logy
            + (b - 1.0) * self.log1my
        )
        return (terms * self.obsf).sum(axis=(1, 2))

    # -- generic pieces ------------------------------------------------------

    def _accept(self, name: str, log_ratio: np.ndarray, idx=None):
        """Draw accept decisions for a block, adapt steps, record stats."""
        log_ratio = np.asarray(log_ratio, dtype=float)
        accept = np.log(self.rng.random(log_ratio.shape)) < log_ratio
        aprob = np.exp(np.minimum(log_ratio, 0.0))
        if self.adapting:
            gain = min(self.config.adapt_cap, (self.iteration + 1.0) ** -0.6)
            steps = self.steps[name]
            upd = np.exp(gain * (aprob - self.config.target_accept))
            if idx is None:
                steps *= upd
            else:
                steps[idx] = steps[idx] * upd
        self.acc_sum[name] += float(aprob.sum())
        self.acc_n[name] += aprob.size
        return accept

    # -- walk updates ---------------------------------------------------------

    def _update_mu_common(self, color: int) -> None:
        st, T = self.state, self.T
        sel = self.colors[color]
        m = st.mu_common
        x = m[sel]
        step = self.steps["mu_common"][sel]
        xp = x + step * self.rng.standard_normal(x.shape)

        mean_in = np.where(sel == 0, 0.0, m[np.maximum(sel - 1, 0)])
        var_in = np.where(sel == 0, st.sigma2_common_init, st.sigma2_common)
        has_next = sel < T - 1
        nxt = m[np.minimum(sel + 1, T - 1)]

        def local(v):
            lp = dens.norm_logpdf(v, mean_in, var_in)
            return lp + np.where(has_next, dens.norm_logpdf(nxt, v, st.sigma2_common), 0.0)

        base = self.pi[:, :, sel]
        lik_old = self._beta_terms(base, color).sum(axis=(0, 1))
        lik_new = self._beta_terms(base + (xp - x)[None, None, :], color).sum(axis=(0, 1))
        accept = self._accept("mu_common", local(xp) - local(x) + lik_new - lik_old, idx=sel)

        delta = np.where(accept, xp - x, 0.0)
        m[sel] = x + delta
        self.pi[:, :, sel] = base + delta[None, None, :]

    def _update_mu_region(self, color: int) -> None:
        st, T = self.state, self.T
        sel = self.colors[color]
        m = st.mu_region
        x = m[:, sel]
        step = self.steps["mu_region"][:, sel]
        xp = x + step * self.rng.standard_normal(x.shape)

        v = st.sigma2_region[:, None]
        mean_in = np.where(sel == 0, 0.0, m[:, np.maximum(sel - 1, 0)])
        var_in = np.where(sel == 0, st.sigma2_region_init, v)
        has_next = sel < T - 1
        nxt = m[:, np.minimum(sel + 1, T - 1)]

        def local(w):
            lp = dens.norm_logpdf(w, mean_in, var_in)
            return lp + np.where(has_next, dens.norm_logpdf(nxt, w, v), 0.0)

        base = self.pi[:, :, sel]
        lik_old = self._beta_terms(base, color).sum(axis=1)
        lik_new = self._beta_terms(base + (xp - x)[:, None, :], color).sum(axis=1)
        accept = self._accept(
            "mu_region", local(xp) - local(x) + lik_new - lik_old, idx=(slice(None), sel)
        )

        delta = np.where(accept, xp - x, 0.0)
        m[:, sel] = x + delta
        self.pi[:, :, sel] = base + delta[:, None, :]

    def _update_mu_season(self, color: int) -> None:
        st, T = self.state, self.T
        sel = self.colors[color]
        m = st.mu_season
        x = m[:, sel]
        step = self.steps["mu_season"][:, sel]
        xp = x + step * self.rng.standard_normal(x.shape)

        # backward walk: week T-1 is the anchor, innovation runs toward week 0
        mean_in = np.where(sel == T - 1, 0.0, m[:, np.minimum(sel + 1, T - 1)])
        var_in = np.where(sel == T - 1, st.sigma2_season_last, st.sigma2_season)
        has_prev = sel > 0
        prev = m[:, np.maximum(sel - 1, 0)]

        def local(w):
            lp = dens.norm_logpdf(w, mean_in, var_in)
            return lp + np.where(has_prev, dens.norm_logpdf(prev, w, st.sigma2_season), 0.0)

        base = self.pi[:, :, sel]
        lik_old = self._beta_terms(base, color).sum(axis=0)
        lik_new = self._beta_terms(base + (xp - x)[None, :, :], color).sum(axis=0)
        accept = self._accept(
            "mu_season", local(xp) - local(x) + lik_new - lik_old, idx=(slice(None), sel)
        )

        delta = np.where(accept, xp - x, 0.0)
        m[:, sel] = x + delta
        self.pi[:, :, sel] = base + delta[None, :, :]

    def _update_mu_interaction(self, color: int) -> None:
        st, T = self.state, self.T
        sel = self.colors[color]
        m = st.mu_interaction
        x = m[:, :, sel]
        step = self.steps["mu_interaction"][:, :, sel]
        xp = x + step * self.rng.standard_normal(x.shape)

        alpha = st.alpha[:, None, None]
        vi = st.sigma2_interaction[:, None, sel]
        anchor = sel == T - 1
        mean_in = np.where(anchor, st.eta[:, None, None], alpha * m[:, :, np.minimum(sel + 1, T - 1)])
        has_prev = sel > 0
        prev = m[:, :, np.maximum(sel - 1, 0)]
        vi_prev = st.sigma2_interaction[:, None, np.maximum(sel - 1, 0)]

        def local(w):
            lp = dens.norm_logpdf(w, mean_in, vi)
            return lp + np.where(has_prev, dens.norm_logpdf(prev, alpha * w, vi_prev), 0.0)

        base = self.pi[:, :, sel]
        lik_old = self._beta_terms(base, color)
        lik_new = self._beta_terms(base + (xp - x), color)
        accept = self._accept(
            "mu_interaction",
            local(xp) - local(x) + lik_new - lik_old,
            idx=(slice(None), slice(None), sel),
        )

        delta = np.where(accept, xp - x, 0.0)
        m[:, :, sel] = x + delta
        self.pi[:, :, sel] = base + delta

    # -- translation moves ------------------------------------------------------
    #
    # The predictor only identifies the sum of the four walk components, so
    # coordinate updates crawl along the trade-off directions. Each move below
    # shifts one component up and a sibling block down by the same amount at a
    # week, leaving every predictor entry unchanged; only the walk priors enter
    # the accept ratio. Weeks of one color share no prior edges, so the moves
    # vectorize the same way the walk updates do.

    def _walk_delta_common(self, sel, delta):
        # change in mu_common's own prior terms when week sel moves by delta
        st, T = self.state, self.T
        m = st.mu_common
        x = m[sel]
        mean_in = np.where(sel == 0, 0.0, m[np.maximum(sel - 1, 0)])
        var_in = np.where(sel == 0, st.sigma2_common_init, st.sigma2_common)
        has_next = sel < T - 1
        nxt = m[np.minimum(sel + 1, T - 1)]

        def local(v):
            lp = dens.norm_logpdf(v, mean_in, var_in)
            return lp + np.where(has_next, dens.norm_logpdf(nxt, v, st.sigma2_common), 0.0)

        return local(x + delta) - local(x)

    def _walk_delta_region(self, sel, delta):
        st, T = self.state, self.T
        m = st.mu_region
        x = m[:, sel]
        v = st.sigma2_region[:, None]
        mean_in = np.where(sel == 0, 0.0, m[:, np.maximum(sel - 1, 0)])
        var_in = np.where(sel == 0, st.sigma2_region_init, v)
        has_next = sel < T - 1
        nxt = m[:, np.minimum(sel + 1, T - 1)]

        def local(w):
            lp = dens.norm_logpdf(w, mean_in, var_in)
            return lp + np.where(has_next, dens.norm_logpdf(nxt, w, v), 0.0)

        return local(x + delta) - local(x)

    def _walk_delta_season(self, sel, delta):
        st, T = self.state, self.T
        m = st.mu_season
        x = m[:, sel]
        mean_in = np.where(sel == T - 1, 0.0, m[:, np.minimum(sel + 1, T - 1)])
        var_in = np.where(sel == T - 1, st.sigma2_season_last, st.sigma2_season)
        has_prev = sel > 0
        prev = m[:, np.maximum(sel - 1, 0)]

        def local(w):
            lp = dens.norm_logpdf(w, mean_in, var_in)
            return lp + np.where(has_prev, dens.norm_logpdf(prev, w, st.sigma2_season), 0.0)

        return local(x + delta) - local(x)

    def _walk_delta_interaction(self, sel, delta):
        st, T = self.state, self.T
        m = st.mu_interaction
        x = m[:, :, sel]
        alpha = st.alpha[:, None, None]
        vi = st.sigma2_interaction[:, None, sel]
        anchor = sel == T - 1
        mean_in = np.where(anchor, st.eta[:, None, None], alpha * m[:, :, np.minimum(sel + 1, T - 1)])
        has_prev = sel > 0
        prev = m[:, :, np.maximum(sel - 1, 0)]
        vi_prev = st.sigma2_interaction[:, None, np.maximum(sel - 1, 0)]

        def local(w):
            lp = dens.norm_logpdf(w, mean_in, vi)
            return lp + np.where(has_prev, dens.norm_logpdf(prev, alpha * w, vi_prev), 0.0)

        return local(x + delta) - local(x)

    def _shift_blocks(self, color: int) -> None:
        st = self.state
        sel = self.colors[color]
        K = sel.size

        # common week up, every region down
        d = self.steps["shift_common_region"][sel] * self.rng.standard_normal(K)
        lr = self._walk_delta_common(sel, d) + self._walk_delta_region(sel, -d[None, :]).sum(axis=0)
        dd = np.where(self._accept("shift_common_region", lr, idx=sel), d, 0.0)
        st.mu_common[sel] += dd
        st.mu_region[:, sel] -= dd[None, :]

        # common week up, every season down
        d = self.steps["shift_common_season"][sel] * self.rng.standard_normal(K)
        lr = self._walk_delta_common(sel, d) + self._walk_delta_season(sel, -d[None, :]).sum(axis=0)
        dd = np.where(self._accept("shift_common_season", lr, idx=sel), d, 0.0)
        st.mu_common[sel] += dd
        st.mu_season[:, sel] -= dd[None, :]

        # one season up, its interactions down
        d = self.steps["shift_season_interaction"][:, sel] * self.rng.standard_normal((self.S, K))
        lr = self._walk_delta_season(sel, d) + self._walk_delta_interaction(sel, -d[None, :, :]).sum(
            axis=0
        )
        dd = np.where(self._accept("shift_season_interaction", lr, idx=(slice(None), sel)), d, 0.0)
        st.mu_season[:, sel] += dd
        st.mu_interaction[:, :, sel] -= dd[None, :, :]

        # one region up, its interactions down
        d = self.steps["shift_region_interaction"][:, sel] * self.rng.standard_normal((self.R, K))
        lr = self._walk_delta_region(sel, d) + self._walk_delta_interaction(
            sel, -d[:, None, :]
        ).sum(axis=1)
        dd = np.where(self._accept("shift_region_interaction", lr, idx=(slice(None), sel)), d, 0.0)
        st.mu_region[:, sel] += dd
        st.mu_interaction[:, :, sel] -= dd[:, None, :]

    def _series_delta_interaction(self, shift):
        # change in a whole interaction row's terms when mu_interaction[r,s,:]
        # moves by shift[r,s]; the AR coefficient keeps increments from cancelling
        st, T = self.state, self.T
        m = st.mu_interaction
        alpha = st.alpha[:, None, None]
        vi = st.sigma2_interaction[:, None, :]

        def terms(w):
            anchor = dens.norm_logpdf(
                w[:, :, T - 1], st.eta[:, None], st.sigma2_interaction[:, None, T - 1]
            )
            if T == 1:
                return anchor
            steps = dens.norm_logpdf(w[:, :, :-1], alpha * w[:, :, 1:], vi[:, :, :-1])
            return anchor + steps.sum(axis=2)

        return terms(m + shift[:, :, None]) - terms(m)

    def _shift_series(self) -> None:
        """Constant offsets of whole walks along likelihood-invariant directions.

        A constant added to a walk leaves its increment terms unchanged, so
        only the initial-week (forward walks) or final-week (backward walks)
        prior term resists the shift; local moves alone would have to diffuse
        such an offset across all T weeks."""
        st, T = self.state, self.T
        R, S = self.R, self.S

        def init_common(d):
            x = st.mu_common[0]
            v = st.sigma2_common_init
            return dens.norm_logpdf(x + d, 0.0, v) - dens.norm_logpdf(x, 0.0, v)

        def init_region(d):
            x = st.mu_region[:, 0]
            v = st.sigma2_region_init
            return dens.norm_logpdf(x + d, 0.0, v) - dens.norm_logpdf(x, 0.0, v)

        def anchor_season(d):
            x = st.mu_season[:, T - 1]
            v = st.sigma2_season_last
            return dens.norm_logpdf(x + d, 0.0, v) - dens.norm_logpdf(x, 0.0, v)

        # whole common series up, every region series down
        d = float(self.steps["shift_series_common_region"]) * self.rng.standard_normal()
        lr = init_common(d) + init_region(-d).sum()
        if self._accept("shift_series_common_region", lr):
            st.mu_common += d
            st.mu_region -= d

        # whole common series up, every season series down
        d = float(self.steps["shift_series_common_season"]) * self.rng.standard_normal()
        lr = init_common(d) + anchor_season(-d).sum()
        if self._accept("shift_series_common_season", lr):
            st.mu_common += d
            st.mu_season -= d

        # one season series up, its interaction rows down
        d = self.steps["shift_series_season_interaction"] * self.rng.standard_normal(S)
        lr = anchor_season(d) + self._series_delta_interaction(
            np.broadcast_to(-d[None, :], (R, S))
        ).sum(axis=0)
        dd = np.where(self._accept("shift_series_season_interaction", lr), d, 0.0)
        st.mu_season += dd[:, None]
        st.mu_interaction -= dd[None, :, None]

        # one region series up, its interaction rows down
        d = self.steps["shift_series_region_interaction"] * self.rng.standard_normal(R)
        lr = init_region(d) + self._series_delta_interaction(
            np.broadcast_to(-d[:, None], (R, S))
        ).sum(axis=1)
        dd = np.where(self._accept("shift_series_region_interaction", lr), d, 0.0)
        st.mu_region += dd[:, None]
        st.mu_interaction -= dd[:, None, None]

    # -- region-indexed blocks -------------------------------------------------

    def _update_lam(self) -> None:
        st = self.state
        df = self.hyper.t_df
        x = st.lam
        eps = self.rng.standard_normal(x.shape)
        xp = x * np.exp(self.steps["lam"] * eps)

        th = expit(self.pi) if self.has_data else None
        lik_old = self._lik_lam(x, th) if self.has_data else 0.0
        lik_new = self._lik_lam(xp, th) if self.has_data else 0.0
        la = (
            dens.halft_logpdf(xp, st.lam_prec, df)
            - dens.halft_logpdf(x, st.lam_prec, df)
            + lik_new
            - lik_old
        )
        if self.jacobian:
            la = la + np.log(xp) - np.log(x)
        accept = self._accept("lam", la)
        st.lam = np.where(accept, xp, x)

    def _update_sigma2_region(self) -> None:
        st, T = self.state, self.T
        df = self.hyper.t_df
        x = st.sigma2_region
        eps = self.rng.standard_normal(x.shape)
        xp = x * np.exp(self.steps["sigma2_region"] * eps)

        d = st.mu_region[:, 1:] - st.mu_region[:, :-1]
        ssq = (d * d).sum(axis=1)
        n = T - 1

        def local(v):
            walk = -0.5 * (n * (LOG_2PI + np.log(v)) + ssq / v)
            return dens.halft_logpdf(v, st.prec_region, df) + walk

        la = local(xp) - local(x)
        if self.jacobian:
            la = la + np.log(xp) - np.log(x)
        accept = self._accept("sigma2_region", la)
        st.sigma2_region = np.where(accept, xp, x)

    def _interaction_means(self) -> np.ndarray:
        st, T = self.state, self.T
        mean = np.empty_like(st.mu_interaction)
        mean[:, :, T - 1] = st.eta[:, None]
        if T > 1:
            mean[:, :, : T - 1] = st.alpha[:, None, None] * st.mu_interaction[:, :, 1:]
        return mean

    def _update_sigma2_interaction(self) -> None:
        st = self.state
        df = self.hyper.t_df
        x = st.sigma2_interaction
        eps = self.rng.standard_normal(x.shape)
        xp = x * np.exp(self.steps["sigma2_interaction"] * eps)

        resid = st.mu_interaction - self._interaction_means()
        ssq = (resid * resid).sum(axis=1)  # (R, T)

        def local(v):
            walk = -0.5 * (self.S * (LOG_2PI + np.log(v)) + ssq / v)
            return dens.halft_logpdf(v, st.prec_interaction, df) + walk

        la = local(xp) - local(x)
        if self.jacobian:
            la = la + np.log(xp) - np.log(x)
        accept = self._accept("sigma2_interaction", la)
        st.sigma2_interaction = np.where(accept, xp, x)

    def _update_eta(self) -> None:
        st, T = self.state, self.T
        x = st.eta
        xp = x + self.steps["eta"] * self.rng.standard_normal(x.shape)

        last = st.mu_interaction[:, :, T - 1]
        vi_last = st.sigma2_interaction[:, T - 1][:, None]

        def local(v):
            lp = dens.norm_logpdf(v, 0.0, st.sigma2_eta)
            return lp + dens.norm_logpdf(last, v[:, None], vi_last).sum(axis=1)

        accept = self._accept("eta", local(xp) - local(x))
        st.eta = np.where(accept, xp, x)

    def _update_alpha(self) -> None:
        st, T = self.state, self.T
        x = st.alpha
        z = logit(x)
        zp = z + self.steps["alpha"] * self.rng.standard_normal(x.shape)
        xp = expit(zp)

        cur = st.mu_interaction[:, :, : T - 1]
        nxt = st.mu_interaction[:, :, 1:]
        vi = st.sigma2_interaction[:, None, : T - 1]

        def local(v):
            lp = dens.beta_logpdf(v, st.alpha_a, st.alpha_b)
            if T > 1:
                lp = lp + dens.norm_logpdf(cur, v[:, None, None] * nxt, vi).sum(axis=(1, 2))
            return lp

        # a long step can saturate expit to exactly 0 or 1; the target density
        # is zero there, so such proposals are rejected outright
        interior = (xp > 0.0) & (xp < 1.0)
        xp = np.where(interior, xp, x)
        la = local(xp) - local(x)
        if self.jacobian:
            la = la + np.log(xp * (1.0 - xp)) - np.log(x * (1.0 - x))
        la = np.where(interior, la, -np.inf)
        accept = self._accept("alpha", la)
        st.alpha = np.where(accept, xp, x)

    # -- scalar hyperparameters -------------------------------------------------

    def _scalar_local(self, name: str):
        st, hy = self.state, self.hyper
        sh, rt, df = hy.gamma_shape, hy.gamma_rate, hy.t_df
        T = self.T

        if name == "lam_prec":
            return lambda v: float(
                dens.gamma_logpdf(v, sh, rt) + dens.halft_logpdf(st.lam, v, df).sum()
            )
        if name == "prec_common_init":
            return lambda v: float(
                dens.gamma_logpdf(v, sh, rt) + dens.halfnorm_logpdf(st.sigma2_common_init, 1.0 / v)
            )
        if name == "prec_common":
            return lambda v: float(
                dens.gamma_logpdf(v, sh, rt) + dens.halfnorm_logpdf(st.sigma2_common, 1.0 / v)
            )
        if name == "prec_region_init":
            return lambda v: float(
                dens.gamma_logpdf(v, sh, rt) + dens.halfnorm_logpdf(st.sigma2_region_init, 1.0 / v)
            )
        if name == "prec_region":
            return lambda v: float(
                dens.gamma_logpdf(v, sh, rt) + dens.halft_logpdf(st.sigma2_region, v, df).sum()
            )
        if name == "prec_season":
            return lambda v: float(
                dens.gamma_logpdf(v, sh, rt)
                + dens.halft_logpdf(st.sigma2_season_last, v, df)
                + dens.trunc_t_logpdf(st.sigma2_season, v, df, 0.0, st.sigma2_season_last)
            )
        if name == "prec_interaction":
            return lambda v: float(
                dens.gamma_logpdf(v, sh, rt) + dens.halft_logpdf(st.sigma2_interaction, v, df).sum()
            )
        if name == "alpha_a":
            return lambda v: float(
                dens.gamma_logpdf(v, sh, rt) + dens.beta_logpdf(st.alpha, v, st.alpha_b).sum()
            )
        if name == "alpha_b":
            return lambda v: float(
                dens.gamma_logpdf(v, sh, rt) + dens.beta_logpdf(st.alpha, st.alpha_a, v).sum()
            )
        if name == "sigma2_common_init":
            return lambda v: float(
                dens.halfnorm_logpdf(v, 1.0 / st.prec_common_init)
                + dens.norm_logpdf(st.mu_common[0], 0.0, v)
            )
        if name == "sigma2_common":
            d = st.mu_common[1:] - st.mu_common[:-1]
            ssq, n = float((d * d).sum()), T - 1
            return lambda v: float(
                dens.halfnorm_logpdf(v, 1.0 / st.prec_common)
                - 0.5 * (n * (LOG_2PI + math.log(v)) + ssq / v)
            )
        if name == "sigma2_region_init":
            return lambda v: float(
                dens.halfnorm_logpdf(v, 1.0 / st.prec_region_init)
                + dens.norm_logpdf(st.mu_region[:, 0], 0.0, v).sum()
            )
        if name == "sigma2_season_last":
            return lambda v: float(
                dens.halft_logpdf(v, st.prec_season, df)
                + dens.norm_logpdf(st.mu_season[:, T - 1], 0.0, v).sum()
                + dens.trunc_t_logpdf(st.sigma2_season, st.prec_season, df, 0.0, v)
            )
        if name == "sigma2_season":
            d = st.mu_season[:, :-1] - st.mu_season[:, 1:]
            ssq, n = float((d * d).sum()), st.mu_season[:, :-1].size
            return lambda v: float(
                dens.trunc_t_logpdf(v, st.prec_season, df, 0.0, st.sigma2_season_last)
                - 0.5 * (n * (LOG_2PI + math.log(v)) + ssq / v)
            )
        if name == "sigma2_eta":
            return lambda v: float(
                dens.halfnorm_logpdf(v, hy.eta_scale_prior_var)
                + dens.norm_logpdf(st.eta, 0.0, v).sum()
            )
        raise KeyError(name)

    def _update_scalar(self, name: str, transform: str) -> None:
        st = self.state
        x = float(getattr(st, name))
        step = float(self.steps[name])
        eps = float(self.rng.standard_normal())
        jac = 0.0
        if transform == "log":
            xp = x * math.exp(step * eps)
            if self.jacobian:
                jac = math.log(xp) - math.log(x)
        elif transform == "ratio_logit":
            bound = st.sigma2_season_last
            u = x / bound
            up = expit(float(logit(u)) + step * eps)
            xp = float(up * bound)
            if self.jacobian:
                jac = math.log(up * (1.0 - up)) - math.log(u * (1.0 - u))
        else:
            raise ValueError(transform)

        local = self._scalar_local(name)
        la = local(xp) - local(x) + jac
        accept = self._accept(name, np.asarray(la))
        if accept:
            setattr(st, name, xp)

    # -- full sweep ------------------------------------------------------------

    def sweep(self, adapting: bool) -> None:
        self.adapting = adapting
        for color in (0, 1):
            self._update_mu_common(color)
        for color in (0, 1):
            self._update_mu_region(color)
        for color in (0, 1):
            self._update_mu_season(color)
        for color in (0, 1):
            self._update_mu_interaction(color)
        for color in (0, 1):
            self._shift_blocks(color)
        self._shift_series()
        self._update_lam()
        self._update_sigma2_region()
        self._update_sigma2_interaction()
        self._update_eta()
        self._update_alpha()
        for name, transform in self._SCALARS:
            self._update_scalar(name, transform)
        self.iteration += 1
        if self.iteration % 128 == 0:
            # refresh the cached predictor; incremental updates accumulate
            # rounding at the 1e-15 level over thousands of sweeps
            st = self.state
            self.pi = np.asarray(
                st.mu_common[None, None, :]
                + st.mu_region[:, None, :]
                + st.mu_season[None, :, :]
                + st.mu_interaction
            )

    def accept_rates(self) -> dict[str, float]:
        return {
            name: self.acc_sum[name] / max(self.acc_n[name], 1) for name in sorted(self.acc_sum)
        }


# ---------------------------------------------------------------------------
# block-local densities, exposed for verification


def local_log_density(
    state: ModelState, values: np.ndarray, name: str, index: tuple, hyper: Hyperconfig = Hyperconfig()
) -> float:
    """Sum of the joint-density factors that mention one scalar coordinate.

    This mirrors the factors the sweep updates use; the test suite checks that
    differences of this function match differences of the full log joint.
    """
    sweeper = _Sweeper(state.copy(), values, hyper, McmcConfig(), np.random.default_rng(0))
    st = sweeper.state
    T = sweeper.T

    def lik_at(t):
        color = t % 2
        k = int(np.nonzero(sweeper.colors[color] == t)[0][0])
        return sweeper._beta_terms(sweeper.pi[:, :, sweeper.colors[color]], color)[:, :, k]

    if name == "mu_common":
        (t,) = index
        lp = float(
            dens.norm_logpdf(
                st.mu_common[t],
                0.0 if t == 0 else st.mu_common[t - 1],
                st.sigma2_common_init if t == 0 else st.sigma2_common,
            )
        )
        if t < T - 1:
            lp += float(dens.norm_logpdf(st.mu_common[t + 1], st.mu_common[t], st.sigma2_common))
        return lp + float(lik_at(t).sum())
    if name == "mu_region":
        r, t = index
        lp = float(
            dens.norm_logpdf(
                st.mu_region[r, t],
                0.0 if t == 0 else st.mu_region[r, t - 1],
                st.sigma2_region_init if t == 0 else st.sigma2_region[r],
            )
        )
        if t < T - 1:
            lp += float(
                dens.norm_logpdf(st.mu_region[r, t + 1], st.mu_region[r, t], st.sigma2_region[r])
            )
        return lp + float(lik_at(t)[r].sum())
    if name == "mu_season":
        s, t = index
        lp = float(
            dens.norm_logpdf(
                st.mu_season[s, t],
                0.0 if t == T - 1 else st.mu_season[s, t + 1],
                st.sigma2_season_last if t == T - 1 else st.sigma2_season,
            )
        )
        if t > 0:
            lp += float(dens.norm_logpdf(st.mu_season[s, t - 1], st.mu_season[s, t], st.sigma2_season))
        return lp + float(lik_at(t)[:, s].sum())
    if name == "mu_interaction":
        r, s, t = index
        mean = st.eta[r] if t == T - 1 else st.alpha[r] * st.mu_interaction[r, s, t + 1]
        lp = float(dens.norm_logpdf(st.mu_interaction[r, s, t], mean, st.sigma2_interaction[r, t]))
        if t > 0:
            lp += float(
                dens.norm_logpdf(
                    st.mu_interaction[r, s, t - 1],
                    st.alpha[r] * st.mu_interaction[r, s, t],
                    st.sigma2_interaction[r, t - 1],
                )
            )
        return lp + float(lik_at(t)[r, s])
    if name == "lam":
        (r,) = index
        th = expit(sweeper.pi)
        return float(
            dens.halft_logpdf(st.lam[r], st.lam_prec, hyper.t_df) + sweeper._lik_lam(st.lam, th)[r]
        )
    if name == "sigma2_region":
        (r,) = index
        return float(
            dens.halft_logpdf(st.sigma2_region[r], st.prec_region, hyper.t_df)
            + dens.norm_logpdf(st.mu_region[r, 1:], st.mu_region[r, :-1], st.sigma2_region[r]).sum()
        )
    if name == "sigma2_interaction":
        r, t = index
        mean = st.eta[r] if t == T - 1 else st.alpha[r] * st.mu_interaction[r, :, t + 1]
        return float(
            dens.halft_logpdf(st.sigma2_interaction[r, t], st.prec_interaction, hyper.t_df)
            + dens.norm_logpdf(st.mu_interaction[r, :, t], mean, st.sigma2_interaction[r, t]).sum()
        )
    if name == "eta":
        (r,) = index
        return float(
            dens.norm_logpdf(st.eta[r], 0.0, st.sigma2_eta)
            + dens.norm_logpdf(
                st.mu_interaction[r, :, T - 1], st.eta[r], st.sigma2_interaction[r, T - 1]
            ).sum()
        )
    if name == "alpha":
        (r,) = index
        lp = float(dens.beta_logpdf(st.alpha[r], st.alpha_a, st.alpha_b))
        if T > 1:
            lp += float(
                dens.norm_logpdf(
                    st.mu_interaction[r, :, : T - 1],
                    st.alpha[r] * st.mu_interaction[r, :, 1:],
                    st.sigma2_interaction[r, None, : T - 1],
                ).sum()
            )
        return lp
    # scalar hyperparameters
    return float(sweeper._scalar_local(name)(float(getattr(st, name))))


# ---------------------------------------------------------------------------
# chain drivers


def _init_state(values, dims, hyper, config, rng, prior_only=False) -> ModelState:
    for _ in range(config.max_init_tries):
        state = sample_prior(dims, hyper, rng)
        lp = log_prior(state, hyper) if prior_only else log_joint(state, values, hyper)
        if np.isfinite(lp):
            return state
    raise SamplerError(f"no finite prior initialization in {config.max_init_tries} tries")


def run_chain(
    values: np.ndarray,
    hyper: Hyperconfig,
    config: McmcConfig,
    seed,
    jacobian: bool = True,
    log_values: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[np.ndarray, dict]:
    """Run one chain; returns (kept draws (n, P), acceptance-rate dict)."""
    config.validate()
    values = np.asarray(getattr(values, "values", values), dtype=float)
    rng = np.random.default_rng(seed)
    R, S, T = values.shape
    dims = ModelDims(R, S, T)
    # with exact log-space data the likelihood is finite on the whole prior
    # support, so initialization only needs a prior support check
    state = _init_state(values, dims, hyper, config, rng, prior_only=log_values is not None)
    sweeper = _Sweeper(state, values, hyper, config, rng, jacobian, log_values)

    burn_iterations = config.burnin * config.thin
    kept = np.empty((config.kept_per_chain, flatten_state(state).size))
    k = 0
    for i in range(config.n_iterations):
        sweeper.sweep(adapting=i < burn_iterations)
        if (i + 1) % config.thin == 0 and i + 1 > burn_iterations:
            kept[k] = flatten_state(sweeper.state)
            k += 1
    assert k == config.kept_per_chain
    return kept, sweeper.accept_rates()


def _chain_job(args):
    values, hyper, config, seed = args
    return run_chain(values, hyper, config, seed)


def run_chains(
    values: np.ndarray,
    hyper: Hyperconfig = Hyperconfig(),
    config: McmcConfig = McmcConfig(),
    n_jobs: int = 1,
) -> PosteriorDraws:
    """Run the configured chains and pool retained draws with diagnostics."""
    config.validate()
    values = np.asarray(getattr(values, "values", values), dtype=float)
    R, S, T = values.shape
    dims = ModelDims(R, S, T)
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_chains)
    jobs = [(values, hyper, config, seeds[c]) for c in range(config.n_chains)]
    if n_jobs > 1 and config.n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(n_jobs, config.n_chains)) as pool:
            results = list(pool.map(_chain_job, jobs))
    else:
        results = [_chain_job(j) for j in jobs]

    per_chain = np.stack([draws for draws, _ in results])  # (C, n, P)
    accept = {
        name: float(np.mean([acc[name] for _, acc in results])) for name in results[0][1]
    }
    pooled = per_chain.reshape(-1, per_chain.shape[-1])
    chain_id = np.repeat(np.arange(config.n_chains), config.kept_per_chain)

    diagnostics: dict = {"ess": effective_sample_size(per_chain), "warnings": []}
    if config.n_chains > 1:
        # between-chain comparison is undefined for a single chain
        rhat = split_rhat(per_chain)
        diagnostics["rhat"] = rhat
        names = param_names(dims)
        bad = [(names[j], float(rhat[j])) for j in np.nonzero(rhat > 1.1)[0]]
        diagnostics["warnings"] = [f"rhat {v:.3f} for {n}" for n, v in bad]

    return PosteriorDraws(
        draws=pooled,
        chain_id=chain_id,
        dims=dims,
        config=config,
        diagnostics=diagnostics,
        accept_rates=accept,
    )


# ---------------------------------------------------------------------------
# convergence diagnostics


def split_rhat(per_chain: np.ndarray) -> np.ndarray:
    """Split R-hat per flat coordinate. ``per_chain`` is (C, N, P)."""
    C, N, P = per_chain.shape
    half = N // 2
    if half < 2:
        return np.full(P, np.nan)
    halves = np.concatenate([per_chain[:, :half], per_chain[:, half : 2 * half]], axis=0)
    m, n = halves.shape[0], half
    means = halves.mean(axis=1)  # (m, P)
    variances = halves.var(axis=1, ddof=1)  # (m, P)
    W = variances.mean(axis=0)
    B = n * means.var(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        var_plus = (n - 1) / n * W + B / n
        out = np.sqrt(var_plus / W)
    out = np.where(W <= 1e-300, 1.0, out)  # constant coordinates
    return out


def _autocorr_fft(x: np.ndarray) -> np.ndarray:
    """Autocorrelation along axis 0 for (N, P) arrays."""
    N = x.shape[0]
    xc = x - x.mean(axis=0)
    size = 1 << (2 * N - 1).bit_length()
    f = np.fft.rfft(xc, n=size, axis=0)
    acov = np.fft.irfft(f * np.conj(f), n=size, axis=0)[:N]
    acov /= np.arange(N, 0, -1)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        return acov / acov[0]


def effective_sample_size(per_chain: np.ndarray) -> np.ndarray:
    """ESS per coordinate via mean autocorrelation with Geyer's initial
    positive-sequence truncation. ``per_chain`` is (C, N, P)."""
    C, N, P = per_chain.shape
    if N < 4:
        return np.full(P, np.nan)
    rho = np.mean([_autocorr_fft(per_chain[c]) for c in range(C)], axis=0)  # (N, P)
    # pair sums rho[2k] + rho[2k+1]; truncate at the first negative pair
    n_pairs = (N - 1) // 2
    ess = np.empty(P)
    for p in range(P):
        if not np.isfinite(rho[1:, p]).all():
            ess[p] = C * N  # constant coordinate; treat as independent
            continue
        tau = 1.0
        for k in range(1, n_pairs):
            pair = rho[2 * k - 1, p] + rho[2 * k, p]
            if pair < 0:
                break
            tau += 2.0 * pair
        ess[p] = C * N / max(tau, 1e-12)
    return ess


# ---------------------------------------------------------------------------
# sampler validation harnesses


def _geweke_moments(state: ModelState, logy: np.ndarray) -> np.ndarray:
    T = state.dims.n_weeks
    loglam = np.log(state.lam)
    values = np.exp(logy)
    g = [
        state.mu_common[0],
        state.mu_common[0] ** 2,
        state.mu_common[T - 1],
        float(np.mean(state.mu_region[:, 0])),
        # absolute rather than squared moments for the half-t-scaled walks:
        # E[sigma^4] diverges at df 3, so their squares have no CLT
        float(np.mean(np.abs(state.mu_region))),
        float(np.mean(state.mu_season[:, 0])),
        float(np.mean(np.abs(state.mu_season[:, 0]))),
        float(np.mean(state.mu_interaction[:, :, 0])),
        float(np.mean(np.abs(state.mu_interaction))),
        float(np.mean(loglam)),
        float(np.mean(loglam**2)),
        math.log(state.lam_prec),
        math.log(state.prec_interaction),
        float(np.mean(np.log(state.sigma2_interaction))),
        math.log(state.sigma2_season),
        math.log(state.sigma2_season_last),
        math.log(state.sigma2_common),
        float(np.mean(np.log(state.sigma2_region))),
        float(np.mean(state.alpha)),
        float(np.mean(state.alpha**2)),
        float(np.mean(state.eta)),
        float(np.mean(state.eta**2)),
        math.log(state.alpha_a),
        math.log(state.alpha_b),
        float(np.mean(values)),
        float(np.mean(values**2)),
    ]
    return np.array(g)


GEWEKE_MOMENT_NAMES = (
    "mu_common[0]", "mu_common[0]^2", "mu_common[last]",
    "mean mu_region[:,0]", "mean |mu_region|",
    "mean mu_season[:,0]", "mean |mu_season[:,0]|",
    "mean mu_interaction[:,:,0]", "mean |mu_interaction|",
    "mean log lam", "mean (log lam)^2", "log lam_prec",
    "log prec_interaction", "mean log sigma2_interaction",
    "log sigma2_season", "log sigma2_season_last", "log sigma2_common",
    "mean log sigma2_region",
    "mean alpha", "mean alpha^2", "mean eta", "mean eta^2",
    "log alpha_a", "log alpha_b", "mean y", "mean y^2",
)


def geweke_joint_test(
    dims: ModelDims,
    hyper: Hyperconfig = Hyperconfig(),
    n_cycles: int = 10000,
    warmup: int = 500,
    seed: int = 0,
    jacobian: bool = True,
    n_chains: int = 10,
) -> dict[str, float]:
    """Joint-distribution test of the transition kernel.

    Compares moments of (parameters, data) under two samplers that share the
    prior-times-likelihood joint: fresh ancestral draws, and chains that
    alternate one posterior sweep with a data redraw. Any kernel error shows
    up as a non-zero mean difference; returns z-scores per moment.

    A prior draw plus data drawn from it is an exact stationary point of the
    sweep-and-redraw chain, so the successive side runs ``n_chains``
    independent chains from fresh stationary starts, sharing step sizes
    adapted once on a throwaway chain. The spread of per-chain means then
    gives an assumption-free standard error; single-chain long-run variance
    estimates are misled by the slowly mixing half-t-scaled moment series.
    """
    if n_cycles == 0:
        return {}
    rng = np.random.default_rng(seed)
    config = McmcConfig(n_chains=1, n_iterations=10, thin=1, burnin=0, seed=seed)

    # Log-space data draws keep the redraw distribution consistent with the
    # density the sweep evaluates even in the prior's far tails, where plain
    # Beta draws collapse onto clipped {0, 1} atoms.
    marginal = np.empty((n_cycles, len(GEWEKE_MOMENT_NAMES)))
    for i in range(n_cycles):
        state = sample_prior(dims, hyper, rng)
        logy, _ = sample_observations_log(state, rng, hyper)
        marginal[i] = _geweke_moments(state, logy)

    def fresh_chain():
        state = sample_prior(dims, hyper, rng)
        sweeper = _Sweeper(state, np.full(dims.shape, 0.5), hyper, config, rng, jacobian)

        def redraw():
            logy, log1my = sample_observations_log(sweeper.state, rng, hyper)
            sweeper.logy = logy
            sweeper.log1my = log1my
            for color, sel in enumerate(sweeper.colors):
                sweeper.logy_c[color] = logy[:, :, sel].copy()
                sweeper.log1my_c[color] = log1my[:, :, sel].copy()

        redraw()
        return sweeper, redraw

    sweeper, redraw = fresh_chain()
    for _ in range(warmup):
        sweeper.sweep(adapting=True)
        redraw()
    adapted = {k: v.copy() for k, v in sweeper.steps.items()}

    n_chains = min(n_chains, max(n_cycles // 2, 1))
    lengths = np.full(n_chains, n_cycles // n_chains)
    lengths[: n_cycles - lengths.sum()] += 1

    chain_means = np.empty((n_chains, len(GEWEKE_MOMENT_NAMES)))
    for c in range(n_chains):
        sweeper, redraw = fresh_chain()
        sweeper.steps = {k: v.copy() for k, v in adapted.items()}
        block = np.empty((lengths[c], len(GEWEKE_MOMENT_NAMES)))
        for i in range(lengths[c]):
            sweeper.sweep(adapting=False)
            redraw()
            block[i] = _geweke_moments(sweeper.state, sweeper.logy)
        chain_means[c] = block.mean(axis=0)

    z = {}
    for j, name in enumerate(GEWEKE_MOMENT_NAMES):
        a = marginal[:, j]
        se2 = a.var(ddof=1) / len(a) + chain_means[:, j].var(ddof=1) / n_chains
        z[name] = float((a.mean() - chain_means[:, j].mean()) / math.sqrt(se2 + 1e-300))
    return z


def calibration_coverage(
    dims: ModelDims,
    hyper: Hyperconfig = Hyperconfig(),
    config: McmcConfig | None = None,
    n_replicates: int = 100,
    level: float = 0.9,
    seed: int = 0,
) -> float:
    """Simulation-based calibration of posterior credible intervals.

    For each replicate, draws a truth from the prior, simulates a fully
    observed panel, fits the model, and checks whether central ``level``
    intervals for every theta[r,s,t] cover the truth. Returns pooled coverage.
    """
    config = config or McmcConfig(n_chains=1, n_iterations=2500, thin=5, burnin=100, seed=seed)
    root = np.random.SeedSequence(seed)
    lo_q, hi_q = (1.0 - level) / 2.0, 1.0 - (1.0 - level) / 2.0
    hits = 0
    total = 0
    for rep_seed in root.spawn(n_replicates):
        rng = np.random.default_rng(rep_seed)
        truth = sample_prior(dims, hyper, rng)
        # exact log-space draws: prior truths routinely put theta near {0, 1},
        # where plain draws hit clipped atoms the likelihood cannot represent
        logy, log1my = sample_observations_log(truth, rng, hyper)
        kept, _ = run_chain(
            np.full(dims.shape, 0.5), hyper, config, rep_seed.spawn(1)[0],
            log_values=(logy, log1my),
        )
        draws = PosteriorDraws(
            draws=kept,
            chain_id=np.zeros(len(kept), dtype=int),
            dims=dims,
            config=config,
        )
        th = theta_draws(draws)
        lo = np.quantile(th, lo_q, axis=0)
        hi = np.quantile(th, hi_q, axis=0)
        th_true = expit(
            truth.mu_common[None, None, :]
            + truth.mu_region[:, None, :]
            + truth.mu_season[None, :, :]
            + truth.mu_interaction
        )
        hits += int(((th_true >= lo) & (th_true <= hi)).sum())
        total += th_true.size
    return hits / total
