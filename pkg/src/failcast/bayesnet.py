"""The failure -> occurrence -> observation network for one (part, DTC).

Failure cycles ``f`` are Weibull(shape alpha, scale beta).  The DTC occurs at
``i ~ N(f - f*r, sigma1)`` and is observed at ``s ~ N((f - i)*m + i, sigma2)``.
Every hyper-parameter has a uniform prior.

A node that is neither observed nor a parent of an observed node integrates
out of the likelihood, so e.g. a failures-only mask leaves just the Weibull
term.  Unobserved parents of observed nodes become per-instance latent
variables sampled alongside the parameters.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .domain import PartDataset
from .mcmc import Param

LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


class DimensionMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class WeibullParams:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"Weibull parameters must be positive: {self}")


@dataclass(frozen=True)
class DependencyParams:
    """Lead-gap ratio ``r``, observation-delay ratio ``m`` and their noises.

    ``lead`` optionally carries an estimate of ``r (1 - m)``, the share of the
    failure cycles by which a service observation precedes the failure.  When
    only observations are available this product is all the data pin down,
    and its posterior mean differs from the product of the posterior means.
    """

    r: float
    sigma1: float
    m: float
    sigma2: float
    lead: Optional[float] = None

    @property
    def observation_lead(self) -> float:
        return self.r * (1.0 - self.m) if self.lead is None else self.lead


@dataclass(frozen=True)
class PriorConfig:
    a: float = 10.0
    b_scale: float = 500000.0
    r1: float = 0.01
    r2: float = 0.99
    c1: float = 50000.0
    c3: float = 50000.0

    def __post_init__(self):
        if min(self.a, self.b_scale, self.c1, self.c3) <= 0:
            raise ValueError("prior upper bounds must be positive")
        if not 0 < self.r1 < self.r2 < 1:
            raise ValueError("need 0 < r1 < r2 < 1")

    def bounds(self) -> dict[str, tuple[float, float]]:
        return {
            "alpha": (0.0, self.a),
            "beta": (0.0, self.b_scale),
            "r": (self.r1, self.r2),
            "sigma1": (0.0, self.c1),
            "m": (0.0, 1.0),
            "sigma2": (0.0, self.c3),
        }


@dataclass(frozen=True)
class ObservationMask:
    f_observed: bool = True
    i_observed: bool = False
    s_observed: bool = False

    def __post_init__(self):
        if not (self.f_observed or self.i_observed or self.s_observed):
            raise ValueError("at least one node must be observed")

    @property
    def has_i_term(self) -> bool:
        return self.i_observed or self.s_observed

    @property
    def has_s_term(self) -> bool:
        return self.s_observed

    @property
    def latent_f(self) -> bool:
        return not self.f_observed

    @property
    def latent_i(self) -> bool:
        return self.s_observed and not self.i_observed


F_ONLY = ObservationMask(True, False, False)
F_AND_S = ObservationMask(True, False, True)
F_I_S = ObservationMask(True, True, True)


@dataclass(frozen=True)
class ModelState:
    weibull: WeibullParams
    dep: Optional[DependencyParams] = None
    latent_f: Optional[np.ndarray] = None
    latent_i: Optional[np.ndarray] = None


TRANSFORMS = {"alpha": "log", "beta": "log", "r": "logit", "sigma1": "log", "m": "logit",
              "sigma2": "log"}


def _log_uniform(x, lo, hi):
    return -math.log(hi - lo) if lo < x < hi else -math.inf


def log_prior(state: ModelState, priors: PriorConfig) -> float:
    b = priors.bounds()
    total = _log_uniform(state.weibull.alpha, *b["alpha"])
    total += _log_uniform(state.weibull.beta, *b["beta"])
    if state.dep is not None:
        for name in ("r", "sigma1", "m", "sigma2"):
            total += _log_uniform(getattr(state.dep, name), *b[name])
    return total


def weibull_logpdf(f, alpha, beta):
    """Elementwise log density; ``-inf`` for ``f <= 0``."""
    f = np.asarray(f, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.log(f) - np.log(beta)
        out = np.log(alpha) - np.log(beta) + (alpha - 1) * z - np.exp(alpha * z)
    return np.where(f > 0, out, -np.inf)


def normal_logpdf(x, mean, sd):
    with np.errstate(divide="ignore", invalid="ignore"):
        return -np.log(sd) - LOG_SQRT_2PI - 0.5 * ((x - mean) / sd) ** 2


def _nodes(state: ModelState, data: PartDataset, mask: ObservationMask):
    n = data.n
    f = data.fail if mask.f_observed else state.latent_f
    i = data.ind if mask.i_observed else state.latent_i
    s = data.serv
    if mask.latent_f and (state.latent_f is None or len(state.latent_f) != n):
        raise DimensionMismatchError(f"need {n} latent failure values")
    if mask.latent_i and (state.latent_i is None or len(state.latent_i) != n):
        raise DimensionMismatchError(f"need {n} latent occurrence values")
    return np.asarray(f, float), (None if i is None else np.asarray(i, float)), s


def log_likelihood(state: ModelState, data: PartDataset, mask: ObservationMask) -> float:
    f, i, s = _nodes(state, data, mask)
    if np.any(f <= 0):
        return -math.inf
    w = state.weibull
    total = float(np.sum(weibull_logpdf(f, w.alpha, w.beta)))
    if mask.has_i_term:
        d = state.dep
        total += float(np.sum(normal_logpdf(i, f - f * d.r, d.sigma1)))
    if mask.has_s_term:
        d = state.dep
        total += float(np.sum(normal_logpdf(s, (f - i) * d.m + i, d.sigma2)))
    return total


def log_posterior(state: ModelState, data: PartDataset, mask: ObservationMask,
                  priors: PriorConfig) -> float:
    lp = log_prior(state, priors)
    if not np.isfinite(lp):
        return lp
    return lp + log_likelihood(state, data, mask)


class NetworkTarget:
    """Sampler target for one dataset and observation mask.

    ``fixed`` pins parameters to constants (used to sample latent failures
    given already-learned parameters).  Densities are evaluated for all
    chains at once: scalars carry shape ``(n_chains,)``, latent vectors
    ``(n_chains, n)``.
    """

    def __init__(self, f, i, s, mask: ObservationMask, priors: PriorConfig = PriorConfig(),
                 fixed: Optional[Mapping[str, float]] = None):
        self.mask = mask
        self.priors = priors
        self.fixed = dict(fixed or {})
        n = {len(np.atleast_1d(v)) for v in (f, i, s) if v is not None}
        if len(n) != 1:
            raise DimensionMismatchError("observed arrays must share one length")
        self.n = n.pop()
        self.f = None if f is None else np.asarray(f, float)
        self.i = None if i is None else np.asarray(i, float)
        self.s = None if s is None else np.asarray(s, float)
        if mask.f_observed and self.f is None:
            raise DimensionMismatchError("mask marks F observed but no failure data given")
        if mask.i_observed and self.i is None:
            raise DimensionMismatchError("mask marks I observed but no occurrence data given")
        if mask.s_observed and self.s is None:
            raise DimensionMismatchError("mask marks S observed but no observation data given")

        bounds = priors.bounds()
        names = ["alpha", "beta"]
        if mask.has_i_term:
            names += ["r", "sigma1"]
        if mask.has_s_term:
            names += ["m", "sigma2"]
        self.model_params = tuple(names)
        params = []
        for name in names:
            if name in self.fixed:
                continue
            lo, hi = bounds[name]
            params.append(Param(name, lower=lo, upper=hi, transform=TRANSFORMS[name]))
        if mask.latent_f:
            params.append(Param("latent_f", size=self.n, lower=0.0, transform="log", record=False))
        if mask.latent_i:
            params.append(Param("latent_i", size=self.n, lower=0.0, transform="log", record=False))
        self.params = tuple(params)

        if self.f is not None:
            # non-positive failures give nan/-inf here; the density rejects them anyway
            with np.errstate(divide="ignore", invalid="ignore"):
                self._log_f = np.log(self.f)
            self._sum_log_f = float(self._log_f.sum())

    @classmethod
    def from_dataset(cls, data: PartDataset, mask: ObservationMask,
                     priors: PriorConfig = PriorConfig(), fixed=None) -> "NetworkTarget":
        return cls(
            data.fail if mask.f_observed else None,
            data.ind if mask.i_observed else None,
            data.serv if mask.s_observed else None,
            mask, priors, fixed,
        )

    # -- state conversion -------------------------------------------------

    def encode(self, state: ModelState | Mapping[str, object]) -> dict:
        if isinstance(state, Mapping):
            return {p.name: state[p.name] for p in self.params}
        values = {"alpha": state.weibull.alpha, "beta": state.weibull.beta}
        if state.dep is not None:
            values.update(r=state.dep.r, sigma1=state.dep.sigma1, m=state.dep.m,
                          sigma2=state.dep.sigma2)
        out = {}
        for p in self.params:
            if p.name == "latent_f":
                out[p.name] = state.latent_f
            elif p.name == "latent_i":
                out[p.name] = state.latent_i
            else:
                out[p.name] = values[p.name]
        return out

    def _latent_start(self) -> dict:
        out = {}
        if self.mask.latent_f:
            out["latent_f"] = (self.s if self.s is not None else self.i / 0.9).copy()
        if self.mask.latent_i:
            out["latent_i"] = 0.9 * (self.s if self.s is not None else self.f)
        return out

    def initial_states(self, seed: int, n_chains: int) -> list[dict]:
        """Per-chain starting points.

        Parameters are drawn from their priors, each from its own stream, so
        a parameter starts at the same values whatever else is in the model.
        Latent failures start at the observations and latent occurrences at
        0.9 times them.
        """
        bounds = self.priors.bounds()
        draws = {}
        for p in self.params:
            if p.size is None:
                rng = np.random.default_rng(
                    [int(seed) & 0xFFFFFFFF, zlib.crc32(p.name.encode()), 2]
                )
                draws[p.name] = rng.uniform(*bounds[p.name], n_chains)
        latent = self._latent_start()
        return [
            {**{k: v[c] for k, v in draws.items()}, **{k: v.copy() for k, v in latent.items()}}
            for c in range(n_chains)
        ]

    def sample_prior(self, rng: np.random.Generator, n: int) -> dict:
        bounds = self.priors.bounds()
        out = {}
        for p in self.params:
            if p.size is None:
                lo, hi = bounds[p.name]
                out[p.name] = rng.uniform(lo, hi, n)
        for k, v in self._latent_start().items():
            out[k] = np.tile(v, (n, 1))
        return out

    # -- densities --------------------------------------------------------

    def _value(self, state, name):
        return self.fixed[name] if name in self.fixed else state[name]

    def _prior(self, state, name):
        if name in self.fixed:
            return 0.0
        lo, hi = self.priors.bounds()[name]
        x = state[name]
        return np.where((x > lo) & (x < hi), -math.log(hi - lo), -np.inf)

    def _weibull_sum(self, state):
        alpha = np.asarray(self._value(state, "alpha"), float)
        beta = np.asarray(self._value(state, "beta"), float)
        log_beta = np.log(beta)
        if self.mask.f_observed:
            n = self.n
            z = self._log_f[None, :] - np.atleast_1d(log_beta)[:, None]
            with np.errstate(over="ignore"):
                tail = np.exp(np.atleast_1d(alpha)[:, None] * z).sum(axis=1)
            return n * (np.log(alpha) - log_beta) + (alpha - 1) * (
                self._sum_log_f - n * log_beta
            ) - tail
        return self._weibull_terms(state).sum(axis=1)

    def _weibull_terms(self, state):
        alpha = np.atleast_1d(self._value(state, "alpha"))[:, None]
        beta = np.atleast_1d(self._value(state, "beta"))[:, None]
        return weibull_logpdf(self._f(state), alpha, beta)

    def _f(self, state):
        return self.f[None, :] if self.mask.f_observed else state["latent_f"]

    def _i(self, state):
        return self.i[None, :] if self.mask.i_observed else state["latent_i"]

    def _i_sum(self, state):
        r = np.asarray(self._value(state, "r"), float)
        sd = np.asarray(self._value(state, "sigma1"), float)
        f, i = self._f(state), self._i(state)
        rr = np.atleast_1d(r)[:, None]
        sse = ((i - (f - f * rr)) ** 2).sum(axis=1)
        with np.errstate(divide="ignore"):
            return -self.n * (np.log(sd) + LOG_SQRT_2PI) - 0.5 * sse / sd**2

    def _i_terms(self, state):
        r = np.atleast_1d(self._value(state, "r"))[:, None]
        sd = np.atleast_1d(self._value(state, "sigma1"))[:, None]
        f = self._f(state)
        return normal_logpdf(self._i(state), f - f * r, sd)

    def _s_sum(self, state):
        m = np.asarray(self._value(state, "m"), float)
        sd = np.asarray(self._value(state, "sigma2"), float)
        f, i = self._f(state), self._i(state)
        mm = np.atleast_1d(m)[:, None]
        sse = ((self.s[None, :] - ((f - i) * mm + i)) ** 2).sum(axis=1)
        with np.errstate(divide="ignore"):
            return -self.n * (np.log(sd) + LOG_SQRT_2PI) - 0.5 * sse / sd**2

    def _s_terms(self, state):
        m = np.atleast_1d(self._value(state, "m"))[:, None]
        sd = np.atleast_1d(self._value(state, "sigma2"))[:, None]
        f, i = self._f(state), self._i(state)
        return normal_logpdf(self.s[None, :], (f - i) * m + i, sd)

    def block_log_density(self, name: str, state) -> np.ndarray:
        if name in ("alpha", "beta"):
            return self._prior(state, name) + self._weibull_sum(state)
        if name in ("r", "sigma1"):
            return self._prior(state, name) + self._i_sum(state)
        if name in ("m", "sigma2"):
            return self._prior(state, name) + self._s_sum(state)
        if name == "latent_f":
            out = self._weibull_terms(state)
            if self.mask.has_i_term:
                out = out + self._i_terms(state)
            if self.mask.has_s_term:
                out = out + self._s_terms(state)
            return out
        if name == "latent_i":
            return self._i_terms(state) + self._s_terms(state)
        raise KeyError(name)

    def log_density(self, state) -> np.ndarray:
        total = 0.0
        for name in self.model_params:
            total = total + self._prior(state, name)
        if self.mask.latent_f:
            total = total + np.where(np.all(state["latent_f"] > 0, axis=1), 0.0, -np.inf)
        total = total + self._weibull_sum(state)
        if self.mask.has_i_term:
            total = total + self._i_sum(state)
        if self.mask.has_s_term:
            total = total + self._s_sum(state)
        return np.asarray(total, float)

    # -- compiled sweeps ---------------------------------------------------

    _SLOTS = ("alpha", "beta", "r", "sigma1", "m", "sigma2")

    def sweep(self, state, log_scale, draws, rec):
        """Run one chunk of sweeps with the compiled kernel, updating ``state``."""
        from ._kernel import network_sweeps

        C = len(state[self.params[0].name])
        L = len(rec)
        n = self.n
        bounds = self.priors.bounds()
        sampled = {p.name for p in self.params}
        theta = np.zeros((C, 6))
        active = np.zeros(6, dtype=np.bool_)
        lo, hi = np.zeros(6), np.ones(6)
        kind = np.zeros(6, dtype=np.int64)
        ls_theta = np.zeros((C, 6))
        z_theta, u_theta = np.zeros((L, C, 6)), np.ones((L, C, 6))
        for k, name in enumerate(self._SLOTS):
            lo[k], hi[k] = bounds[name]
            kind[k] = 0 if TRANSFORMS[name] == "log" else 1
            if name in sampled:
                active[k] = True
                theta[:, k] = state[name]
                ls_theta[:, k] = log_scale[name]
                z_theta[:, :, k], u_theta[:, :, k] = draws[name]
            elif name in self.fixed:
                theta[:, k] = self.fixed[name]
            elif name in ("sigma1", "sigma2"):
                theta[:, k] = 1.0

        F = np.array(state["latent_f"]) if self.mask.latent_f else np.tile(self.f, (C, 1))
        if self.mask.latent_i:
            I = np.array(state["latent_i"])
        elif self.i is not None:
            I = np.tile(self.i, (C, 1))
        else:
            I = np.zeros((C, n))
        S = self.s if self.s is not None else np.zeros(n)

        def vec(name):
            if name in sampled:
                z, u = draws[name]
                return log_scale[name], z, u
            return np.zeros((C, n)), np.zeros((L, C, n)), np.ones((L, C, n))

        ls_f, z_f, u_f = vec("latent_f")
        ls_i, z_i, u_i = vec("latent_i")
        acc_theta = np.zeros((C, 6))
        acc_f, acc_i = np.zeros((C, n)), np.zeros((C, n))
        hist = np.empty((L, C, 6))
        sum_f, sum_i = np.zeros((C, n)), np.zeros((C, n))
        network_sweeps(
            theta, active, lo, hi, kind, self.mask.has_i_term, self.mask.has_s_term,
            F, I, S, self.mask.latent_f, self.mask.latent_i,
            ls_theta, ls_f, ls_i, z_theta, u_theta, z_f, u_f, z_i, u_i,
            np.asarray(rec, dtype=np.bool_), acc_theta, acc_f, acc_i, hist, sum_f, sum_i,
        )

        acc, hist_out, sums = {}, {}, {}
        for k, name in enumerate(self._SLOTS):
            if name in sampled:
                state[name] = theta[:, k].copy()
                acc[name] = acc_theta[:, k]
                hist_out[name] = hist[:, :, k]
        if self.mask.latent_f:
            state["latent_f"] = F
            acc["latent_f"], sums["latent_f"] = acc_f, sum_f
        if self.mask.latent_i:
            state["latent_i"] = I
            acc["latent_i"], sums["latent_i"] = acc_i, sum_i
        return acc, hist_out, sums
