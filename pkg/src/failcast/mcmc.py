"""Random-walk Metropolis-Hastings with per-block adaptation and diagnostics.

The sampler updates one block at a time.  A block is either a scalar
parameter or a vector whose elements are conditionally independent given the
other blocks, so all of its elements can be proposed at once and accepted
element by element.  Every chain is advanced in lockstep: states are arrays
with a leading chain axis.

Proposals are made in an unconstrained space (log for positive quantities,
logit for quantities bounded on both sides) and the acceptance ratio carries
the Jacobian of that change of variables.
"""

from __future__ import annotations

import csv
import math
import zlib
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Protocol, Sequence

import numpy as np
from scipy import stats


class InitializationError(RuntimeError):
    pass


class InsufficientChainsError(ValueError):
    pass


class UnknownParameterError(KeyError):
    pass


@dataclass(frozen=True)
class Param:
    """A sampled block.  ``size=None`` means scalar.

    Vector blocks are summarized by their posterior mean only; scalar blocks
    keep every retained draw unless ``record`` is False.
    """

    name: str
    size: Optional[int] = None
    lower: float = -math.inf
    upper: float = math.inf
    transform: str = "identity"
    record: bool = True

    def __post_init__(self):
        if self.transform not in ("identity", "log", "logit"):
            raise ValueError(f"unknown transform {self.transform!r}")
        if self.transform == "log" and not np.isfinite(self.lower):
            raise ValueError("log transform needs a finite lower bound")
        if self.transform == "logit" and not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise ValueError("logit transform needs finite bounds")

    def forward(self, x):
        if self.transform == "log":
            return np.log(x - self.lower)
        if self.transform == "logit":
            p = (x - self.lower) / (self.upper - self.lower)
            return np.log(p) - np.log1p(-p)
        return x

    def backward(self, y):
        if self.transform == "log":
            return self.lower + np.exp(y)
        if self.transform == "logit":
            return self.lower + (self.upper - self.lower) / (1.0 + np.exp(-y))
        return y

    def log_jacobian(self, x, y):
        """log |dx/dy| evaluated at ``x = backward(y)``."""
        if self.transform == "log":
            return y
        if self.transform == "logit":
            with np.errstate(divide="ignore"):
                return np.log(x - self.lower) + np.log(self.upper - x) - math.log(
                    self.upper - self.lower
                )
        return 0.0

    def inside(self, x):
        return (x > self.lower) & (x < self.upper)


class Target(Protocol):
    params: Sequence[Param]

    def log_density(self, state: Mapping[str, np.ndarray]) -> np.ndarray:
        """Full log density per chain, shape ``(n_chains,)``."""

    def block_log_density(self, name: str, state: Mapping[str, np.ndarray]) -> np.ndarray:
        """Terms of the log density that involve block ``name``.

        Shape ``(n_chains,)`` for scalars, ``(n_chains, size)`` for vectors.
        """


class CallableTarget:
    """Adapter turning ``fn(dict) -> float`` into a :class:`Target`.

    Every entry of the initial state becomes an unbounded scalar block
    (vector entries are split into one block per element).
    """

    def __init__(self, fn: Callable[[dict], float], template: Mapping[str, object]):
        self.fn = fn
        self._shapes = {k: np.shape(v) for k, v in template.items()}
        self.params = []
        for k, shape in self._shapes.items():
            if shape == ():
                self.params.append(Param(k))
            else:
                self.params.extend(Param(f"{k}[{i}]") for i in range(int(np.prod(shape))))
        self.params = tuple(self.params)

    def flatten(self, values: Mapping[str, object]) -> dict:
        out = {}
        for k, shape in self._shapes.items():
            v = np.asarray(values[k], dtype=float)
            if shape == ():
                out[k] = float(v)
            else:
                for i, e in enumerate(v.ravel()):
                    out[f"{k}[{i}]"] = float(e)
        return out

    def unflatten(self, flat: Mapping[str, float]) -> dict:
        out = {}
        for k, shape in self._shapes.items():
            if shape == ():
                out[k] = flat[k]
            else:
                n = int(np.prod(shape))
                out[k] = np.array([flat[f"{k}[{i}]"] for i in range(n)]).reshape(shape)
        return out

    def log_density(self, state):
        n_chains = len(next(iter(state.values())))
        lp = np.empty(n_chains)
        for c in range(n_chains):
            v = float(self.fn(self.unflatten({k: a[c] for k, a in state.items()})))
            lp[c] = -np.inf if np.isnan(v) else v
        return lp

    def block_log_density(self, name, state):
        return self.log_density(state)


@dataclass(frozen=True)
class McmcConfig:
    n_chains: int = 4
    n_iterations: int = 20000
    burn_in: int = 10000
    thin: int = 1
    target_acceptance: float = 0.3
    initial_scale: float = 0.1
    initial_scales: Mapping[str, float] = field(default_factory=dict)
    adapt_every: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("n_chains must be at least 1")
        if not 0 <= self.burn_in < self.n_iterations:
            raise ValueError("burn_in must be in [0, n_iterations)")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if not 0 < self.target_acceptance < 1:
            raise ValueError("target_acceptance must lie in (0, 1)")
        if self.initial_scale <= 0 or any(v <= 0 for v in self.initial_scales.values()):
            raise ValueError("proposal scales must be positive")

    @property
    def n_retained(self) -> int:
        return -(-(self.n_iterations - self.burn_in) // self.thin)

    def with_seed(self, seed: int) -> "McmcConfig":
        from dataclasses import replace

        return replace(self, seed=int(seed))


@dataclass
class Diagnostics:
    rhat: dict[str, float]
    ess: dict[str, float]

    def converged(self, threshold: float = 1.05) -> bool:
        return all(v < threshold for v in self.rhat.values())


@dataclass
class Trace:
    """Retained draws, one array of shape ``(n_chains, n_retained)`` per scalar."""

    samples: dict[str, np.ndarray]
    acceptance_rate: dict[str, float]
    latent_means: dict[str, np.ndarray] = field(default_factory=dict)
    rhat: dict[str, float] = field(default_factory=dict)
    ess: dict[str, float] = field(default_factory=dict)
    scales: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_chains(self) -> int:
        src = self.samples or self.latent_means
        return next(iter(src.values())).shape[0]

    @property
    def names(self) -> list[str]:
        return list(self.samples)

    def pooled(self, name: str) -> np.ndarray:
        if name not in self.samples:
            raise UnknownParameterError(name)
        return self.samples[name].reshape(-1, *self.samples[name].shape[2:])

    def to_csv(self, path) -> None:
        """One row per retained draw: chain, draw, then every scalar parameter."""
        scalars = [k for k, v in self.samples.items() if v.ndim == 2]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["chain", "draw", *scalars])
            n_chains, n_keep = self.samples[scalars[0]].shape
            for c in range(n_chains):
                for t in range(n_keep):
                    w.writerow([c, t, *(repr(float(self.samples[k][c, t])) for k in scalars)])


def posterior_mean(trace: Trace, parameter: str) -> float:
    return float(np.mean(trace.pooled(parameter)))


def _block_seed(seed: int, name: str, salt: int = 0) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode()), salt])


def _as_chain_states(target, init, n_chains) -> dict[str, np.ndarray]:
    if isinstance(init, (list, tuple)):
        if len(init) != n_chains:
            raise ValueError(f"got {len(init)} initial states for {n_chains} chains")
        states = list(init)
    else:
        states = [init] * n_chains
    encode = getattr(target, "encode", None)
    if encode is not None:
        states = [encode(s) for s in states]
    elif isinstance(target, CallableTarget):
        states = [target.flatten(s) for s in states]
    out = {}
    for p in target.params:
        vals = [np.asarray(s[p.name], dtype=float) for s in states]
        out[p.name] = np.stack(vals).astype(float)
        expected = (n_chains,) if p.size is None else (n_chains, p.size)
        if out[p.name].shape != expected:
            raise ValueError(f"initial value for {p.name} has shape {out[p.name].shape[1:]}")
    return out


def _initialize(target, state, seed):
    lp = target.log_density(state)
    bad = ~np.isfinite(lp)
    if not bad.any():
        return state, lp
    sampler = getattr(target, "sample_prior", None)
    if sampler is None:
        raise InitializationError("initial state has zero density and the target has no prior")
    rng = _block_seed(seed, "__init__", 1)
    for _ in range(1000):
        draw = sampler(rng, int(bad.sum()))
        for k in state:
            state[k] = state[k].copy()
            state[k][bad] = draw[k]
        lp = target.log_density(state)
        bad = ~np.isfinite(lp)
        if not bad.any():
            return state, lp
    raise InitializationError("no finite-density starting point after 1000 prior draws")


def _chunks(cfg: McmcConfig):
    """Iteration ranges that never straddle the end of burn-in."""
    start = 0
    while start < cfg.n_iterations:
        stop = start + cfg.adapt_every
        if start < cfg.burn_in < stop:
            stop = cfg.burn_in
        stop = min(stop, cfg.n_iterations)
        yield start, stop
        start = stop


def _python_sweeps(target, params, state, log_scale, draws, rec):
    """Reference block-at-a-time sweeps over pre-drawn random numbers."""
    L = len(rec)
    acc = {p.name: np.zeros_like(log_scale[p.name]) for p in params}
    hist = {p.name: np.empty((L,) + state[p.name].shape) for p in params if p.size is None}
    sums = {p.name: np.zeros_like(state[p.name]) for p in params if p.size is not None}
    for t in range(L):
        for p in params:
            name = p.name
            z, e = draws[name][0][t], draws[name][1][t]
            x = state[name]
            y = p.forward(x)
            y_new = y + np.exp(log_scale[name]) * z
            x_new = p.backward(y_new)
            ok = p.inside(x_new)
            cur = target.block_log_density(name, state)
            proposal = dict(state)
            proposal[name] = np.where(ok, x_new, x)
            new = target.block_log_density(name, proposal)
            with np.errstate(invalid="ignore", divide="ignore"):
                log_ratio = (new + p.log_jacobian(x_new, y_new)) - (cur + p.log_jacobian(x, y))
                # -e is the log of a uniform variate
                accept = ok & (-e < log_ratio)
            state[name] = np.where(accept, x_new, x)
            acc[name] += accept
        for name in hist:
            hist[name][t] = state[name]
        if rec[t]:
            for name in sums:
                sums[name] += state[name]
    return acc, hist, sums


def run_mh(log_posterior, init, cfg: McmcConfig = McmcConfig(), *, compiled: bool = True) -> Trace:
    """Sample ``log_posterior`` starting from ``init``.

    ``log_posterior`` is either a :class:`Target` or a plain function of a
    dict of named values.  ``init`` is one state shared by all chains or a
    sequence with one state per chain.  Targets that provide a compiled
    ``sweep`` use it unless ``compiled=False``; both paths consume the same
    random numbers.
    """
    target = log_posterior
    if not hasattr(target, "block_log_density"):
        template = init[0] if isinstance(init, (list, tuple)) else init
        target = CallableTarget(log_posterior, template)
    sweep = getattr(target, "sweep", None) if compiled else None

    C = cfg.n_chains
    state = _as_chain_states(target, init, C)
    state, _ = _initialize(target, state, cfg.seed)

    params = list(target.params)
    rngs = {p.name: _block_seed(cfg.seed, p.name) for p in params}
    log_scale = {}
    for p in params:
        s0 = cfg.initial_scales.get(p.name, cfg.initial_scale)
        shape = (C,) if p.size is None else (C, p.size)
        log_scale[p.name] = np.full(shape, math.log(s0))
    total_acc = {p.name: np.zeros_like(log_scale[p.name]) for p in params}

    n_keep = cfg.n_retained
    samples, sums = {}, {}
    for p in params:
        if p.record and p.size is None:
            samples[p.name] = np.empty((C, n_keep))
        else:
            sums[p.name] = np.zeros((C,) if p.size is None else (C, p.size))

    n_adapt = 0
    keep = 0
    for start, stop in _chunks(cfg):
        L = stop - start
        its = np.arange(start, stop)
        rec = (its >= cfg.burn_in) & ((its - cfg.burn_in) % cfg.thin == 0)
        draws = {}
        for p in params:
            shape = (L,) + state[p.name].shape
            rng = rngs[p.name]
            draws[p.name] = (rng.standard_normal(shape), rng.standard_exponential(shape))
        if sweep is not None:
            acc, hist, chunk_sums = sweep(state, log_scale, draws, rec)
        else:
            acc, hist, chunk_sums = _python_sweeps(target, params, state, log_scale, draws, rec)

        if stop <= cfg.burn_in:
            n_adapt += 1
            gain = 1.0 / math.sqrt(n_adapt)
            for p in params:
                log_scale[p.name] += 2.0 * gain * (acc[p.name] / L - cfg.target_acceptance)
        else:
            for p in params:
                total_acc[p.name] += acc[p.name]

        n_rec = int(rec.sum())
        if n_rec:
            for p in params:
                if p.record and p.size is None:
                    samples[p.name][:, keep : keep + n_rec] = hist[p.name][rec].T
                elif p.size is not None:
                    sums[p.name] += chunk_sums[p.name]
                else:
                    sums[p.name] += hist[p.name][rec].sum(axis=0)
            keep += n_rec

    n_post = cfg.n_iterations - cfg.burn_in
    acceptance = {p.name: float(np.mean(total_acc[p.name]) / n_post) for p in params}
    trace = Trace(
        samples=samples,
        acceptance_rate=acceptance,
        latent_means={k: v / keep for k, v in sums.items()},
        scales={k: np.exp(v) for k, v in log_scale.items()},
    )
    if C >= 2 and samples:
        diag = diagnostics(trace)
        trace.rhat, trace.ess = diag.rhat, diag.ess
    else:
        trace.rhat = {k: math.nan for k, v in samples.items() if v.ndim == 2}
        trace.ess = dict(trace.rhat)
    return trace


# Convergence diagnostics: rank-normalized split R-hat and bulk ESS.


def _split(x: np.ndarray) -> np.ndarray:
    n = x.shape[1] // 2
    return np.concatenate([x[:, :n], x[:, x.shape[1] - n :]], axis=0)


def _rank_normalize(x: np.ndarray) -> np.ndarray:
    ranks = stats.rankdata(x, method="average").reshape(x.shape)
    return stats.norm.ppf((ranks - 0.375) / (x.size + 0.25))


def _basic_rhat(x: np.ndarray) -> float:
    m, n = x.shape
    within = np.mean(np.var(x, axis=1, ddof=1))
    between = n * np.var(np.mean(x, axis=1), ddof=1)
    if within == 0:
        return 1.0
    var_hat = (n - 1) / n * within + between / n
    return float(np.sqrt(var_hat / within))


def split_rhat(x: np.ndarray) -> float:
    """Rank-normalized split R-hat (max of bulk and folded), chains on axis 0."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InsufficientChainsError("R-hat needs at least two chains")
    if np.ptp(x) == 0:
        return 1.0
    xs = _split(x)
    bulk = _basic_rhat(_rank_normalize(xs))
    folded = np.abs(xs - np.median(xs))
    tail = _basic_rhat(_rank_normalize(folded))
    return max(bulk, tail)


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.shape[1]
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    xc = x - x.mean(axis=1, keepdims=True)
    spec = np.fft.rfft(xc, size, axis=1)
    acov = np.fft.irfft(spec * np.conj(spec), size, axis=1)[:, :n]
    return acov / n


def _ess(x: np.ndarray) -> float:
    m, n = x.shape
    if n < 4:
        return float(m * n)
    acov = _autocov(x)
    mean_var = np.mean(acov[:, 0]) * n / (n - 1)
    var_plus = mean_var * (n - 1) / n
    if m > 1:
        var_plus += np.var(x.mean(axis=1), ddof=1)
    if var_plus == 0:
        return float(m * n)
    rho = 1.0 - (mean_var - np.mean(acov, axis=0)) / var_plus
    rho[0] = 1.0
    # Geyer's initial positive sequence over pairs, made monotone
    n_pairs = (n - 1) // 2
    pairs = rho[0 : 2 * n_pairs : 2] + rho[1 : 2 * n_pairs : 2]
    stop = np.flatnonzero(pairs <= 0)
    pairs = pairs[: stop[0]] if stop.size else pairs
    pairs = np.minimum.accumulate(pairs)
    tau = -1.0 + 2.0 * pairs.sum()
    tau = max(tau, 1.0 / np.log10(m * n))
    return float(m * n / tau)


def bulk_ess(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if np.ptp(x) == 0:
        return float(x.size)
    return _ess(_rank_normalize(_split(x)))


def diagnostics(trace: Trace) -> Diagnostics:
    if trace.n_chains < 2:
        raise InsufficientChainsError("diagnostics need at least two chains")
    rhat, ess = {}, {}
    for name, draws in trace.samples.items():
        if draws.ndim != 2:
            continue
        rhat[name] = split_rhat(draws)
        ess[name] = bulk_ess(draws)
    return Diagnostics(rhat, ess)
