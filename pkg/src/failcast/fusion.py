"""Failure-rate learning from failures alone or fused with DTC evidence.

Case 1 fits the Weibull to in-window failures only.  Cases 2 and 3 first learn
how DTC occurrence and service observation track the failure (step 1), use
that to predict failure cycles for units whose DTC was seen but whose part has
not failed yet (step 2), then refit the Weibull on the union of observed and
predicted failures (step 3).  Case 2 uses service observations; Case 3 adds
tele-diagnostic occurrences.  The best scenario replaces step 2's predictions
by the simulator's true failure cycles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .bayesnet import (
    F_AND_S,
    F_I_S,
    F_ONLY,
    DependencyParams,
    NetworkTarget,
    ObservationMask,
    PriorConfig,
    WeibullParams,
)
from .domain import DataError, DisjointnessError, PartDataset
from .mcmc import McmcConfig, Trace, posterior_mean, run_mh

EPS = 1e-6


class CaseId(str, Enum):
    CASE1 = "case1"
    CASE2 = "case2"
    CASE3 = "case3"
    BEST = "best"


class DegenerateParameterError(ValueError):
    pass


class MissingTruthError(DataError):
    pass


@dataclass
class FitResult:
    """Outcome of one pipeline run for a part (and DTC, except aggregates).

    ``fail_all`` and ``serv_all`` hold the augmented failure and observation
    sets the final Weibull fit saw; ``predicted_units`` and
    ``predicted_cycles`` are the predicted future failures.
    """

    case: CaseId
    part: int
    dtc: Optional[int]
    weibull: WeibullParams
    dep: Optional[DependencyParams] = None
    predicted_units: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    predicted_cycles: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n: int = 0
    n_prime: int = 0
    n_clamped: int = 0
    fail_all: Optional[np.ndarray] = None
    serv_all: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def predicted_failures(self) -> list[tuple[int, float]]:
        return [(int(u), float(f)) for u, f in zip(self.predicted_units, self.predicted_cycles)]

    @property
    def rhat_max(self) -> float:
        vals = [v for k, v in self.diagnostics.items() if k.endswith("rhat") and np.isfinite(v)]
        return max(vals) if vals else float("nan")


def _summary(trace: Trace, prefix: str, names: Sequence[str]) -> dict:
    out = {}
    for k in names:
        if k in trace.rhat:
            out[f"{prefix}{k}.rhat"] = trace.rhat[k]
            out[f"{prefix}{k}.ess"] = trace.ess[k]
        if k in trace.samples:
            out[f"{prefix}{k}.sd"] = float(np.std(trace.pooled(k)))
    return out


def _sample(target: NetworkTarget, mcmc: McmcConfig) -> Trace:
    return run_mh(target, target.initial_states(mcmc.seed, mcmc.n_chains), mcmc)


def _weibull(trace: Trace) -> WeibullParams:
    return WeibullParams(posterior_mean(trace, "alpha"), posterior_mean(trace, "beta"))


def _dep(trace: Trace) -> DependencyParams:
    lead = float(np.mean(trace.pooled("r") * (1.0 - trace.pooled("m"))))
    return DependencyParams(*(posterior_mean(trace, k) for k in ("r", "sigma1", "m", "sigma2")),
                            lead=lead)


def _mask(case: CaseId) -> ObservationMask:
    case = CaseId(case)
    if case is CaseId.CASE2:
        return F_AND_S
    if case in (CaseId.CASE3, CaseId.BEST):
        return F_I_S
    raise ValueError(f"{case.value} does not use dependency data")


def _target(fail, ind, serv, mask, priors, fixed=None) -> NetworkTarget:
    return NetworkTarget(
        fail if mask.f_observed else None,
        ind if mask.i_observed else None,
        serv if mask.s_observed else None,
        mask, priors, fixed,
    )


def fit_case1(ds: PartDataset, priors: PriorConfig = PriorConfig(),
              mcmc: McmcConfig = McmcConfig()) -> FitResult:
    if ds.n == 0:
        raise DataError("case 1 needs at least one failure")
    trace = _sample(_target(ds.fail, None, None, F_ONLY, priors), mcmc)
    return FitResult(
        CaseId.CASE1, ds.part, ds.dtc, _weibull(trace), n=ds.n, n_prime=ds.n_prime,
        fail_all=ds.fail.copy(), serv_all=None,
        diagnostics=_summary(trace, "", ("alpha", "beta")),
    )


def _learn(ds: PartDataset, case: CaseId, priors, mcmc) -> tuple[DependencyParams, Trace]:
    mask = _mask(case)
    if ds.n == 0:
        raise DataError("learning dependencies needs at least one failure")
    trace = _sample(_target(ds.fail, ds.ind, ds.serv, mask, priors), mcmc)
    return _dep(trace), trace


def learn_dependency(ds: PartDataset, case: CaseId, priors: PriorConfig = PriorConfig(),
                     mcmc: McmcConfig = McmcConfig()) -> DependencyParams:
    """Posterior-mean lead-gap, observation-delay and noise parameters."""
    if CaseId(case) not in (CaseId.CASE2, CaseId.CASE3):
        raise ValueError("dependencies are learned for case2 and case3 only")
    return _learn(ds, CaseId(case), priors, mcmc)[0]


def invert_service_to_failure(s_prime, i_prime, dep: DependencyParams, case: CaseId):
    """Failure cycles implied by the mean structure of the network.

    Case 3 inverts the observation mean, ``f = i + (s - i) / m``.  Case 2,
    without the occurrence, composes both means: ``f = s / (1 - r (1 - m))``, using
    ``dep.lead`` for the product when it is set.
    Results never fall below the observation.
    """
    case = CaseId(case)
    s = np.asarray(s_prime, dtype=float)
    if case is CaseId.CASE3:
        if i_prime is None:
            raise ValueError("case 3 inversion needs the occurrence cycles")
        i = np.asarray(i_prime, dtype=float)
        if np.any(i > s):
            raise ValueError("occurrence must not follow observation")
        if dep.m <= EPS:
            raise DegenerateParameterError(f"observation-delay ratio {dep.m} is too small")
        f = i + (s - i) / dep.m
    elif case is CaseId.CASE2:
        if i_prime is not None:
            raise ValueError("case 2 inversion takes no occurrence cycles")
        q = dep.observation_lead
        if q >= 1.0 - EPS:
            raise DegenerateParameterError(f"r (1 - m) = {q} leaves no room for the failure")
        f = s / (1.0 - q)
    else:
        raise ValueError(f"no inversion for {case.value}")
    f = np.maximum(f, s)
    return float(f) if f.ndim == 0 else f


def _predict_sampled(ds, case, dep, weibull, priors, mcmc) -> np.ndarray:
    """Posterior mean of each primed failure with all parameters held fixed."""
    mask = ObservationMask(False, case is CaseId.CASE3, True)
    fixed = {"alpha": weibull.alpha, "beta": weibull.beta, "r": dep.r, "sigma1": dep.sigma1,
             "m": dep.m, "sigma2": dep.sigma2}
    target = NetworkTarget(None, ds.ind_prime if case is CaseId.CASE3 else None,
                           ds.serv_prime, mask, priors, fixed)
    trace = _sample(target, mcmc)
    return trace.latent_means["latent_f"].mean(axis=0)


def _clamp_to_survival(ds: PartDataset, f_hat: np.ndarray) -> tuple[np.ndarray, int]:
    f_hat = np.maximum(f_hat, ds.serv_prime)
    if ds.future_accrued is None:
        return f_hat, 0
    # the unit was still running at the end of the window
    low = f_hat < ds.future_accrued
    return np.where(low, ds.future_accrued + 1.0, f_hat), int(low.sum())


def _refit(ds, f_prime, priors, mcmc, result_case, dep, step1_diag, n_clamped):
    if np.intersect1d(ds.failed_units, ds.future_units).size:
        raise DisjointnessError("observed and predicted failures must come from distinct units")
    fail_all = np.concatenate([ds.fail, f_prime])
    serv_all = np.concatenate([ds.serv, ds.serv_prime])
    # With every failure observed, the shape/scale posterior does not involve
    # the occurrence and observation nodes, so the refit samples it alone.
    # Per-block random streams make this draw-for-draw the chains a full
    # network fit would produce for alpha and beta.
    trace = _sample(_target(fail_all, None, None, F_ONLY, priors), mcmc)
    diag = dict(step1_diag)
    diag.update(_summary(trace, "", ("alpha", "beta")))
    return FitResult(
        result_case, ds.part, ds.dtc, _weibull(trace), dep,
        predicted_units=ds.future_units.copy(), predicted_cycles=np.asarray(f_prime, float),
        n=ds.n, n_prime=ds.n_prime, n_clamped=n_clamped,
        fail_all=fail_all, serv_all=serv_all, diagnostics=diag,
    )


def fit_fused(ds: PartDataset, case: CaseId, priors: PriorConfig = PriorConfig(),
              mcmc: McmcConfig = McmcConfig(), *, dep: Optional[DependencyParams] = None,
              predictive: str = "analytic") -> FitResult:
    """Steps 1-3 for case 2 or case 3.

    ``dep`` skips step 1 and predicts with the given dependency parameters.
    ``predictive="sampled"`` replaces the analytic inversion by the posterior
    mean of each primed failure under the network with step 1's parameters.
    """
    case = CaseId(case)
    if case not in (CaseId.CASE2, CaseId.CASE3):
        raise ValueError("fit_fused runs case2 or case3")
    if predictive not in ("analytic", "sampled"):
        raise ValueError("predictive must be 'analytic' or 'sampled'")

    step1_diag = {}
    weibull1 = None
    if dep is None:
        dep, trace1 = _learn(ds, case, priors, mcmc)
        step1_diag = _summary(trace1, "step1.", ("r", "sigma1", "m", "sigma2"))
        weibull1 = _weibull(trace1)

    if ds.n_prime == 0:
        f_prime, n_clamped = np.zeros(0), 0
    else:
        if predictive == "sampled":
            if weibull1 is None:
                raise ValueError("sampled prediction needs step 1 to run")
            f_hat = _predict_sampled(ds, case, dep, weibull1, priors, mcmc)
        else:
            i_prime = ds.ind_prime if case is CaseId.CASE3 else None
            f_hat = invert_service_to_failure(ds.serv_prime, i_prime, dep, case)
        f_prime, n_clamped = _clamp_to_survival(ds, np.atleast_1d(f_hat))

    return _refit(ds, f_prime, priors, mcmc, case, dep, step1_diag, n_clamped)


def fit_best_scenario(ds: PartDataset, truth, priors: PriorConfig = PriorConfig(),
                      mcmc: McmcConfig = McmcConfig()) -> FitResult:
    """Case 3's refit with the true future failure cycles in place of predictions."""
    if truth is None:
        raise MissingTruthError("the best scenario needs ground truth")
    try:
        f_prime = truth.failure_cycles(ds.part, ds.future_units)
    except KeyError as exc:
        raise MissingTruthError(str(exc)) from None
    return _refit(ds, f_prime, priors, mcmc, CaseId.BEST, None, {}, 0)


def aggregate_part(results: Sequence[FitResult]) -> FitResult:
    """Combine per-DTC fits of one part.

    Shape and scale are averaged with weights ``n + n'``; a unit predicted to
    fail by several DTCs counts once, at its earliest predicted cycles.
    """
    if not results:
        raise ValueError("nothing to aggregate")
    parts = {r.part for r in results}
    cases = {r.case for r in results}
    if len(parts) != 1 or len(cases) != 1:
        raise ValueError("aggregate one part and one case at a time")
    w = np.array([r.n + r.n_prime for r in results], dtype=float)
    alpha = float(np.sum(w * [r.weibull.alpha for r in results]) / w.sum())
    beta = float(np.sum(w * [r.weibull.beta for r in results]) / w.sum())

    earliest: dict[int, float] = {}
    for r in results:
        for u, f in zip(r.predicted_units, r.predicted_cycles):
            u = int(u)
            if u not in earliest or f < earliest[u]:
                earliest[u] = float(f)
    units = np.array(sorted(earliest), dtype=np.int64)
    rhats = [r.rhat_max for r in results if np.isfinite(r.rhat_max)]
    return FitResult(
        results[0].case, results[0].part, None, WeibullParams(alpha, beta), None,
        predicted_units=units, predicted_cycles=np.array([earliest[u] for u in units]),
        n=results[0].n, n_prime=len(units), n_clamped=sum(r.n_clamped for r in results),
        diagnostics={"max.rhat": max(rhats)} if rhats else {},
    )


def part_seed(seed: int, part: int) -> int:
    """Sampler seed shared by every fit of one part."""
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(part)]).generate_state(1)[0])


@dataclass
class PartFits:
    part: int
    per_dtc: dict[CaseId, list[FitResult]]
    aggregate: dict[CaseId, FitResult]


def fit_part(events, window, part: int, dtcs: Sequence[int], cases: Sequence[CaseId],
             priors: PriorConfig = PriorConfig(), mcmc: McmcConfig = McmcConfig(),
             truth=None, predictive: str = "analytic") -> PartFits:
    """Run the requested cases for one part over all of its DTCs.

    Every fit of the part uses the same sampler seed, so a DTC without primed
    units reproduces the failure-only estimates exactly.
    """
    from .domain import assemble_sets

    cases = [CaseId(c) for c in cases]
    mc = mcmc.with_seed(part_seed(mcmc.seed, part))
    datasets = [assemble_sets(events, window, part, k) for k in dtcs]
    per_dtc: dict[CaseId, list[FitResult]] = {}
    aggregate: dict[CaseId, FitResult] = {}
    for case in cases:
        if case is CaseId.CASE1:
            res = fit_case1(datasets[0], priors, mc)
            per_dtc[case] = [
                FitResult(case, part, ds.dtc, res.weibull, n=ds.n, n_prime=ds.n_prime,
                          fail_all=res.fail_all, diagnostics=res.diagnostics)
                for ds in datasets
            ]
            aggregate[case] = FitResult(case, part, None, res.weibull, n=res.n,
                                        fail_all=res.fail_all, diagnostics=res.diagnostics)
            continue
        if case is CaseId.BEST:
            fits = [fit_best_scenario(ds, truth, priors, mc) for ds in datasets]
        else:
            fits = [fit_fused(ds, case, priors, mc, predictive=predictive) for ds in datasets]
        per_dtc[case] = fits
        aggregate[case] = aggregate_part(fits)
    return PartFits(part, per_dtc, aggregate)
