"""Data-augmentation sampler separating true from spurious events.

One iteration alternates

* an imputation sweep drawing the latent label of every event in time order,
  each with probability ``lambda_1 / (lambda_0 + lambda_1)`` evaluated on the
  component histories built from the labels drawn so far, and
* a posterior step refitting both components on the completed data and
  drawing coefficients from their Gaussian posterior approximations.

Retained draws are pooled with Rubin's rules.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag
from scipy.special import expit

from .events import EventStream, RiskSet
from .netstats import exogenous_values, endogenous_values, HistoryState
from .ppois import (
    FitError,
    FitResult,
    IntervalDesign,
    ModelSpec,
    build_dataset,
    extended_penalty,
    fit_constant_rate,
    fit_penalized_poisson,
)
from .smooth import build_basis, build_penalty

logger = logging.getLogger(__name__)

CONTINUITY = 0.5
INIT_ATTEMPTS = 5
SPURIOUS, TRUE = 0, 1


class ChainError(RuntimeError):
    pass


@dataclass(frozen=True)
class SplineConfig:
    K: int = 10
    degree: int = 3
    penalty_order: int = 2


@dataclass(frozen=True)
class ChainConfig:
    burn_in: int = 30
    draws: int = 30
    seed: int = 0
    gamma: float | str = "auto"
    max_irls_iter: int = 50
    tol: float = 1e-8

    def __post_init__(self):
        if self.burn_in < 0 or self.draws < 1:
            raise ValueError("need burn_in >= 0 and draws >= 1")


@dataclass
class PosteriorDraw:
    labels: np.ndarray
    fits: dict[int, FitResult]
    samples: dict[int, np.ndarray]
    failed: bool = False

    @property
    def n_spurious(self) -> int:
        return int(np.sum(self.labels == SPURIOUS))

    def theta_hat(self, component: int) -> np.ndarray:
        return self.fits[component].theta_hat

    def covariance(self, component: int) -> np.ndarray:
        return self.fits[component].covariance


@dataclass
class FitReport:
    names: list[str]
    posterior_mean: np.ndarray
    posterior_cov: np.ndarray
    pfe_estimate: float
    draws_used: int
    burn_in: int
    within: np.ndarray | None = None
    between: np.ndarray | None = None

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.posterior_cov), 0.0, None))

    @property
    def z_values(self) -> np.ndarray:
        return self.posterior_mean / self.std_errors

    @property
    def ci95(self) -> np.ndarray:
        se = self.std_errors
        return np.column_stack([self.posterior_mean - 1.96 * se, self.posterior_mean + 1.96 * se])

    def coef(self, name: str) -> float:
        return float(self.posterior_mean[self.names.index(name)])

    def to_dict(self) -> dict:
        ci = self.ci95
        return {
            "coefficients": [
                {
                    "name": n,
                    "estimate": float(self.posterior_mean[k]),
                    "std_error": float(self.std_errors[k]),
                    "z_value": float(self.z_values[k]),
                    "ci95": [float(ci[k, 0]), float(ci[k, 1])],
                }
                for k, n in enumerate(self.names)
            ],
            "posterior_cov": self.posterior_cov.tolist(),
            "pfe_estimate": float(self.pfe_estimate),
            "draws_used": int(self.draws_used),
            "burn_in": int(self.burn_in),
        }


class SpuriousEventSampler:
    """Holds the data, the two component models and the fitting options.

    ``spurious_model=None`` gives the ordinary relational event model where
    every event is true.
    """

    def __init__(
        self,
        stream: EventStream,
        true_model: ModelSpec,
        spurious_model: ModelSpec | None = ModelSpec((), baseline=False),
        rs: RiskSet | None = None,
        spline: SplineConfig = SplineConfig(),
        gamma: float | str = "auto",
        max_irls_iter: int = 50,
        tol: float = 1e-8,
    ):
        if spurious_model is not None:
            shared = {s.name for s in true_model.statistics} & {s.name for s in spurious_model.statistics}
            if shared:
                raise ValueError(f"true and spurious models share statistics {sorted(shared)}")
        self.stream = stream
        self.true_model = true_model
        self.spurious_model = spurious_model
        self.rs = rs if rs is not None else RiskSet.all_pairs(stream.actors)
        self.models = {TRUE: true_model}
        if spurious_model is not None:
            self.models[SPURIOUS] = spurious_model
        needs_basis = any(m.baseline for m in self.models.values())
        self.basis = build_basis(stream.horizon, spline.K, spline.degree) if needs_basis else None
        penalty = build_penalty(spline.K, spline.penalty_order) if needs_basis else None
        self.design = IntervalDesign(stream, self.rs, self.basis)
        self.penalties = {c: extended_penalty(m, self.basis, penalty) for c, m in self.models.items()}
        self.names = {c: m.column_names(self.basis) for c, m in self.models.items()}
        self.fit_options = {"gamma": gamma, "max_iter": max_irls_iter, "tol": tol}
        self.total_exposure = float(self.design.exposure.sum() * self.design.n_dyads)
        self._event_static = {
            c: np.column_stack(
                [
                    exogenous_values(s, stream.actors, self.design.event_ia, self.design.event_ib)
                    if not s.endogenous
                    else np.zeros(len(stream))
                    for s in m.statistics
                ]
            )
            if m.statistics
            else np.zeros((len(stream), 0))
            for c, m in self.models.items()
        }

    @property
    def n_events(self) -> int:
        return len(self.stream)

    def report_names(self) -> list[str]:
        out = []
        for c, label in ((SPURIOUS, "spurious"), (TRUE, "true")):
            if c in self.models:
                out += [f"{label}:{n}" for n in self.names[c]]
        return out

    # -- imputation ---------------------------------------------------------

    def event_log_intensity(self, c: int, theta, m: int, state: HistoryState) -> float:
        model = self.models[c]
        theta = np.asarray(theta, dtype=float)
        eta = theta[0]
        k = 1
        if model.baseline:
            n = self.basis.num_basis - 1
            eta += self.design.spline_rows[m] @ theta[1 : 1 + n]
            k += n
        i, j = self.design.event_ia[m : m + 1], self.design.event_ib[m : m + 1]
        for q, s in enumerate(model.statistics):
            x = endogenous_values(s, state, i, j)[0] if s.endogenous else self._event_static[c][m, q]
            eta += theta[k + q] * x
        return float(eta)

    def acceptance_probabilities(self, theta: dict, labels) -> np.ndarray:
        """P(z_m = 1 | z_1..z_{m-1}) for a given labelling (histories follow ``labels``)."""
        labels = np.asarray(labels)
        states = {c: HistoryState(self.stream.actors) for c in self.models}
        probs = np.empty(self.n_events)
        for m in range(self.n_events):
            probs[m] = self._prob(theta, m, states)
            c = int(labels[m])
            if c in states:
                states[c].apply_index(self.design.event_ia[m], self.design.event_ib[m])
        return probs

    def _prob(self, theta, m, states) -> float:
        if SPURIOUS not in self.models:
            return 1.0
        eta1 = self.event_log_intensity(TRUE, theta[TRUE], m, states[TRUE])
        eta0 = self.event_log_intensity(SPURIOUS, theta[SPURIOUS], m, states[SPURIOUS])
        if eta0 == eta1 == -np.inf:
            raise ChainError(f"both intensities are zero at event {m}")
        return float(expit(eta1 - eta0))

    def istep(self, theta: dict, rng: np.random.Generator) -> np.ndarray:
        """One forward sweep; ``theta`` maps component -> coefficient vector."""
        u = rng.random(self.n_events)
        states = {c: HistoryState(self.stream.actors) for c in self.models}
        labels = np.empty(self.n_events, dtype=np.int8)
        for m in range(self.n_events):
            z = int(u[m] < self._prob(theta, m, states))
            labels[m] = z
            if z in states:
                states[z].apply_index(self.design.event_ia[m], self.design.event_ib[m])
        return labels

    # -- posterior ----------------------------------------------------------

    def fit_component(self, c: int, labels, previous: FitResult | None = None) -> FitResult:
        """Complete-data fit of component ``c``, warm-started from ``previous``."""
        model = self.models[c]
        n_c = int(np.sum(np.asarray(labels) == c))
        if model.constant_only:
            return fit_constant_rate(n_c, self.total_exposure, CONTINUITY if n_c == 0 else 0.0)
        if n_c == 0:
            # no events: continuity-corrected rate, other coefficients at 0 with unit variance
            base = fit_constant_rate(0, self.total_exposure, CONTINUITY)
            p = len(self.names[c])
            theta = np.zeros(p)
            theta[0] = base.theta_hat[0]
            cov = np.eye(p)
            cov[0, 0] = base.covariance[0, 0]
            return FitResult(theta, cov, float("nan"), base.penalized_loglik, 0, list(self.names[c]))
        data = build_dataset(self.design, labels, c, model)
        start = gamma_start = None
        if previous is not None and len(previous.theta_hat) == data.X.shape[1] and previous.iterations:
            start, gamma_start = previous.theta_hat, previous.gamma
        return fit_penalized_poisson(data, self.penalties[c], start=start, gamma_start=gamma_start, **self.fit_options)

    def pstep(self, labels, rng: np.random.Generator, previous: PosteriorDraw | None = None) -> PosteriorDraw:
        """Refit both components on the completed data and draw coefficients.

        Each component uses its own child generator, so the two fits and
        draws do not depend on the order in which they are computed.
        """
        labels = np.asarray(labels, dtype=np.int8)
        if len(labels) != self.n_events or not np.all((labels == 0) | (labels == 1)):
            raise ValueError("labels must be a binary vector with one entry per event")
        children = dict(zip((SPURIOUS, TRUE), rng.spawn(2)))
        fits, samples = {}, {}
        for c in sorted(self.models):
            fits[c] = self.fit_component(c, labels, None if previous is None else previous.fits.get(c))
            samples[c] = draw_normal(fits[c].theta_hat, fits[c].covariance, children[c])
            if not np.any(labels == c):
                # no events: the rate estimate is zero, so the next sweep keeps every label away from c
                samples[c][0] = -np.inf
        return PosteriorDraw(labels, fits, samples)


def draw_normal(mean: np.ndarray, cov: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    L = np.linalg.cholesky(cov)
    return mean + L @ rng.standard_normal(len(mean))


def istep(sampler: SpuriousEventSampler, theta: dict, rng: np.random.Generator) -> np.ndarray:
    return sampler.istep(theta, rng)


def pstep(sampler: SpuriousEventSampler, labels, rng: np.random.Generator, previous=None) -> PosteriorDraw:
    return sampler.pstep(labels, rng, previous)


@dataclass
class ChainResult:
    draws: list[PosteriorDraw]
    trace: list[dict] = field(default_factory=list)
    failures: int = 0
    burn_in: int = 0


def run_chain(sampler: SpuriousEventSampler, config: ChainConfig = ChainConfig()) -> ChainResult:
    """Initialize from a random half split, then alternate I- and P-steps.

    A split whose P-step fails is redrawn, up to ``INIT_ATTEMPTS`` times.

    Returns the last ``config.draws`` draws and a per-iteration trace
    (iteration 0 is the initial split).
    """
    rng = np.random.default_rng(config.seed)
    for attempt in range(1, INIT_ATTEMPTS + 1):
        labels = (rng.random(sampler.n_events) < 0.5).astype(np.int8)
        if SPURIOUS not in sampler.models:
            labels[:] = TRUE
        try:
            init = sampler.pstep(labels, rng)
            break
        except (FitError, np.linalg.LinAlgError) as exc:
            # an unlucky split can leave a statistic without support in one half
            logger.warning("initial split %d failed: %s", attempt, exc)
            if attempt == INIT_ATTEMPTS:
                raise ChainError(f"no usable initial split in {INIT_ATTEMPTS} attempts; last error: {exc}") from exc
    theta = {c: f.theta_hat for c, f in init.fits.items()}
    trace = [_trace_row(0, init)]
    draws = []
    failures = 0
    total = config.burn_in + config.draws
    previous = init
    for d in range(1, total + 1):
        labels = sampler.istep(theta, rng)
        try:
            draw = sampler.pstep(labels, rng, previous)
        except (FitError, np.linalg.LinAlgError) as exc:
            failures += 1
            logger.warning("P-step %d failed: %s", d, exc)
            if failures > total / 2:
                raise ChainError(f"{failures} of {d} P-steps failed; last error: {exc}") from exc
            draw = PosteriorDraw(labels, previous.fits, previous.samples, failed=True)
        theta = draw.samples
        previous = draw
        trace.append(_trace_row(d, draw))
        if d > config.burn_in:
            draws.append(draw)
    return ChainResult(draws, trace, failures, config.burn_in)


def _trace_row(d: int, draw: PosteriorDraw) -> dict:
    row = {"iteration": d, "spurious_count": draw.n_spurious, "failed": draw.failed}
    row["theta_hat"] = np.concatenate([draw.fits[c].theta_hat for c in sorted(draw.fits)])
    return row


def combine(draws: list[PosteriorDraw], names: list[str] | None = None, burn_in: int = 0) -> FitReport:
    """Rubin's rules over retained draws.

    Mean of the complete-data posterior means; total variance equals the
    mean within-draw covariance plus ``(K + 1) / (K (K - 1))`` times the
    sum of outer products of deviations between draws.
    """
    K = len(draws)
    if K < 2:
        raise ValueError("combining needs at least two draws")
    means = np.array([np.concatenate([d.fits[c].theta_hat for c in sorted(d.fits)]) for d in draws])
    covs = [block_diag(*[d.fits[c].covariance for c in sorted(d.fits)]) for d in draws]
    mean = means.mean(axis=0)
    within = np.mean(covs, axis=0)
    dev = means - mean
    between = (K + 1) / (K * (K - 1)) * dev.T @ dev
    pfe = float(np.mean([100.0 * np.mean(d.labels == SPURIOUS) for d in draws]))
    if names is None:
        names = [f"theta_{k}" for k in range(len(mean))]
    total = within + between
    return FitReport(list(names), mean, (total + total.T) / 2, pfe, K, burn_in, within, between)


def report_from_fit(fit: FitResult, names: list[str] | None = None) -> FitReport:
    """Report of a model without spurious events (a single complete-data fit)."""
    names = names if names is not None else [f"true:{n}" for n in fit.names]
    return FitReport(list(names), fit.theta_hat.copy(), fit.covariance.copy(), 0.0, 1, 0)


def fit_rem(sampler: SpuriousEventSampler) -> FitReport:
    """Ordinary relational event model: every event true, one P-step."""
    fit = sampler.fit_component(TRUE, np.ones(sampler.n_events, dtype=np.int8))
    return report_from_fit(fit, [f"true:{n}" for n in sampler.names[TRUE]])


def fit_remse(sampler: SpuriousEventSampler, config: ChainConfig = ChainConfig()) -> tuple[FitReport, ChainResult]:
    chain = run_chain(sampler, config)
    return combine(chain.draws, sampler.report_names(), config.burn_in), chain


def baseline_curve(report: FitReport, basis, grid: np.ndarray, prefix: str = "true:"):
    """exp(f(t)) on ``grid`` with a pointwise 95% interval from the report covariance."""
    idx = [report.names.index(prefix + "intercept")]
    k = 0
    while f"{prefix}spline_{k + 1}" in report.names:
        idx.append(report.names.index(f"{prefix}spline_{k + 1}"))
        k += 1
    J = np.ones((len(grid), 1))
    if k:
        J = np.hstack([J, basis.evaluate_constrained(grid)])
    f = J @ report.posterior_mean[idx]
    se = np.sqrt(np.einsum("ij,jk,ik->i", J, report.posterior_cov[np.ix_(idx, idx)], J))
    return np.exp(f), np.exp(f - 1.96 * se), np.exp(f + 1.96 * se)
