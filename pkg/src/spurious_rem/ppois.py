"""Pseudo-Poisson regression for one event component.

Between consecutive observed event times the intensity of every dyad is
treated as constant, so the complete-data likelihood of a component is a
Poisson regression with one row per (interval, dyad), response equal to the
number of component events in the interval (0 or 1) and log-exposure offset
``log(t_m - t_{m-1})``.

The penalized log-likelihood is ``l(theta) - gamma/2 * theta' S theta`` where
``S`` is nonzero only on the spline block, and the Gaussian approximation of
the posterior has covariance ``(X' W X + gamma S)^{-1}``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy import linalg
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from .events import EventStream, RiskSet
from .netstats import HistoryState, StatisticSpec, StatMatrix, endogenous_values
from .smooth import PenaltyMatrix, SplineBasis

logger = logging.getLogger(__name__)

GAMMA_GRID = 10.0 ** np.linspace(-4, 6, 21)
DEFAULT_GAMMA = 1.0
MAX_ETA = 700.0
SCORE_TOL = 1e-8
# an unpenalized column whose effect on the log rate exceeds SEPARATION_ETA,
# or is undetermined to within SEPARATION_SE, is taken as separation
SEPARATION_ETA = 30.0
SEPARATION_SE = 50.0


class FitError(RuntimeError):
    """The penalized Poisson fit could not be computed."""


class ConvergenceError(FitError):
    pass


class SeparationError(FitError):
    """An unpenalized coefficient diverges: the data put (almost) no events where its statistic is large."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class RankDeficiencyError(FitError):
    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


@dataclass(frozen=True)
class ModelSpec:
    """Linear predictor of one component: intercept, optional spline, statistics."""

    statistics: tuple[StatisticSpec, ...] = ()
    baseline: bool = True

    def __post_init__(self):
        object.__setattr__(self, "statistics", tuple(StatisticSpec.parse(s) for s in self.statistics))
        names = [s.name for s in self.statistics]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate statistics in model: {names}")

    @property
    def constant_only(self) -> bool:
        return not self.baseline and not self.statistics

    def n_spline(self, basis: SplineBasis | None) -> int:
        if not self.baseline:
            return 0
        if basis is None:
            raise ValueError("model has a spline baseline but no basis was given")
        return basis.num_basis - 1

    def column_names(self, basis: SplineBasis | None = None) -> list[str]:
        spline = [f"spline_{k + 1}" for k in range(self.n_spline(basis))]
        return ["intercept"] + spline + [s.name for s in self.statistics]

    def n_columns(self, basis: SplineBasis | None = None) -> int:
        return 1 + self.n_spline(basis) + len(self.statistics)


def extended_penalty(model: ModelSpec, basis: SplineBasis | None, penalty: PenaltyMatrix | None) -> np.ndarray:
    """Penalty on the full coefficient vector; zero outside the spline block."""
    p = model.n_columns(basis)
    S = np.zeros((p, p))
    k = model.n_spline(basis)
    if k:
        S[1 : 1 + k, 1 : 1 + k] = penalty.constrained(basis)
    return S


class IntervalDesign:
    """Interval geometry of a stream over a risk set, shared by all P-steps."""

    def __init__(self, stream: EventStream, rs: RiskSet, basis: SplineBasis | None = None):
        if len(stream) == 0:
            raise FitError("event stream is empty")
        self.stream = stream
        self.rs = rs
        self.basis = basis
        times = stream.times
        prev = np.concatenate([[0.0], times[:-1]])
        self.exposure = times - prev
        if np.any(self.exposure <= 0):
            m = int(np.flatnonzero(self.exposure <= 0)[0])
            raise FitError(f"zero-length interval before event {m + 1} at t={times[m]}")
        self.midpoints = 0.5 * (prev + times)
        self.ia, self.ib = rs.index_arrays(stream.actors)
        missing = [e.dyad for e in stream.events if e.dyad not in rs]
        if missing:
            raise FitError(f"events on dyads outside the risk set: {missing[:5]}")
        self.event_pos = np.array([rs.position(e.dyad) for e in stream.events], dtype=np.int64)
        self.event_ia, self.event_ib = stream.dyad_indices()
        self.spline_rows = basis.evaluate_constrained(self.midpoints) if basis is not None else None
        self._stats: dict[tuple, StatMatrix] = {}

    @property
    def n_intervals(self) -> int:
        return len(self.exposure)

    @property
    def n_dyads(self) -> int:
        return len(self.ia)

    def stat_matrix(self, specs: Sequence[StatisticSpec]) -> StatMatrix:
        key = tuple(specs)
        if key not in self._stats:
            self._stats[key] = StatMatrix(key, self.stream.actors, self.ia, self.ib)
        return self._stats[key]

    def event_spline(self, model: ModelSpec) -> np.ndarray:
        if model.baseline:
            return self.spline_rows
        return np.zeros((self.n_intervals, 0))


@dataclass
class PoissonDataset:
    """Poisson rows ``y ~ Pois(exposure * exp(X theta))``.

    When ``block_size`` is set the rows are grouped in consecutive blocks of
    that many rows (one block per interval) and the first ``n_shared``
    columns are constant within each block; the matrix products then work
    on the per-block values of those columns.
    """

    X: np.ndarray
    y: np.ndarray
    exposure: np.ndarray
    interval: np.ndarray
    dyad: np.ndarray
    names: list[str]
    block_size: int | None = None
    n_shared: int = 0

    def __post_init__(self):
        self.offset = np.log(self.exposure)
        self.log_y_factorial = float(gammaln(self.y + 1).sum())
        if self.block_size and self.n_shared:
            R, n = self.block_size, self.n_shared
            self._shared = self.X[::R, :n].copy()
            self._rest = np.ascontiguousarray(self.X[:, n:])
        else:
            self.block_size = None

    def __len__(self):
        return len(self.y)

    @property
    def n_events(self) -> int:
        return int(self.y.sum())

    def scaled_exposure(self, factor: float) -> "PoissonDataset":
        return PoissonDataset(
            self.X, self.y, self.exposure * factor, self.interval, self.dyad, self.names, self.block_size, self.n_shared
        )

    def dense(self) -> "PoissonDataset":
        return PoissonDataset(self.X, self.y, self.exposure, self.interval, self.dyad, self.names)

    def matvec(self, theta) -> np.ndarray:
        if self.block_size is None:
            return self.X @ theta
        n = self.n_shared
        return np.repeat(self._shared @ theta[:n], self.block_size) + self._rest @ theta[n:]

    def rmatvec(self, r) -> np.ndarray:
        if self.block_size is None:
            return self.X.T @ r
        per_block = r.reshape(-1, self.block_size).sum(axis=1)
        return np.concatenate([self._shared.T @ per_block, self._rest.T @ r])

    def gram(self, w) -> np.ndarray:
        """``X' diag(w) X``."""
        if self.block_size is None:
            Xw = self.X * np.sqrt(w)[:, None]
            return Xw.T @ Xw
        n, R = self.n_shared, self.block_size
        q = self._rest.shape[1]
        wb = w.reshape(-1, R)
        top = (self._shared * wb.sum(axis=1)[:, None]).T @ self._shared
        per_block = np.matmul(wb[:, None, :], self._rest.reshape(len(wb), R, q))[:, 0, :]
        cross = self._shared.T @ per_block
        bottom = self._rest.T @ (self._rest * w[:, None])
        return np.block([[top, cross], [cross.T, bottom]])


def iter_blocks(
    design: IntervalDesign, labels: np.ndarray, component: int, model: ModelSpec
) -> Iterator[tuple[int, np.ndarray, np.ndarray, float]]:
    """Yield ``(m, X_m, y_m, delta_m)`` per interval; history advances after each yield."""
    labels = _check_labels(design, labels)
    stats = design.stat_matrix(model.statistics)
    spline = design.event_spline(model)
    R = design.n_dyads
    state = HistoryState(design.stream.actors)
    ones = np.ones((R, 1))
    for m in range(design.n_intervals):
        X = np.hstack([ones, np.broadcast_to(spline[m], (R, spline.shape[1])), stats(state)])
        y = np.zeros(R)
        if labels[m] == component:
            y[design.event_pos[m]] = 1.0
        yield m, X, y, design.exposure[m]
        if labels[m] == component:
            state.apply_index(design.event_ia[m], design.event_ib[m])


def _check_labels(design: IntervalDesign, labels) -> np.ndarray:
    labels = np.asarray(labels)
    if len(labels) != design.n_intervals:
        raise ValueError(f"labels have length {len(labels)}, stream has {design.n_intervals} events")
    return labels


def build_dataset(
    stream: EventStream | IntervalDesign,
    labels,
    component: int,
    model: ModelSpec,
    basis: SplineBasis | None = None,
    rs: RiskSet | None = None,
    lazy: bool = False,
) -> PoissonDataset:
    """Materialize the (interval x dyad) Poisson rows of one component.

    ``component`` is 1 for true events and 0 for spurious events. Statistics
    use the component's own history strictly before each event time; the
    spline is evaluated at the interval midpoint. ``lazy=True`` assembles the
    matrix from :func:`iter_blocks` instead of filling columns in place.
    """
    design = stream if isinstance(stream, IntervalDesign) else IntervalDesign(stream, rs, basis)
    labels = _check_labels(design, labels)
    M, R = design.n_intervals, design.n_dyads
    p = model.n_columns(design.basis)
    X = np.empty((M * R, p))
    y = np.zeros(M * R)
    if lazy:
        for m, Xm, ym, _ in iter_blocks(design, labels, component, model):
            X[m * R : (m + 1) * R] = Xm
            y[m * R : (m + 1) * R] = ym
    else:
        hit = np.flatnonzero(labels == component)
        y[hit * R + design.event_pos[hit]] = 1.0
        X[:, 0] = 1.0
        k = model.n_spline(design.basis)
        if k:
            X[:, 1 : 1 + k] = np.repeat(design.spline_rows, R, axis=0)
        stats = design.stat_matrix(model.statistics)
        block = np.empty((M, R, len(stats.specs)))
        block[:] = stats.static
        if stats.dynamic:
            state = HistoryState(design.stream.actors)
            for m in range(M):
                for q in stats.dynamic:
                    block[m, :, q] = endogenous_values(stats.specs[q], state, stats.ia, stats.ib)
                if labels[m] == component:
                    state.apply_index(design.event_ia[m], design.event_ib[m])
        X[:, 1 + k :] = block.reshape(M * R, -1)
    exposure = np.repeat(design.exposure, R)
    interval = np.repeat(np.arange(M), R)
    dyad = np.tile(np.arange(R), M)
    names = model.column_names(design.basis)
    return PoissonDataset(X, y, exposure, interval, dyad, names, R, 1 + model.n_spline(design.basis))


@dataclass
class FitResult:
    theta_hat: np.ndarray
    covariance: np.ndarray
    gamma: float
    penalized_loglik: float
    iterations: int
    names: list[str] = field(default_factory=list)
    converged: bool = True
    score_norm: float = 0.0

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))


def _evaluate(data: PoissonDataset, penalty, gamma, theta):
    eta = np.minimum(data.matvec(theta) + data.offset, MAX_ETA)
    mu = np.exp(eta)
    obj = float(data.y @ eta - mu.sum()) - data.log_y_factorial
    if gamma:
        obj -= 0.5 * gamma * float(theta @ penalty @ theta)
    return mu, obj


def poisson_loglik(data: PoissonDataset, theta) -> float:
    return _evaluate(data, None, 0.0, np.asarray(theta, dtype=float))[1]


def penalized_loglik(data: PoissonDataset, penalty: np.ndarray, gamma: float, theta) -> float:
    return _evaluate(data, penalty, gamma, np.asarray(theta, dtype=float))[1]


def penalized_score(data: PoissonDataset, penalty: np.ndarray, gamma: float, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    mu, _ = _evaluate(data, penalty, 0.0, theta)
    return data.rmatvec(data.y - mu) - gamma * penalty @ theta


def fisher_information(data: PoissonDataset, theta) -> np.ndarray:
    """X' W X with W the fitted means (no penalty)."""
    mu, _ = _evaluate(data, None, 0.0, np.asarray(theta, dtype=float))
    return data.gram(mu)


def _degenerate_columns(data: PoissonDataset) -> list[str]:
    return [name for k, name in enumerate(data.names) if k > 0 and np.ptp(data.X[:, k]) == 0]


def _cholesky(A: np.ndarray, data: PoissonDataset):
    try:
        return linalg.cho_factor(A)
    except linalg.LinAlgError:
        cols = _degenerate_columns(data)
        raise RankDeficiencyError(
            "penalized information matrix is not positive definite"
            + (f"; constant columns: {cols}" if cols else ""),
            cols,
        ) from None


def _newton(data, penalty, gamma, theta, max_iter, tol):
    """Penalized Newton (= IRLS for the log link) with step halving.

    Converged once the penalized deviance changes by less than ``tol`` and
    the penalized score is below ``SCORE_TOL`` (or the step is negligible).
    """
    mu, obj = _evaluate(data, penalty, gamma, theta)
    change = np.inf
    tiny_step = False
    for it in range(max_iter + 1):
        score = data.rmatvec(data.y - mu) - gamma * penalty @ theta
        if change < tol and (np.max(np.abs(score)) < SCORE_TOL or tiny_step):
            return theta, mu, obj, it, True
        if it == max_iter:
            break
        H = data.gram(mu) + gamma * penalty
        step = linalg.cho_solve(_cholesky(H, data), score)
        for _ in range(60):
            cand = theta + step
            mu_c, obj_c = _evaluate(data, penalty, gamma, cand)
            if np.isfinite(obj_c) and obj_c >= obj - 1e-12 * abs(obj):
                break
            step = step / 2
        else:
            # no representable ascent left: this is the numerical maximum
            logger.debug("step halving exhausted at max |score| %.3g", np.max(np.abs(score)))
            return theta, mu, obj, it, True
        tiny_step = np.max(np.abs(step)) < 1e-12 * (1 + np.max(np.abs(theta)))
        change = 2 * abs(obj_c - obj)
        theta, mu, obj = cand, mu_c, obj_c
    return theta, mu, obj, max_iter, False


def _check_separation(data: PoissonDataset, penalty, theta, cov) -> None:
    free = [k for k in range(1, len(theta)) if not np.any(penalty[k])]
    if not free:
        return
    scale = np.max(np.abs(data.X[:, free]), axis=0)
    reach = np.abs(theta[free]) * scale
    spread = np.sqrt(np.diag(cov)[free]) * scale
    bad = [data.names[free[i]] for i in np.flatnonzero((reach > SEPARATION_ETA) | (spread > SEPARATION_SE))]
    if bad:
        raise SeparationError(f"coefficients diverge (quasi-separation) for {bad}", bad)


def _start(data: PoissonDataset, start) -> np.ndarray:
    if start is not None:
        return np.array(start, dtype=float)
    theta = np.zeros(data.X.shape[1])
    theta[0] = np.log(max(data.y.sum(), 0.5) / data.exposure.sum())
    return theta


def _finite_start(data: PoissonDataset, theta) -> bool:
    eta = data.matvec(theta) + data.offset
    return bool(np.all(np.isfinite(eta)) and eta.max() < MAX_ETA / 2)


def penalty_rank(penalty: np.ndarray) -> int:
    if not np.any(penalty):
        return 0
    ev = np.linalg.eigvalsh(penalty)
    return int(np.sum(ev > 1e-10 * ev.max()))


def _logdet(A: np.ndarray) -> float:
    sign, val = np.linalg.slogdet(A)
    return val if sign > 0 else -np.inf


def laplace_log_marginal(data: PoissonDataset, penalty: np.ndarray, gamma: float, theta=None, **kw) -> float:
    """Laplace approximation of log p(y | gamma), up to a gamma-free constant, refitting at gamma."""
    fit = fit_penalized_poisson(data, penalty, gamma=gamma, start=theta, **kw)
    H = fisher_information(data, fit.theta_hat) + gamma * penalty
    r = penalty_rank(penalty)
    return fit.penalized_loglik + 0.5 * r * np.log(gamma) - 0.5 * _logdet(H)


def _quadratic_criterion(H, g, l0, theta0, penalty, r):
    """Laplace criterion with the log-likelihood replaced by its expansion at theta0."""

    def crit(log_gamma):
        gamma = 10.0**log_gamma
        try:
            c = linalg.cho_factor(H + gamma * penalty)
        except (linalg.LinAlgError, ValueError):
            return -np.inf
        d = linalg.cho_solve(c, g - gamma * penalty @ theta0)
        beta = theta0 + d
        lq = l0 + g @ d - 0.5 * d @ H @ d
        logdet = 2.0 * np.sum(np.log(np.diag(c[0])))
        return lq - 0.5 * gamma * beta @ penalty @ beta + 0.5 * r * np.log(gamma) - 0.5 * logdet

    return crit


def _maximize_on_grid(crit) -> float:
    logs = np.log10(GAMMA_GRID)
    values = np.array([crit(x) for x in logs])
    finite = np.isfinite(values)
    if not np.any(finite):
        logger.warning("marginal likelihood not finite on the gamma grid; using gamma=%g", GAMMA_GRID[-1])
        return float(GAMMA_GRID[-1])
    best = int(np.argmax(np.where(finite, values, -np.inf)))
    if best in (0, len(logs) - 1):
        logger.info("selected gamma at grid edge %g", GAMMA_GRID[best])
        return float(GAMMA_GRID[best])
    lo, mid, hi = logs[best - 1], logs[best], logs[best + 1]
    res = minimize_scalar(lambda x: -crit(x), bracket=(lo, mid, hi), method="golden", tol=1e-4)
    x = float(res.x) if lo <= res.x <= hi and -res.fun >= values[best] else mid
    return float(10.0**x)


def _select_gamma_quadratic(data, penalty, r, theta, gamma, max_iter, tol):
    """Alternate gamma selection on the local quadratic model with one Newton step.

    Stops when gamma moves by less than 1% and the step is small; the
    returned coefficients are a warm start for the final fit.
    """
    mu, _ = _evaluate(data, penalty, gamma, theta)
    for _ in range(max_iter):
        H = data.gram(mu)
        g = data.rmatvec(data.y - mu)
        l0 = _evaluate(data, penalty, 0.0, theta)[1]
        new = _maximize_on_grid(_quadratic_criterion(H, g, l0, theta, penalty, r))
        A = H + new * penalty
        step = linalg.cho_solve(_cholesky(A, data), g - new * penalty @ theta)
        obj = _evaluate(data, penalty, new, theta)[1]
        for _ in range(60):
            mu_c, obj_c = _evaluate(data, penalty, new, theta + step)
            if np.isfinite(obj_c) and obj_c >= obj - 1e-12 * abs(obj):
                break
            step = step / 2
        else:
            # no ascent along the step; leave the rest to the full Newton fit
            return new, theta
        settled = abs(np.log10(new) - np.log10(gamma)) < 0.01 and np.max(np.abs(step)) < 1e-4
        theta, mu, gamma = theta + step, mu_c, new
        if settled:
            break
    return gamma, theta


def select_gamma(
    data: PoissonDataset,
    penalty: np.ndarray,
    theta=None,
    exact: bool = False,
    max_iter: int = 50,
    tol: float = 1e-8,
    gamma_start: float | None = None,
) -> float:
    """Smoothing parameter maximizing the Laplace-approximate marginal likelihood.

    Grid over ``10**-4 .. 10**6`` (21 points) and a golden-section search
    between the neighbours of the best grid point. With ``exact=True`` every
    candidate is refitted; otherwise the log-likelihood is expanded to second
    order at the current mode and the expansion point is moved to the new
    mode until the selected value settles.
    """
    r = penalty_rank(penalty)
    if r == 0:
        return DEFAULT_GAMMA
    if not exact:
        start = gamma_start if gamma_start and np.isfinite(gamma_start) else DEFAULT_GAMMA
        return _select_gamma_quadratic(data, penalty, r, _start(data, theta), start, max_iter, tol)[0]

    def crit(log_gamma):
        try:
            return laplace_log_marginal(data, penalty, 10.0**log_gamma, theta=theta, max_iter=max_iter, tol=tol)
        except FitError:
            return -np.inf

    return _maximize_on_grid(crit)


def fit_penalized_poisson(
    data: PoissonDataset,
    penalty: np.ndarray | None = None,
    gamma: float | str = "auto",
    max_iter: int = 50,
    tol: float = 1e-8,
    start=None,
    gamma_start: float | None = None,
) -> FitResult:
    """Penalized maximum likelihood for a Poisson log-linear model with offset.

    Parameters
    ----------
    data : PoissonDataset
    penalty : (p, p) array
        Extended penalty matrix; ``None`` means unpenalized.
    gamma : float or "auto"
        Smoothing parameter, or ``"auto"`` to select it by the Laplace
        approximate marginal likelihood.
    start : array, optional
        Warm start for the coefficients.
    gamma_start : float, optional
        Warm start for the smoothing parameter search.
    """
    p = data.X.shape[1]
    if len(data) == 0:
        raise FitError("empty dataset")
    if data.y.sum() <= 0:
        raise FitError("no events in the component being fitted")
    penalty = np.zeros((p, p)) if penalty is None else np.asarray(penalty, dtype=float)
    theta = _start(data, start)
    if start is not None and not _finite_start(data, theta):
        logger.debug("warm start overflows; restarting from the constant-rate fit")
        theta = _start(data, None)
    if gamma == "auto":
        r = penalty_rank(penalty)
        if r == 0:
            gamma = DEFAULT_GAMMA
        else:
            g0 = gamma_start if gamma_start and np.isfinite(gamma_start) else DEFAULT_GAMMA
            gamma, theta = _select_gamma_quadratic(data, penalty, r, theta, g0, max_iter, tol)
    gamma = float(gamma)
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    theta, mu, obj, iters, converged = _newton(data, penalty, gamma, theta, max_iter, tol)
    if not converged:
        raise ConvergenceError(f"penalized IRLS did not converge in {max_iter} iterations")
    H = data.gram(mu) + gamma * penalty
    cov = linalg.cho_solve(_cholesky(H, data), np.eye(p))
    cov = 0.5 * (cov + cov.T)
    _check_separation(data, penalty, theta, cov)
    score = data.rmatvec(data.y - mu) - gamma * penalty @ theta
    return FitResult(theta, cov, gamma, obj, iters, list(data.names), converged, float(np.max(np.abs(score))))


def fit_constant_rate(n_events: float, exposure: float, correction: float = 0.0, names=("intercept",)) -> FitResult:
    """Closed-form intercept-only fit: log((n + c) / exposure), variance 1 / (n + c)."""
    count = n_events + correction
    if count <= 0:
        raise FitError("no events in the component being fitted")
    theta = np.array([np.log(count / exposure)])
    obj = count * theta[0] - count
    return FitResult(theta, np.array([[1.0 / count]]), DEFAULT_GAMMA, float(obj), 0, list(names))
