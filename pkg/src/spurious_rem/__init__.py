"""Relational event models with true and spurious events.

Observed undirected events are treated as the superposition of a true and a
spurious counting process. A data-augmentation sampler alternates between
imputing which events are spurious and drawing coefficients of both
intensities from penalized Poisson fits.
"""

from .augment import (
    ChainConfig,
    ChainError,
    FitReport,
    PosteriorDraw,
    SplineConfig,
    SpuriousEventSampler,
    baseline_curve,
    combine,
    fit_rem,
    fit_remse,
    istep,
    pstep,
    run_chain,
)
from .events import (
    ActorTable,
    Event,
    EventStream,
    IngestionError,
    RiskSet,
    build_stream,
    ingest_covariates,
    ingest_dyadic,
    ingest_events,
    risk_set_size,
    write_covariates,
    write_events,
)
from .netstats import HistoryState, StatisticSpec, apply_event, literal_stat, stat_row, stat_value
from .ppois import (
    FitError,
    FitResult,
    ModelSpec,
    PoissonDataset,
    build_dataset,
    fit_constant_rate,
    fit_penalized_poisson,
    select_gamma,
)
from .simulate import GeneratorSpec, dg_spec, generate, interevent_check, realized_pfe
from .smooth import PenaltyMatrix, SplineBasis, build_basis, build_penalty, eval_basis
from .study import StudyResult, rmse, run_study

__version__ = "0.1.0"
