"""Monte Carlo study: simulate, fit REMSE and REM, summarize bias and coverage.

Each replication gets its own child of ``SeedSequence(seed)``, split once
more into a generation stream and a chain seed, so a replication's result
does not depend on how many workers run or in which order.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import ChainConfig, ChainError, SpuriousEventSampler, fit_rem, fit_remse
from .ppois import FitError, ModelSpec
from .simulate import DG_TRUE_COEF, GenerationError, dg_spec, generate, realized_pfe

logger = logging.getLogger(__name__)

SCALES = {"desk": (20, 300), "paper": (40, 500)}
MODELS = ("REMSE", "REM")
Z95 = 1.96


def rmse(estimates, truth) -> float:
    """sqrt(mean_s ||est_s - truth||^2); scalars are one-dimensional vectors."""
    est = np.asarray(estimates, dtype=float)
    truth = np.atleast_1d(np.asarray(truth, dtype=float))
    if est.size == 0:
        raise ValueError("need at least one estimate")
    if est.ndim == 1:
        est = est[:, None] if truth.size == 1 else est[None, :]
    if est.shape[1] != truth.size:
        raise ValueError(f"estimate length {est.shape[1]} does not match truth length {truth.size}")
    dev = est - truth
    return float(np.sqrt(np.mean(np.sum(dev * dev, axis=1))))


@dataclass
class Replication:
    index: int
    realized_pfe: float
    estimates: dict[str, np.ndarray] = field(default_factory=dict)
    std_errors: dict[str, np.ndarray] = field(default_factory=dict)
    pfe: dict[str, float] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)


@dataclass
class StudyResult:
    """Per-coefficient AVE, RMSE and CP for each model plus PFE averages.

    ``ave``, ``rmse`` and ``cp`` map a model name to arrays aligned with
    ``names``; ``vector_rmse`` is the RMSE of the whole coefficient vector.
    Replications where a model failed are counted in ``failures`` and left
    out of that model's summaries only.
    """

    dg: int
    S: int
    scale: str
    seed: int
    names: list[str]
    truth: np.ndarray
    ave: dict[str, np.ndarray]
    rmse: dict[str, np.ndarray]
    vector_rmse: dict[str, float]
    cp: dict[str, np.ndarray]
    realized_pfe: float
    estimated_pfe: dict[str, float]
    failures: dict[str, int]
    replications: list[Replication] = field(default_factory=list, repr=False)

    def rows(self) -> list[dict]:
        out = []
        for k, name in enumerate(self.names):
            row = {"coefficient": name, "truth": float(self.truth[k])}
            for m in MODELS:
                row[f"{m}_AVE"] = float(self.ave[m][k])
                row[f"{m}_RMSE"] = float(self.rmse[m][k])
                row[f"{m}_CP"] = float(self.cp[m][k])
            out.append(row)
        return out

    def write_csv(self, path) -> None:
        rows = self.rows()
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            for r in rows:
                w.writerow({k: v if isinstance(v, str) else f"{v:.6g}" for k, v in r.items()})
            for label, vals in (
                ("vector_RMSE", {f"{m}_RMSE": f"{self.vector_rmse[m]:.6g}" for m in MODELS}),
                ("PFE", {f"{m}_AVE": f"{self.estimated_pfe[m]:.6g}" for m in MODELS}),
                ("realized_PFE", {"truth": f"{self.realized_pfe:.6g}"}),
                ("failures", {f"{m}_AVE": str(self.failures[m]) for m in MODELS}),
            ):
                w.writerow({"coefficient": label, **vals})

    def to_markdown(self) -> str:
        head = f"DG {self.dg} ({self.scale} scale, S={self.S}, seed={self.seed}; realized PFE {self.realized_pfe:.3f} %)"
        lines = [
            head,
            "",
            "| Coefficient | Truth | REMSE AVE | REMSE RMSE | REMSE CP | REM AVE | REM RMSE | REM CP |",
            "|---|---|---|---|---|---|---|---|",
        ]
        for r in self.rows():
            cells = [r["coefficient"], f"{r['truth']:g}"]
            for m in MODELS:
                cells += [f"{r[m + '_AVE']:.3f}", f"{r[m + '_RMSE']:.3f}", f"{r[m + '_CP']:.3f}"]
            lines.append("| " + " | ".join(cells) + " |")
        lines.append(
            f"| vector RMSE | | | {self.vector_rmse['REMSE']:.3f} | | | {self.vector_rmse['REM']:.3f} | |"
        )
        lines.append(f"| PFE (in %) | {self.realized_pfe:.3f} | {self.estimated_pfe['REMSE']:.3f} | | | "
                     f"{self.estimated_pfe['REM']:.3f} | | |")
        lines.append("")
        lines.append(f"Failures: REMSE {self.failures['REMSE']}, REM {self.failures['REM']}.")
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.write_csv(out / "table1.csv")
        (out / "table1.md").write_text(self.to_markdown())


def design_truth(dg: int, continuous: str = "sim_cont"):
    """Names and values of the true-component coefficients compared in the table."""
    spec = dg_spec(dg, continuous=continuous)
    names = ["true:intercept"] + [f"true:{s.name}" for s in spec.true_model.statistics]
    return names, np.array(DG_TRUE_COEF, dtype=float)


def run_replication(dg: int, index: int, seed_seq: np.random.SeedSequence, scale: str = "desk",
                    chain: ChainConfig = ChainConfig(), continuous: str = "sim_cont") -> Replication:
    n_actors, n_true = SCALES[scale]
    gen_seq, chain_seq = seed_seq.spawn(2)
    spec = dg_spec(dg, n_actors, n_true, continuous)
    try:
        stream = generate(spec, np.random.default_rng(gen_seq))
    except GenerationError as exc:
        logger.warning("replication %d: generation failed: %s", index, exc)
        return Replication(index, float("nan"), errors={m: f"GenerationError: {exc}" for m in MODELS})
    rep = Replication(index, realized_pfe(stream))
    sampler = SpuriousEventSampler(
        stream,
        ModelSpec(spec.true_model.statistics, baseline=True),
        ModelSpec((), baseline=False),
        gamma=chain.gamma,
        max_irls_iter=chain.max_irls_iter,
        tol=chain.tol,
    )
    names, _ = design_truth(dg, continuous)
    cfg = ChainConfig(chain.burn_in, chain.draws, int(chain_seq.generate_state(1)[0]), chain.gamma,
                      chain.max_irls_iter, chain.tol)
    for model in MODELS:
        try:
            report = fit_remse(sampler, cfg)[0] if model == "REMSE" else fit_rem(sampler)
        except (ChainError, FitError, np.linalg.LinAlgError) as exc:
            rep.errors[model] = f"{type(exc).__name__}: {exc}"
            logger.warning("replication %d, %s failed: %s", index, model, exc)
            continue
        idx = [report.names.index(n) for n in names]
        rep.estimates[model] = report.posterior_mean[idx]
        rep.std_errors[model] = report.std_errors[idx]
        rep.pfe[model] = report.pfe_estimate
    return rep


def _run_one(args):
    return run_replication(*args)


def summarize(dg: int, S: int, scale: str, seed: int, reps: list[Replication], continuous: str = "sim_cont") -> StudyResult:
    names, truth = design_truth(dg, continuous)
    ave, rm, vrm, cp, pfe, failures = {}, {}, {}, {}, {}, {}
    for m in MODELS:
        ok = [r for r in reps if m in r.estimates]
        failures[m] = len(reps) - len(ok)
        if not ok:
            nan = np.full(len(names), np.nan)
            ave[m], rm[m], cp[m], vrm[m], pfe[m] = nan, nan, nan, float("nan"), float("nan")
            continue
        est = np.array([r.estimates[m] for r in ok])
        se = np.array([r.std_errors[m] for r in ok])
        ave[m] = est.mean(axis=0)
        rm[m] = np.array([rmse(est[:, k], truth[k]) for k in range(len(names))])
        vrm[m] = rmse(est, truth)
        cp[m] = np.mean(np.abs(est - truth) <= Z95 * se, axis=0)
        pfe[m] = float(np.mean([r.pfe[m] for r in ok]))
    realized = float(np.nanmean([r.realized_pfe for r in reps]))
    return StudyResult(dg, S, scale, seed, names, truth, ave, rm, vrm, cp, realized, pfe, failures, reps)


def run_study(dg: int, S: int = 100, scale: str = "desk", seed: int = 0, n_jobs: int = 1,
              chain: ChainConfig = ChainConfig(), continuous: str = "sim_cont") -> StudyResult:
    """Run ``S`` replications of design ``dg`` and summarize both models.

    ``scale="desk"`` uses 20 actors and 300 true events, ``"paper"`` uses
    40 actors and 500. Results are a pure function of the arguments other
    than ``n_jobs``.
    """
    if dg not in (1, 2):
        raise ValueError(f"unknown data-generating process {dg!r}")
    if S < 10:
        raise ValueError("a study needs at least 10 replications")
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {sorted(SCALES)}")
    children = np.random.SeedSequence(seed).spawn(S)
    jobs = [(dg, s, children[s], scale, chain, continuous) for s in range(S)]
    if n_jobs > 1:
        with ProcessPoolExecutor(n_jobs) as pool:
            reps = list(pool.map(_run_one, jobs))
    else:
        reps = []
        for job in jobs:
            reps.append(_run_one(job))
            logger.info("replication %d/%d done", job[1] + 1, S)
    return summarize(dg, S, scale, seed, reps, continuous)


__all__ = ["SCALES", "StudyResult", "Replication", "rmse", "run_study", "run_replication", "summarize",
           "design_truth"]
