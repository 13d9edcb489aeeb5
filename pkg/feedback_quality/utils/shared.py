from typing import Optional

from sqlalchemy.orm import Session

from feedback_quality.logger import logger
from feedback_quality.models import ExperimentRun, FitRun
from feedback_quality.utils.hashing import dataset_hash


def record_fit(fit, db: Session, draws_path: Optional[str] = None) -> FitRun:
    """
    Store a finished fit's provenance and summaries in the database.
    """
    return FitRun.record(
        db,
        variant=fit.variant,
        dataset_hash=dataset_hash(fit.dataset),
        config_hash=fit.config_hash,
        seed=fit.config.seed,
        duration=fit.seconds,
        chains=fit.draws.n_chains,
        draws=fit.draws.n_draws,
        convergence=fit.report.summary(),
        aggregate=fit.summary.aggregate.model_dump(mode="json"),
        draws_path=draws_path,
    )


def fit_runs_for(db: Session, dataset=None, variant: Optional[str] = None) -> list[FitRun]:
    """
    Fetch recorded fits, newest first, optionally restricted to one dataset and/or variant.
    """
    query = db.query(FitRun)
    if dataset is not None:
        query = query.filter(FitRun.dataset_hash == dataset_hash(dataset))
    if variant is not None:
        query = query.filter(FitRun.variant == variant)
    return query.order_by(FitRun.created_at.desc()).all()


def fit_run_by_id(run_id: str, db: Session) -> Optional[FitRun]:
    return db.query(FitRun).filter(FitRun.id == run_id).first()


def start_experiment(spec, db: Session) -> ExperimentRun:
    run = ExperimentRun(mode=spec.mode.value, config_hash=spec.hash, seed=spec.seed)
    db.add(run)
    db.commit()
    db.refresh(run)
    run.start(db)
    return run


def run_recorded_experiment(spec, db: Session):
    """
    Run an experiment while tracking its lifecycle in an ExperimentRun row.
    """
    from feedback_quality.harness.experiments import run_experiment

    run = start_experiment(spec, db)
    try:
        report = run_experiment(spec)
    except Exception as e:
        run.fail(f"{type(e).__name__}: {e}", db)
        raise
    run.complete(report.payload(include_runtime=False), db)
    logger.info(f"Experiment {run.id} stored with config {run.config_hash}")
    return report, run
