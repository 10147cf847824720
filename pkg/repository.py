"""
repository.py: Data Access Layer for the Run Registry

This file implements the Repository pattern, providing a centralized interface for
the run registry. Commands record their runs, per-epoch metrics and evaluations
through it and never touch SQLAlchemy sessions directly.

Key Class:
- Repository:
  - create_run(command, arch, feature_mode, seed, config, output_dir): Creates a new Run entry.
  - record_epoch(run_id, row): Adds an EpochMetric record from a metrics row.
  - record_evaluation(run_id, report): Adds an Evaluation record from an EvaluationReport.
  - finish_run(run_id, status, message): Marks a run finished or failed.
  - get_run(run_id), get_runs(command): Retrieves runs.
  - get_epoch_metrics(run_id): Retrieves the epoch rows of a run, ordered by epoch.
  - get_evaluations(run_id): Retrieves the evaluations of a run.
  - runs_frame(): The registry as a pandas DataFrame for printing.
  - close_session(): Closes the database session.

Dependencies:
- logging
- math
- pandas
- sqlalchemy
- db_model

Usage:
    repository = Repository(make_session(output_root / REGISTRY_FILE))
    run = repository.create_run("train", "dnn", "freq", 0, config, run_dir)
"""
import logging
import math

import pandas as pd
from sqlalchemy import select
from sqlalchemy.exc import SQLAlchemyError

from db_model import Run, EpochMetric, Evaluation

RUN_COLUMNS = ["run_id", "created_at", "command", "arch", "feature_mode", "seed", "status",
               "macro_fscore", "output_dir"]


def _nullable(value):
    # NaN marks "not measured" in the metrics CSV; the database stores NULL
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    return float(value)


class Repository:
    # Acts as the primary interaction point with the run registry.

    def __init__(self, session):
        """
        Initializes the Repository with a SQLAlchemy session object. This session
        manages the connection and transactions with the database.

        Args:
            session (Session): A SQLAlchemy session object.
        """
        self.session = session

    def _commit(self, action):
        try:
            self.session.commit()
        except SQLAlchemyError as e:
            self.session.rollback()
            logging.error("Error occurred while %s: %s", action, str(e))
            raise

    def create_run(self, command, arch=None, feature_mode=None, seed=0, config=None, output_dir=""):
        '''
        Create a run entry in state 'running'.
        '''
        run = Run(command=command, arch=arch, feature_mode=feature_mode, seed=seed,
                  config=config, output_dir=str(output_dir), status='running')
        self.session.add(run)
        self._commit("creating a run")
        return run

    def record_epoch(self, run_id, row):
        '''
        Insert one epoch of training metrics.
        '''
        metric = EpochMetric(run_id=run_id, epoch=int(row["epoch"]), lr=float(row["lr"]),
                             train_loss=_nullable(row["train_loss"]),
                             train_frame_fscore=_nullable(row["train_frame_fscore"]),
                             val_frame_fscore=_nullable(row["val_frame_fscore"]))
        self.session.add(metric)
        self._commit("recording an epoch")
        return metric

    def record_evaluation(self, run_id, report):
        '''
        Insert the scores of an EvaluationReport.
        '''
        evaluation = Evaluation(run_id=run_id, voting=report.voting.value,
                                macro_fscore=float(report.macro_fscore),
                                class_fscores={name: float(f) for name, f in
                                               zip(report.class_names, report.fscore)},
                                num_files=int(report.num_files))
        self.session.add(evaluation)
        self._commit("recording an evaluation")
        return evaluation

    def finish_run(self, run_id, status='finished', message=''):
        '''
        Set the final status of a run.
        '''
        run = self.get_run(run_id)
        if run is None:
            logging.error("Run with ID %s not found in finish_run", run_id)
            return None
        run.status = status
        run.message = message
        self._commit("finishing a run")
        return run

    def get_run(self, run_id):
        try:
            return self.session.get(Run, run_id)
        except SQLAlchemyError as e:
            logging.error("Error occurred while retrieving run %s: %s", run_id, str(e))
            self.session.rollback()
            raise

    def get_runs(self, command=None):
        '''
        Get all runs, oldest first, optionally of one command.
        '''
        try:
            stmt = select(Run).order_by(Run.run_id)
            if command is not None:
                stmt = stmt.filter_by(command=command)
            return self.session.scalars(stmt).all()
        except SQLAlchemyError as e:
            logging.error("Error occurred while retrieving runs: %s", str(e))
            self.session.rollback()
            raise

    def get_epoch_metrics(self, run_id):
        stmt = select(EpochMetric).filter_by(run_id=run_id).order_by(EpochMetric.epoch)
        return self.session.scalars(stmt).all()

    def get_evaluations(self, run_id):
        stmt = select(Evaluation).filter_by(run_id=run_id).order_by(Evaluation.evaluation_id)
        return self.session.scalars(stmt).all()

    def runs_frame(self, command=None):
        '''
        The registry as a table; macro_fscore is the latest evaluation of each run.
        '''
        rows = []
        for run in self.get_runs(command):
            evaluations = self.get_evaluations(run.run_id)
            rows.append({
                "run_id": run.run_id,
                "created_at": run.created_at,
                "command": run.command,
                "arch": run.arch,
                "feature_mode": run.feature_mode,
                "seed": run.seed,
                "status": run.status,
                "macro_fscore": evaluations[-1].macro_fscore if evaluations else None,
                "output_dir": run.output_dir,
            })
        return pd.DataFrame(rows, columns=RUN_COLUMNS)

    def close_session(self):
        '''
        close the session
        '''
        self.session.close()
