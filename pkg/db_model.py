"""
db_model.py: Database Schema of the Run Registry

This file uses SQLAlchemy's ORM to define the registry every command writes to:
which runs were launched with which resolved configuration, how training went
epoch by epoch, and what each evaluation scored.

Key Classes:
- Base: Acts as the foundation for all database models.
- TimestampMixin: Provides 'created_at' and 'updated_at' columns for automatic timestamp tracking.
- Run: One command invocation (train, eval, compare cell, ...) with its resolved config.
- EpochMetric: One row of a run's per-epoch metrics CSV.
- Evaluation: File-level scores of one evaluation (voting method, macro and per-class f-score).

Key Functions:
- make_engine(db_path): Engine for a SQLite file, tables created on first use.
- make_session(db_path): Session bound to such an engine.

Dependencies:
- sqlalchemy

Usage:
    session = make_session("runs/registry.db")
    repository = Repository(session)
"""

# -----------------------------------------------------
# Import Necessary Modules
# -----------------------------------------------------
from pathlib import Path

from sqlalchemy import create_engine, Column, Integer, String, DateTime, \
    ForeignKey, JSON, Float, func
from sqlalchemy.orm import relationship, sessionmaker, DeclarativeBase

REGISTRY_FILE = "registry.db"


# --- Base Class for Common Behavior ---
class Base(DeclarativeBase):
    """
    Acts as the foundation for all database models. SQLAlchemy will use this
    to generate appropriate table structures.
    """


class TimestampMixin:
    """
    Provides 'created_at' and 'updated_at' columns. These will automatically
    be populated with the current time when a record is created or updated.
    """
    created_at = Column(DateTime, nullable=False, server_default=func.now())
    updated_at = Column(DateTime, nullable=False, server_default=func.now(), onupdate=func.now())


# --- Core Database Models ---
class Run(Base, TimestampMixin):
    """
    One command invocation, the central record the other tables hang off.

    Attributes:
        run_id (int): Primary key.
        command (str): train, eval, compare, ...
        arch (str): dnn, cnn or the name of a custom spec.
        feature_mode (str): time, freq, freq-mag or freq-phase.
        seed (int): Run seed.
        config (JSON): The resolved run configuration.
        output_dir (str): Directory holding the run's files.
        status (str): running, finished or failed.
        message (str): Failure reason for failed runs.
    """
    __tablename__ = 'run'

    run_id = Column(Integer, primary_key=True, autoincrement=True, nullable=False)
    command = Column(String(20), nullable=False)
    arch = Column(String(45), default=None)
    feature_mode = Column(String(20), default=None)
    seed = Column(Integer, default=0)
    config = Column(JSON, default=None)
    output_dir = Column(String, default='')
    status = Column(String(20), nullable=False, default='running')
    message = Column(String, default='')

    epoch_metrics = relationship('EpochMetric', back_populates='run', order_by='EpochMetric.epoch')
    evaluations = relationship('Evaluation', back_populates='run')


class EpochMetric(Base, TimestampMixin):
    """
    Per-epoch training metrics of a run (mirrors the metrics CSV).
    """
    __tablename__ = 'epoch_metric'

    epoch_metric_id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, ForeignKey('run.run_id'), nullable=False)
    epoch = Column(Integer, nullable=False)
    lr = Column(Float, nullable=False)
    train_loss = Column(Float, default=None)
    train_frame_fscore = Column(Float, default=None)
    val_frame_fscore = Column(Float, default=None)

    run = relationship('Run', back_populates='epoch_metrics')


class Evaluation(Base, TimestampMixin):
    """
    File-level result of one evaluation.
    """
    __tablename__ = 'evaluation'

    evaluation_id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, ForeignKey('run.run_id'), nullable=False)
    voting = Column(String(20), nullable=False)
    macro_fscore = Column(Float, nullable=False)
    class_fscores = Column(JSON, default=None)
    num_files = Column(Integer, default=0)

    run = relationship('Run', back_populates='evaluations')


def make_engine(db_path):
    """Engine for the SQLite registry at `db_path`; missing tables are created."""
    if str(db_path) != ":memory:":
        Path(db_path).parent.mkdir(parents=True, exist_ok=True)
    engine = create_engine(f"sqlite:///{db_path}")
    Base.metadata.create_all(engine)
    return engine


def make_session(db_path):
    return sessionmaker(bind=make_engine(db_path))()
