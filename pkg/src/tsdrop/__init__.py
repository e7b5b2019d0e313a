"""Teacher-student online learning simulator with dropout."""
from tsdrop.config import Backend, ConfigError, SimConfig, parse_config
from tsdrop.harness import RunSummary, TrajectoryRecord, compare, run, verify_generalization_error
from tsdrop.learning import Dropout, DropoutMask, Sgd, dropout_step, sgd_step
from tsdrop.model import make_student, make_teacher
from tsdrop.orderparams import OrderParameters, analytic_generalization_error, measure

__version__ = "0.1.0"

__all__ = [
    "Backend", "ConfigError", "Dropout", "DropoutMask", "OrderParameters", "RunSummary", "Sgd",
    "SimConfig", "TrajectoryRecord", "analytic_generalization_error", "compare", "dropout_step",
    "make_student", "make_teacher", "measure", "parse_config", "run", "sgd_step",
    "verify_generalization_error",
]
