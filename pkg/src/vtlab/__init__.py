"""Virtual-time laboratory for parallel SGD with fixed worker computation times."""

from .core import (BernoulliEstimator, ExactEstimator, GaussianEstimator, InvalidConfig,
                   InvalidDimension, InvalidParameter, MinibatchEstimator, ProblemSpec,
                   WorkerPool, prog, quadratic_problem)
from .events import collect_batch, des_run
from .optimizers import AcceleratedRennala, AsyncSGD, Malenia, MMinibatch, Rennala
from .protocol import StopRule, Trace, run_time_protocol

__version__ = "0.1.0"

__all__ = [
    "AcceleratedRennala", "AsyncSGD", "BernoulliEstimator", "ExactEstimator",
    "GaussianEstimator", "InvalidConfig", "InvalidDimension", "InvalidParameter", "Malenia",
    "MMinibatch", "MinibatchEstimator", "ProblemSpec", "Rennala", "StopRule", "Trace",
    "WorkerPool", "collect_batch", "des_run", "prog", "quadratic_problem", "run_time_protocol",
]
