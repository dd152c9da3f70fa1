"""Parameter estimation for periodic outputs of nonlinear ODE models.

A model in reduced canonical form is fitted to one period of a measured
output by replacing forward simulation with an integral representation
built from the fundamental matrix of an adaptive observer's error dynamics.
"""

from .canonical import AdmissibleBox, CanonicalSystem, QSubsystem, q0_periodic, q_trajectory
from .errors import (DataError, DomainError, GridError, NumericError, ParseError, PeriodrepError,
                     RepresentationUnavailable)
from .observer import (FundamentalMatrix, ObserverGains, compute_fundamental_matrix, compute_R,
                       pe_check, predict, predict_yhat, recover_x0_theta)
from .optim import BFGSConfig, FitResult, NelderMeadConfig, Objective, bfgs, nelder_mead
from .quadrature import RIGHT_RECTANGLE, TRAPEZOID, cumsum_scan, cumsum_sequential
from .signal import SampledSignal, UniformGrid, eval_periodic, load_csv, save_csv

__version__ = "0.1.0"
