"""ARMA estimation from time series with missing samples."""

from .em import SsmParams, em_run, naive_estimate
from .eqm import EqmConfig, complete_data_mle, eqm_run, equalisation_estimate
from .model import ArmaParams, ObservationRecord, make_problem, random_stable_arma, simulate_arma

__all__ = ["ArmaParams", "EqmConfig", "ObservationRecord", "SsmParams", "complete_data_mle",
           "em_run", "eqm_run", "equalisation_estimate", "make_problem", "naive_estimate",
           "random_stable_arma", "simulate_arma"]
__version__ = "0.1.0"
