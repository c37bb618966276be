"""Simulation and cost analysis of GKP-based quantum repeater chains."""

from .quadrature import centered_mod, flip_prob, error_likelihood, odd_error_aggregate, Squeezing, FiberParams
from .rescaling import solve_postponed, single_round_c, steady_state_c
from .codes import build_code
from .schedule import build_schedule
from .montecarlo import ChainConfig, estimate, run_chain
from .keyrate import ad_key_rate, plob

__version__ = "0.1.0"
