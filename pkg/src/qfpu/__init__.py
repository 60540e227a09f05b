"""Path-integral sampling and ring-polymer dynamics for the quantum FPU chain."""

from .model import ChainSpec, ChainSpecError, ModeBasis, chain_forces, chain_potential, from_modes, to_modes
from .pimd import NumericalAbort, SampleSet, SamplerConfig, read_archive, run, write_archive
from .thermostat import NHCParams
from .rpmd import (
    CorrelationSeries, Observable, kubo_autocorrelation, mode_observable, position_observable,
    t6_expansion, validity_horizon, zeta_coefficients,
)
from .estimators import DistributionEstimate, estimate_distribution, marginalize, moment

__version__ = "0.1.0"
