"""Simulation and statistical verification of lognormal star-scale invariant
random measures built from seed covariance kernels."""
from .catalog import CATALOG, make_kernel
from .ensemble import DiskEnsemble, Ensemble, read_measure_csv, write_ensemble, write_measure_csv
from .kernels import (Degenerate, DivergentTail, EpsilonKernel, LogKernel, SeedKernel,
                      asymptote_check, epsilon_kernel, goodness_check, integrate_log,
                      moment_order_bound, series_K, structure_exponent, telescope_check)
from .sampler import (CirculantSampler, GridSpec, MeasureSample, NotPSD, ScaleLadder, YLaw,
                      star_compose, zoom_rescale)
from .spectral import SpectralMeasure, covariance_crosscheck, discretize_plane, synth_layer_field

__version__ = "0.1.0"
