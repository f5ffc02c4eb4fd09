"""Phase retrieval from coded diffraction patterns with learned sparse patch models."""

from .core import (ComplexField, DimensionError, PatchGrid, PatchSet, UncoveredPixelError,
                   aggregate_patches, extract_patches, rmse_wrapped, wrap)
from .optics import MaskSet, generate_masks, intensities, propagate_adjoint, propagate_forward
from .retrieval import RetrievalResult, SolverConfig, dlpr, dlpr_prior, gsf, x_update
from .sensor import (Gaussian, Noiseless, ObservationSet, Poisson, simulate_gaussian,
                     simulate_noiseless, simulate_poisson)
from .sparse import Dictionary, OnlineDictionaryLearner, bpdn, codl, omp, omp_batch

__version__ = "0.1.0"
