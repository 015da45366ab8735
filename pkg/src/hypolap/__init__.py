"""Hypoelliptic diffusion maps on the unit tangent bundle of the sphere."""
import os as _os

# Cap BLAS pools before numpy starts them; HYPOLAP_THREADS is the only
# environment variable the package consults.
_threads = _os.environ.get("HYPOLAP_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from . import afap, bundle, embedding, io, laplacian, oracle, plots, spectral, sphere, tangent_pca
from .bundle import BlockSparseMatrix, BundleSampleSet, KernelConfig, NeighborGraph
from .cli import RunConfig
from .embedding import BaseEmbeddingCoordinates, EmbeddingCoordinates
from .spectral import ClusterReport, SpectralResult
from .tangent_pca import PcaConfig, TangentFrame, TransportEstimate

__version__ = "0.1.0"

__all__ = [
    "afap",
    "bundle",
    "embedding",
    "io",
    "laplacian",
    "oracle",
    "plots",
    "spectral",
    "sphere",
    "tangent_pca",
    "BlockSparseMatrix",
    "BundleSampleSet",
    "KernelConfig",
    "NeighborGraph",
    "RunConfig",
    "BaseEmbeddingCoordinates",
    "EmbeddingCoordinates",
    "ClusterReport",
    "SpectralResult",
    "PcaConfig",
    "TangentFrame",
    "TransportEstimate",
    "__version__",
]
