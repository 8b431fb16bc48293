"""Lower-complexity (Strassen-family) matrix multiplication on the CPU."""

from .dense import OpCounters, TileConfig, blocked_gemm, naive_gemm, pad_partition
from .fused import ExecConfig, lcma_fused, precombine_b
from .library import SchemeCatalog, builtin_catalog, list_schemes, load_scheme, save_scheme
from .scheme import LcmaScheme, compose, nnz, standard_scheme, validate_scheme
from .staged import lcma_staged

__version__ = "0.1.0"

__all__ = [
    "ExecConfig",
    "LcmaScheme",
    "OpCounters",
    "SchemeCatalog",
    "TileConfig",
    "blocked_gemm",
    "builtin_catalog",
    "compose",
    "lcma_fused",
    "lcma_staged",
    "list_schemes",
    "load_scheme",
    "naive_gemm",
    "nnz",
    "pad_partition",
    "precombine_b",
    "save_scheme",
    "standard_scheme",
    "validate_scheme",
]
