"""Sublinear kernel-matrix linear algebra driven by kernel density queries."""

from .kernels import (
    CapacityError,
    KernelFamily,
    KernelSpec,
    PointSet,
    exact_matvec,
    exact_sum,
    exact_top_eig,
    kernel_block,
    kernel_eval,
    kernel_matrix,
)
from .kde import Backend, ExactKde, ExclusionKde, KdeParams, SamplingKde, build, build_exclusion
from .linalg import MvpResult, kernel_matmul, nonneg_mvp, quadform

__version__ = "0.1.0"
