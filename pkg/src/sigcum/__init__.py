"""Truncated tensor algebra, path signatures, Magnus/BCH expansions and signature cumulants."""

from .tensor_core import (
    AlgebraShape,
    MemoryGuardError,
    SymTensor,
    TruncatedTensor,
    concat_mul,
    dilate,
    exp_trunc,
    log_trunc,
    project_level,
    sym_project,
    tensor_norm,
    truncate,
)
from .lie_ops import OuterTensor, bch, bch_integral, lie_bracket, op_G, op_H, op_IdG, op_Q
from .signature import CadlagPath, Jump, Linear, PathEvent, log_signature, sig_path
from .magnus import hausdorff_solve, jump_magnus, magnus_expansion_terms
from .cumulants import (
    FiniteTreeModel,
    GaussianMartingaleModel,
    gaussian_cumulant,
    mc_expected_signature,
    recursion_G,
    recursion_H,
    tree_expected_signature,
    tree_signature_cumulant,
)

__all__ = [name for name in dir() if not name.startswith("_")]
