"""prunelab: a desk-scale laboratory for early neural-network pruning.

Implements IMP, SNIP, SynFlow and DRIVE on small MLPs and convolutional
stacks, on top of a small numpy autodiff core.
"""

from .errors import PruneLabError
from .kernels import BACKEND as KERNEL_BACKEND
from .nn import DESK_MLP, Model, ModelSpec, build_model, mlp_spec
from .tensor import Tape, Tensor, backward, finite_diff_gradient

__version__ = "0.1.0"

__all__ = [
    "DESK_MLP", "KERNEL_BACKEND", "Model", "ModelSpec", "PruneLabError", "Tape", "Tensor",
    "backward", "build_model", "finite_diff_gradient", "mlp_spec",
]
