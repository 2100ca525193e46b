"""Deep graph convolutional networks with node-wise normalization, built on a
small tape-based autodiff engine over numpy and scipy.sparse."""
from .autodiff import Tape, Tensor, gradient_check
from .data import GraphDataset, SplitSpec, generate_sbm, load_bundle, make_split, mask_features, save_bundle
from .errors import ConfigError, DataError, NodeNormError, ShapeError, SplitError, StructureError, ValidationError
from .graph import SparseAdjacency, power_propagate, renormalize, spmm
from .models import Model, ModelSpec, Norm, build_model, forward, gc_layer, layer_norm, node_norm

__version__ = "0.1.0"
