"""Simplicial convolutional networks with pooling."""

from .complex import (
    HodgeComponents,
    HodgeLaplacians,
    IncidenceMatrices,
    SimplicialComplex,
    build_complex,
    clique_lift,
    hodge_decompose,
    incidence,
    laplacians,
    neighbors,
    reduce_complex,
)
from .conv import Nonlinearity, ScnpLayerParams, scn_components
from .model import JkModel, JkModelConfig, jk_forward, load_model, readout, save_model, scnp_layer_forward
from .datasets import (
    Sample,
    SyntheticFlowConfig,
    bundled_corpus,
    generate_synthetic_flow,
    lift_and_featurize,
    load_dataset,
    load_tudataset,
    save_dataset,
    split,
)
from .pooling import Aggregation, PoolingConfig, PoolOutput, Strategy
from .training import TrainConfig, evaluate, train

__version__ = "0.1.0"
