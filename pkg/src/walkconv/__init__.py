"""Random-walk graph convolution networks on numpy.

Feature graphs are turned into per-node neighbor orderings by expected
random-walk visit counts; shared-weight convolutions over those
orderings train by plain backpropagation. See README.md for the
pipeline and the `walkconv` command-line entry point.
"""

from .errors import (
    ConfigurationError,
    DataFormatError,
    DimensionError,
    NumericError,
    WalkconvError,
)
from .graph import (
    CorrelationMatrix,
    SimilarityGraph,
    StationaryDiagnostic,
    TransitionMatrix,
    VisitMatrix,
    correlation_from_data,
    expected_visits,
    grid_graph,
    similarity_from_correlation,
    stationary_ratio_check,
    transition_from_similarity,
)
from .neighbors import (
    NeighborTable,
    read_table,
    select_neighbors,
    serialize_table,
    deserialize_table,
    sparse_neighbors_bfs,
    table_content_hash,
    table_to_json,
    write_table,
    write_table_json,
)
from .kernels import gather_neighbors, scatter_add_grad, tensor_dot
from .layers import (
    DenseLayer,
    DropoutLayer,
    FlattenLayer,
    GraphConvLayer,
    ReluLayer,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    flatten_nodes,
    glorot_uniform,
    graph_conv_backward,
    graph_conv_forward,
    linear_rmse_head,
    relu_backward,
    relu_forward,
    softmax_cross_entropy_head,
    unflatten_nodes,
)
from .network import (
    Network,
    count_parameters,
    load_checkpoint,
    parse_architecture,
    save_checkpoint,
)
from .objectives import error_rate, r_squared, rmse_loss
from .training import AdamState, TrainConfig, adam_step, evaluate, seed_streams, train
from .data import (
    Dataset,
    apply_feature_selection,
    filter_features,
    read_csv_regression,
    read_idx,
    standardize,
    take,
)

__version__ = "0.1.0"
