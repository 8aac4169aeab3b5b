from netir.errors import NetworkError, NetworkFileError, ShapeError, ShapesNotInferredError, ValidationError
from netir.graph import (CountBreakdown, Diagnostic, GraphBuilder, LayerGraph, Node, elementwise_op_count,
                         infer_shapes, layer_elementwise_ops, layer_macs, layer_params, mac_count, output_shape,
                         param_count, validate)
from netir.layers import (Conv, ElementwiseAdd, FullyConnected, GlobalAvgPool, Input, LayerKind, Pool, PoolKind,
                          TensorShape)
from netir.network_file import from_text, read_network, to_text, write_network
