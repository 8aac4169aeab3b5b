import dataclasses
import functools
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

from netir.errors import ShapeError, ShapesNotInferredError
from netir.layers import (Conv, ElementwiseAdd, FullyConnected, GlobalAvgPool, Input, LayerKind, Pool, PoolKind,
                          TensorShape)

"""The layer graph and everything computed from it: shapes, validation, parameter, MAC and elementwise-op counts.

Graphs are immutable. `infer_shapes` returns a new graph annotated with the output shape of every node; the counting
functions require that annotation and raise `ShapesNotInferredError` without it.

Usage:
```
    builder = GraphBuilder('toy', TensorShape(3, 32, 32))
    x = builder.conv('conv1', builder.input_id, 16, kernel=3, pad=1, bn=True, relu=True)
    x = builder.global_avg_pool('gap', x)
    builder.fully_connected('fc', x, 10)
    graph = builder.build()          # shapes inferred

    params = param_count(graph)      # CountBreakdown(total=..., per_layer={...})
```
"""


@dataclass(frozen=True)
class Node:
    id: str
    kind: LayerKind
    inputs: Tuple[str, ...] = ()
    name: Optional[str] = None

    @property
    def label(self) -> str:
        return self.name or self.id


@dataclass(frozen=True)
class Diagnostic:
    node_id: Optional[str]
    code: str
    reason: str

    def __str__(self):
        return f'[{self.code}] {self.node_id}: {self.reason}'


class CountBreakdown(NamedTuple):
    total: int
    per_layer: Dict[str, int]


@dataclass(frozen=True)
class LayerGraph:
    """Nodes in topological order plus the network input shape.

    `shapes` maps node id to output shape once inferred. It is excluded from equality, so a parsed graph equals the
    annotated graph it was written from.
    """
    name: str
    input_shape: TensorShape
    nodes: Tuple[Node, ...]
    shapes: Optional[Dict[str, TensorShape]] = field(default=None, compare=False, repr=False)

    @functools.cached_property
    def _index(self) -> Dict[str, Node]:
        return {node.id: node for node in self.nodes}

    def node(self, node_id: str) -> Node:
        return self._index[node_id]

    def has_node(self, node_id: str) -> bool:
        return node_id in self._index

    @property
    def output_id(self) -> Optional[str]:
        return self.nodes[-1].id if self.nodes else None

    @property
    def is_annotated(self) -> bool:
        return self.shapes is not None

    def output_shape(self, node_id: str) -> TensorShape:
        self._require_shapes()
        return self.shapes[node_id]

    def input_shapes(self, node_id: str) -> List[TensorShape]:
        """Output shapes of the node's predecessors, in edge order. The Input node sees the network input shape."""
        self._require_shapes()
        node = self.node(node_id)
        if isinstance(node.kind, Input):
            return [self.input_shape]
        return [self.shapes[pred] for pred in node.inputs]

    def _require_shapes(self):
        if self.shapes is None:
            raise ShapesNotInferredError(self.name)


class GraphBuilder:
    """Incrementally assembles a LayerGraph in topological order. Every method returns the id of the new node."""
    DEFAULT_INPUT_ID = 'input'

    def __init__(self, name: str, input_shape: TensorShape, input_id: str = DEFAULT_INPUT_ID):
        self.name = name
        self.input_shape = input_shape
        self.input_id = input_id
        self.nodes = [Node(input_id, Input())]

    def append(self, node_id: str, kind: LayerKind, inputs: Sequence[str], name: Optional[str] = None) -> str:
        self.nodes.append(Node(node_id, kind, tuple(inputs), name))
        return node_id

    def conv(self, node_id: str, source: str, out_channels: int,
             kernel: Union[int, Tuple[int, int]],
             stride: int = 1,
             pad: Union[int, Tuple[int, int]] = 0,
             groups: int = 1,
             bias: bool = False,
             bn: bool = False,
             relu: bool = False) -> str:
        kernel_h, kernel_w = (kernel, kernel) if isinstance(kernel, int) else kernel
        pad_h, pad_w = (pad, pad) if isinstance(pad, int) else pad
        layer = Conv(kernel_h=kernel_h, kernel_w=kernel_w, stride=stride, out_channels=out_channels,
                     pad_h=pad_h, pad_w=pad_w, groups=groups,
                     has_bias=bias, has_batchnorm=bn, has_relu=relu)
        return self.append(node_id, layer, [source])

    def fully_connected(self, node_id: str, source: str, out_features: int, bias: bool = True) -> str:
        return self.append(node_id, FullyConnected(out_features, has_bias=bias), [source])

    def pool(self, node_id: str, source: str, kernel: int, stride: int, pad: int = 0,
             pool_kind: PoolKind = PoolKind.MAX) -> str:
        return self.append(node_id, Pool(pool_kind, kernel, stride, pad), [source])

    def global_avg_pool(self, node_id: str, source: str) -> str:
        return self.append(node_id, GlobalAvgPool(), [source])

    def add(self, node_id: str, left: str, right: str) -> str:
        return self.append(node_id, ElementwiseAdd(), [left, right])

    def build(self, infer: bool = True) -> 'LayerGraph':
        graph = LayerGraph(self.name, self.input_shape, tuple(self.nodes))
        return infer_shapes(graph) if infer else graph


def _spatial_out(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def output_shape(kind: LayerKind, in_shapes: Sequence[TensorShape]) -> TensorShape:
    """Compute one layer's output shape. Raises ValueError with a reason when the layer cannot apply."""
    if isinstance(kind, Input):
        return in_shapes[0]

    if isinstance(kind, ElementwiseAdd):
        if len(in_shapes) != 2:
            raise ValueError(f'add takes 2 operands, got {len(in_shapes)}')
        left, right = in_shapes
        if left != right:
            raise ValueError(f'add operand shapes differ: {left} vs {right}')
        return left

    in_shape = in_shapes[0]
    if isinstance(kind, Conv):
        if in_shape.channels % kind.groups:
            raise ValueError(f'in_channels {in_shape.channels} is not divisible by groups {kind.groups}')
        height = _spatial_out(in_shape.height, kind.kernel_h, kind.stride, kind.pad_h)
        width = _spatial_out(in_shape.width, kind.kernel_w, kind.stride, kind.pad_w)
    elif isinstance(kind, Pool):
        height = _spatial_out(in_shape.height, kind.kernel, kind.stride, kind.pad)
        width = _spatial_out(in_shape.width, kind.kernel, kind.stride, kind.pad)
    elif isinstance(kind, FullyConnected):
        return TensorShape(kind.out_features, 1, 1)
    elif isinstance(kind, GlobalAvgPool):
        return TensorShape(in_shape.channels, 1, 1)
    else:
        raise ValueError(f'unknown layer kind {type(kind).__name__}')

    if height < 1 or width < 1:
        raise ValueError(f'non-positive output size {height}x{width} from input {in_shape}')
    channels = kind.out_channels if isinstance(kind, Conv) else in_shape.channels
    return TensorShape(channels, height, width)


def _propagate_shapes(graph: LayerGraph,
                      on_error: Callable[[str, str], None]) -> Dict[str, TensorShape]:
    """Walk the node list once. Nodes whose predecessors failed are skipped silently."""
    shapes = {}
    failed = set()
    for node in graph.nodes:
        if isinstance(node.kind, Input):
            shapes[node.id] = graph.input_shape
            continue
        if any(pred in failed for pred in node.inputs):
            failed.add(node.id)
            continue
        missing = [pred for pred in node.inputs if pred not in shapes]
        if missing:
            on_error(node.id, f'predecessor {missing[0]} is not defined before this node')
            failed.add(node.id)
            continue
        try:
            shapes[node.id] = output_shape(node.kind, [shapes[pred] for pred in node.inputs])
        except ValueError as e:
            on_error(node.id, str(e))
            failed.add(node.id)
    return shapes


def infer_shapes(graph: LayerGraph) -> LayerGraph:
    """Return a copy of the graph annotated with every node's output shape.

    :param graph: A structurally valid graph.
    :return: The annotated graph. Applying this again yields an equal annotation.
    :raises ShapeError: On the first node whose shape cannot be computed.
    """
    def fail(node_id: str, reason: str):
        raise ShapeError(node_id, reason)

    shapes = _propagate_shapes(graph, fail)
    logging.debug(f'Inferred shapes of {len(shapes)} nodes in {graph.name}')
    return dataclasses.replace(graph, shapes=shapes)


def _expected_arity(kind: LayerKind) -> int:
    if isinstance(kind, Input):
        return 0
    if isinstance(kind, ElementwiseAdd):
        return 2
    return 1


def _find_cycle_node(graph: LayerGraph) -> Optional[str]:
    """Return a node on a cycle of the predecessor relation, or None."""
    preds = {node.id: [p for p in node.inputs if graph.has_node(p)] for node in graph.nodes}
    state = {}  # node id -> 1 visiting, 2 done
    for start in preds:
        if state.get(start):
            continue
        stack = [(start, iter(preds[start]))]
        state[start] = 1
        while stack:
            node_id, edges = stack[-1]
            pred = next(edges, None)
            if pred is None:
                state[node_id] = 2
                stack.pop()
            elif state.get(pred) == 1:
                return pred
            elif not state.get(pred):
                state[pred] = 1
                stack.append((pred, iter(preds[pred])))
    return None


def validate(graph: LayerGraph) -> List[Diagnostic]:
    """Check every LayerGraph invariant. Never raises: an empty list means the graph is well-formed.

    Structural checks come first. Shape checks only run on a structurally sound graph, so one defect is reported once.
    """
    diagnostics = []
    seen = set()
    for node in graph.nodes:
        if node.id in seen:
            diagnostics.append(Diagnostic(node.id, 'duplicate-id', 'node id is used more than once'))
        seen.add(node.id)

    input_nodes = [node.id for node in graph.nodes if isinstance(node.kind, Input)]
    if len(input_nodes) != 1:
        diagnostics.append(Diagnostic(None, 'input-count', f'expected exactly one input node, found {len(input_nodes)}'))

    for node in graph.nodes:
        expected = _expected_arity(node.kind)
        if len(node.inputs) != expected:
            diagnostics.append(Diagnostic(
                node.id, 'arity', f'{node.kind.kind} takes {expected} predecessor(s), has {len(node.inputs)}'))
        for pred in node.inputs:
            if not graph.has_node(pred):
                diagnostics.append(Diagnostic(node.id, 'unknown-input', f'predecessor {pred} does not exist'))

    cycle_node = _find_cycle_node(graph)
    if cycle_node is not None:
        diagnostics.append(Diagnostic(cycle_node, 'cycle', 'node lies on a cycle'))
    else:
        position = {node.id: i for i, node in enumerate(graph.nodes)}
        for i, node in enumerate(graph.nodes):
            late = [p for p in node.inputs if p in position and position[p] >= i]
            if late:
                diagnostics.append(Diagnostic(node.id, 'order', f'predecessor {late[0]} appears after this node'))

    if diagnostics:
        return diagnostics

    _propagate_shapes(graph, lambda node_id, reason: diagnostics.append(Diagnostic(node_id, 'shape', reason)))
    return diagnostics


def conv_params(layer: Conv, in_channels: int) -> int:
    params = layer.kernel_h * layer.kernel_w * (in_channels // layer.groups) * layer.out_channels
    if layer.has_bias:
        params += layer.out_channels
    if layer.has_batchnorm:
        # Affine scale and shift only. Running statistics are not parameters.
        params += 2 * layer.out_channels
    return params


def layer_params(kind: LayerKind, in_shapes: Sequence[TensorShape]) -> int:
    if isinstance(kind, Conv):
        return conv_params(kind, in_shapes[0].channels)
    if isinstance(kind, FullyConnected):
        return in_shapes[0].elements * kind.out_features + (kind.out_features if kind.has_bias else 0)
    return 0


def layer_macs(kind: LayerKind, in_shapes: Sequence[TensorShape], out_shape: TensorShape) -> int:
    if isinstance(kind, Conv):
        return (out_shape.height * out_shape.width * kind.kernel_h * kind.kernel_w
                * (in_shapes[0].channels // kind.groups) * kind.out_channels)
    if isinstance(kind, FullyConnected):
        return in_shapes[0].elements * kind.out_features
    return 0


def layer_elementwise_ops(kind: LayerKind, in_shapes: Sequence[TensorShape], out_shape: TensorShape) -> int:
    """Elements touched by pooling and add layers. Zero for every MAC layer."""
    if isinstance(kind, Pool):
        return out_shape.elements * kind.kernel * kind.kernel
    if isinstance(kind, GlobalAvgPool):
        return in_shapes[0].elements
    if isinstance(kind, ElementwiseAdd):
        return out_shape.elements
    return 0


def _count(graph: LayerGraph, per_node: Callable[[Node], int]) -> CountBreakdown:
    if not graph.is_annotated:
        raise ShapesNotInferredError(graph.name)
    per_layer = {node.id: per_node(node) for node in graph.nodes}
    return CountBreakdown(sum(per_layer.values()), per_layer)


def param_count(graph: LayerGraph) -> CountBreakdown:
    return _count(graph, lambda node: layer_params(node.kind, graph.input_shapes(node.id)))


def mac_count(graph: LayerGraph) -> CountBreakdown:
    return _count(graph, lambda node: layer_macs(
        node.kind, graph.input_shapes(node.id), graph.output_shape(node.id)))


def elementwise_op_count(graph: LayerGraph) -> CountBreakdown:
    return _count(graph, lambda node: layer_elementwise_ops(
        node.kind, graph.input_shapes(node.id), graph.output_shape(node.id)))


def reorder(graph: LayerGraph, order: Iterable[str]) -> LayerGraph:
    """Return the graph with its node list permuted into the given id order, shapes dropped."""
    return LayerGraph(graph.name, graph.input_shape, tuple(graph.node(node_id) for node_id in order))
