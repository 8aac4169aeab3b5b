import json
import logging
from typing import Any, Dict, List, Optional

from netir.errors import NetworkFileError
from netir.graph import LayerGraph, Node
from netir.layers import (KIND_ADD, KIND_CONV, KIND_FC, KIND_GAP, KIND_INPUT, KIND_POOL, Conv, ElementwiseAdd,
                          FullyConnected, GlobalAvgPool, Input, LayerKind, Pool, TensorShape)

"""Reads and writes network files.

A network file is one JSON document:
```
{
  "name": "toy",
  "input": {"c": 3, "h": 32, "w": 32},
  "layers": [
    {"id": "input", "kind": "input", "inputs": []},
    {"id": "conv1", "kind": "conv", "kernel": [3, 3], "stride": 1, "pad": [1, 1], "out_channels": 16,
     "groups": 1, "bias": false, "bn": true, "relu": true, "inputs": ["input"]},
    ...
  ]
}
```
Layers are listed in topological order. Unknown fields are rejected. `to_text` always writes every field with sorted
keys, so the output is canonical: writing a parsed file reproduces it byte for byte.
"""

TOP_LEVEL_FIELDS = {'name', 'input', 'layers'}
INPUT_SHAPE_FIELDS = {'c', 'h', 'w'}
COMMON_FIELDS = {'id', 'kind', 'inputs', 'name'}
REQUIRED_FIELDS = {
    KIND_INPUT: set(),
    KIND_CONV: {'kernel', 'stride', 'out_channels'},
    KIND_FC: {'out_features'},
    KIND_POOL: {'pool_kind', 'kernel', 'stride'},
    KIND_GAP: set(),
    KIND_ADD: set(),
}
OPTIONAL_FIELDS = {
    KIND_INPUT: set(),
    KIND_CONV: {'pad', 'groups', 'bias', 'bn', 'relu'},
    KIND_FC: {'bias'},
    KIND_POOL: {'pad'},
    KIND_GAP: set(),
    KIND_ADD: set(),
}
DOCUMENT_INDENT = 2


def _layer_fields(kind: LayerKind) -> Dict[str, Any]:
    if isinstance(kind, Conv):
        return {
            'kernel': [kind.kernel_h, kind.kernel_w],
            'stride': kind.stride,
            'pad': [kind.pad_h, kind.pad_w],
            'out_channels': kind.out_channels,
            'groups': kind.groups,
            'bias': kind.has_bias,
            'bn': kind.has_batchnorm,
            'relu': kind.has_relu,
        }
    if isinstance(kind, FullyConnected):
        return {'out_features': kind.out_features, 'bias': kind.has_bias}
    if isinstance(kind, Pool):
        return {
            'pool_kind': kind.pool_kind.value,
            'kernel': [kind.kernel, kind.kernel],
            'stride': kind.stride,
            'pad': [kind.pad, kind.pad],
        }
    return {}


def to_document(graph: LayerGraph) -> Dict[str, Any]:
    layers = []
    for node in graph.nodes:
        entry = {'id': node.id, 'kind': node.kind.kind, 'inputs': list(node.inputs)}
        if node.name and node.name != node.id:
            entry['name'] = node.name
        entry.update(_layer_fields(node.kind))
        layers.append(entry)
    shape = graph.input_shape
    return {
        'name': graph.name,
        'input': {'c': shape.channels, 'h': shape.height, 'w': shape.width},
        'layers': layers,
    }


def to_text(graph: LayerGraph) -> str:
    """Serialize the graph's structure (never its inferred shapes) as a canonical network file."""
    return json.dumps(to_document(graph), indent=DOCUMENT_INDENT, sort_keys=True) + '\n'


class _Parser:
    """Holds the source text so errors can point at the line where a node is declared."""

    def __init__(self, text: str):
        self.lines = text.splitlines()

    def line_of(self, node_id: Optional[str]) -> Optional[int]:
        if node_id is None:
            return None
        needle = json.dumps(node_id)
        for number, line in enumerate(self.lines, start=1):
            if '"id"' in line and needle in line:
                return number
        return None

    def error(self, reason: str, field: Optional[str] = None, node_id: Optional[str] = None) -> NetworkFileError:
        return NetworkFileError(reason, line=self.line_of(node_id), field=field, node_id=node_id)

    def pair(self, entry: Dict[str, Any], field: str, node_id: str) -> List[int]:
        value = entry[field]
        if (not isinstance(value, list) or len(value) != 2
                or any(isinstance(v, bool) or not isinstance(v, int) for v in value)):
            raise self.error(f'expected a list of two integers, got {value!r}', field, node_id)
        return value

    def layer(self, entry: Dict[str, Any], node_id: str, kind_name: str) -> LayerKind:
        if kind_name == KIND_INPUT:
            return Input()
        if kind_name == KIND_GAP:
            return GlobalAvgPool()
        if kind_name == KIND_ADD:
            return ElementwiseAdd()
        if kind_name == KIND_FC:
            return FullyConnected(entry['out_features'], has_bias=entry.get('bias', True))
        if kind_name == KIND_POOL:
            kernel_h, kernel_w = self.pair(entry, 'kernel', node_id)
            if kernel_h != kernel_w:
                raise self.error('pool kernels must be square', 'kernel', node_id)
            pad_h, pad_w = self.pair(entry, 'pad', node_id) if 'pad' in entry else (0, 0)
            if pad_h != pad_w:
                raise self.error('pool padding must be equal on both axes', 'pad', node_id)
            return Pool(entry['pool_kind'], kernel_h, entry['stride'], pad_h)
        kernel_h, kernel_w = self.pair(entry, 'kernel', node_id)
        pad_h, pad_w = self.pair(entry, 'pad', node_id) if 'pad' in entry else (0, 0)
        return Conv(kernel_h=kernel_h, kernel_w=kernel_w, stride=entry['stride'],
                    out_channels=entry['out_channels'], pad_h=pad_h, pad_w=pad_w,
                    groups=entry.get('groups', 1),
                    has_bias=entry.get('bias', False),
                    has_batchnorm=entry.get('bn', False),
                    has_relu=entry.get('relu', False))

    def node(self, entry: Any, position: int) -> Node:
        if not isinstance(entry, dict):
            raise self.error(f'layer #{position} must be an object')
        node_id = entry.get('id')
        if not isinstance(node_id, str) or not node_id:
            raise self.error(f'layer #{position} is missing a string id', 'id')
        kind_name = entry.get('kind')
        if kind_name is None:
            raise self.error('missing required field', 'kind', node_id)
        if kind_name not in REQUIRED_FIELDS:
            raise self.error(f'unknown layer kind {kind_name!r}', 'kind', node_id)

        required = REQUIRED_FIELDS[kind_name] | ({'inputs'} if kind_name != KIND_INPUT else set())
        for field in sorted(required):
            if field not in entry:
                raise self.error('missing required field', field, node_id)
        allowed = COMMON_FIELDS | REQUIRED_FIELDS[kind_name] | OPTIONAL_FIELDS[kind_name]
        unknown = sorted(set(entry) - allowed)
        if unknown:
            raise self.error(f'unknown field for a {kind_name} layer', unknown[0], node_id)

        inputs = entry.get('inputs', [])
        if not isinstance(inputs, list) or not all(isinstance(i, str) for i in inputs):
            raise self.error('expected a list of node ids', 'inputs', node_id)
        name = entry.get('name')
        if name is not None and not isinstance(name, str):
            raise self.error('expected a string', 'name', node_id)

        try:
            kind = self.layer(entry, node_id, kind_name)
        except ValueError as e:
            raise self.error(str(e), None, node_id) from e
        return Node(node_id, kind, tuple(inputs), name)

    def graph(self, document: Any) -> LayerGraph:
        if not isinstance(document, dict):
            raise self.error('a network file must hold a single object')
        for field in sorted(TOP_LEVEL_FIELDS):
            if field not in document:
                raise self.error('missing required field', field)
        unknown = sorted(set(document) - TOP_LEVEL_FIELDS)
        if unknown:
            raise self.error('unknown top-level field', unknown[0])
        if not isinstance(document['name'], str):
            raise self.error('expected a string', 'name')

        shape = document['input']
        if not isinstance(shape, dict) or set(shape) != INPUT_SHAPE_FIELDS:
            raise self.error('expected an object with exactly c, h and w', 'input')
        try:
            input_shape = TensorShape(shape['c'], shape['h'], shape['w'])
        except ValueError as e:
            raise self.error(str(e), 'input') from e

        layers = document['layers']
        if not isinstance(layers, list):
            raise self.error('expected a list of layers', 'layers')
        nodes = tuple(self.node(entry, position) for position, entry in enumerate(layers))
        return LayerGraph(document['name'], input_shape, nodes)


def from_text(text: str) -> LayerGraph:
    """Parse a network file into an un-annotated LayerGraph.

    :param text: The document text.
    :return: The graph; call `infer_shapes` before counting.
    :raises NetworkFileError: On malformed JSON, unknown kinds or fields, missing fields and out-of-range values.
    """
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise NetworkFileError(e.msg, line=e.lineno) from e
    graph = _Parser(text).graph(document)
    logging.debug(f'Parsed network {graph.name} with {len(graph.nodes)} layers')
    return graph


def read_network(path: str) -> LayerGraph:
    with open(path) as f:
        return from_text(f.read())


def write_network(graph: LayerGraph, path: str):
    with open(path, 'w') as f:
        f.write(to_text(graph))
