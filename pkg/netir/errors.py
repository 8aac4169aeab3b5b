from typing import Iterable, Optional


class NetworkError(Exception):
    """Base of every error raised by the network IR."""
    pass


class ShapeError(NetworkError):
    """Raised by shape inference, naming the node whose output shape cannot be computed."""
    def __init__(self, node_id: str, reason: str):
        super().__init__(f'node {node_id}: {reason}')
        self.node_id = node_id
        self.reason = reason


class ShapesNotInferredError(NetworkError):
    """Raised when counting or simulating a graph that was never passed through `infer_shapes`."""
    def __init__(self, graph_name: str):
        super().__init__(f'shapes of graph {graph_name} have not been inferred')
        self.graph_name = graph_name


class ValidationError(NetworkError):
    """Raised by callers that require a graph with no diagnostics."""
    def __init__(self, graph_name: str, diagnostics: Iterable):
        self.graph_name = graph_name
        self.diagnostics = list(diagnostics)
        summary = '; '.join(str(d) for d in self.diagnostics)
        super().__init__(f'graph {graph_name} is invalid: {summary}')


class NetworkFileError(NetworkError):
    """A network file could not be parsed. Carries whatever context is known: line, field and node id."""
    def __init__(self, reason: str, line: Optional[int] = None, field: Optional[str] = None,
                 node_id: Optional[str] = None):
        self.reason = reason
        self.line = line
        self.field = field
        self.node_id = node_id
        context = []
        if line is not None:
            context.append(f'line {line}')
        if node_id is not None:
            context.append(f'node {node_id}')
        if field is not None:
            context.append(f'field {field}')
        super().__init__(f'{", ".join(context)}: {reason}' if context else reason)
