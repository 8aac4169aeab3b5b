from typing import Optional


class DataflowError(Exception):
    pass


class UnsupportedLayerError(DataflowError):
    """The layer kind has no cycle model in the requested dataflow."""
    def __init__(self, kind: str, node_id: Optional[str] = None, reason: str = 'no cycle model for this layer kind'):
        self.kind = kind
        self.node_id = node_id
        where = f'node {node_id} ({kind})' if node_id else kind
        super().__init__(f'{where}: {reason}')


class OracleSizeError(DataflowError):
    """The oracle enumerates every MAC, so it refuses layers beyond a test-scale limit."""
    def __init__(self, macs: int, limit: int):
        self.macs = macs
        self.limit = limit
        super().__init__(f'layer has {macs} MACs, the oracle is limited to {limit}')
