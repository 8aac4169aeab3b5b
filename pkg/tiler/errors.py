class TilingError(Exception):
    pass


class InfeasibleTilingError(TilingError):
    """Not even the smallest candidate tile fits the buffer."""
    def __init__(self, required_bytes: int, buffer_bytes: int, node_id: str = None):
        self.required_bytes = required_bytes
        self.buffer_bytes = buffer_bytes
        self.node_id = node_id
        where = f'node {node_id}: ' if node_id else ''
        super().__init__(f'{where}the smallest tile needs {required_bytes} bytes, the buffer holds {buffer_bytes}')


class InfeasiblePlanError(TilingError):
    """A plan whose tile extents or loop order do not fit the layer."""
    pass
