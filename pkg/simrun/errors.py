class SimulationError(Exception):
    """A layer could not be simulated. Names the layer and keeps the underlying tiler or dataflow error."""
    def __init__(self, node_id: str, cause: Exception):
        self.node_id = node_id
        self.cause = cause
        super().__init__(f'layer {node_id}: {cause}')
