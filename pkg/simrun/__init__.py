from simrun.errors import SimulationError
from simrun.simulation import (ComparisonRow, FigureEntry, LayerResult, NetworkResult, SweepPoint, compare,
                               energy_of, figure_data, group_efficiency, layer_signature, simulate_layer,
                               simulate_network, sweep, sweep_grid)
