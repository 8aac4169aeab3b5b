from dataflow.cycles import (MODE_PREFERENCE, AccessCounts, CycleReport, DataflowMode, LayerTime, dram_cycles,
                             elementwise_cycles, energy_total, is_elementwise, kept_weights, mode_cycles, os_cycles,
                             select_mode, total_layer_cycles, ws_cycles)
from dataflow.errors import DataflowError, OracleSizeError, UnsupportedLayerError
from dataflow.geometry import ConvGeometry, conv_geometry
from dataflow.oracle import ORACLE_MAC_LIMIT, OracleResult, oracle_cycles, oracle_schedule, sparsity_mask
