import dataclasses
import enum
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, NamedTuple, Sequence, Tuple

from dataflow.errors import UnsupportedLayerError
from dataflow.geometry import ConvGeometry, conv_geometry
from hwmodel import AcceleratorConfig
from netir import ElementwiseAdd, GlobalAvgPool, LayerKind, Pool, TensorShape, layer_elementwise_ops

"""Analytic compute-cycle and access-count models of one layer on the PE array.

Weight stationary (WS): the array holds a Pr x Pc block of weights, rows splitting the input channels of a group and
columns its output channels, and streams one output pixel per cycle for each kernel tap. Accumulation across rows is
free.

Output stationary (OS, single output channel / multiple output pixels): each PE owns one pixel of a Pr x Pc block of
one output channel, and one weight is broadcast per cycle. Zero weights are skipped, so a filter of n weights takes
`kept_weights(n, sparsity)` cycles per block.

Groups run one after another in both modes. Pooling and adds touch `elementwise ops` elements at P per cycle.
"""


class DataflowMode(str, enum.Enum):
    WS = 'ws'
    OS = 'os'

    def __str__(self):
        return self.name


# Tie-break order when two modes cost the same.
MODE_PREFERENCE = (DataflowMode.WS, DataflowMode.OS)
RF_ACCESSES_PER_MAC = 3
BUFFER_ACCESSES_PER_ELEMENTWISE_OP = 2


@dataclass(frozen=True)
class AccessCounts:
    """Operation and access counts of one layer. `macs` is what actually executes (sparsity-reduced in OS)."""
    macs: int = 0
    rf_accesses: int = 0
    buffer_accesses: int = 0
    dram_bytes: int = 0
    elementwise_ops: int = 0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f'{f.name} must be non-negative, got {getattr(self, f.name)}')

    def with_dram_bytes(self, dram_bytes: int) -> 'AccessCounts':
        return dataclasses.replace(self, dram_bytes=dram_bytes)

    def __add__(self, other: 'AccessCounts') -> 'AccessCounts':
        return AccessCounts(*(getattr(self, f.name) + getattr(other, f.name) for f in dataclasses.fields(self)))


@dataclass(frozen=True)
class CycleReport:
    mode: DataflowMode
    compute_cycles: int
    accesses: AccessCounts
    utilized_pes: float


class LayerTime(NamedTuple):
    dram_cycles: int
    total_cycles: int


def kept_weights(n: int, sparsity: Fraction) -> int:
    """Non-zero weights left in a filter of n weights: n minus floor(n * sparsity), i.e. ceil(n * (1 - sparsity))."""
    sparsity = sparsity if isinstance(sparsity, Fraction) else Fraction(str(sparsity))
    return n - math.floor(n * sparsity)


def _utilization(executed_macs: int, cycles: int, cfg: AcceleratorConfig) -> float:
    return executed_macs / (cycles * cfg.pe_count) if cycles else 0.0


def ws_geometry_cycles(geometry: ConvGeometry, cfg: AcceleratorConfig) -> CycleReport:
    cig = geometry.group_in_channels
    cog = geometry.group_out_channels
    cycles = (geometry.groups * geometry.kernel_h * geometry.kernel_w
              * math.ceil(cig / cfg.pe_rows) * math.ceil(cog / cfg.pe_cols)
              * geometry.out_h * geometry.out_w)
    macs = geometry.macs
    input_reads = cycles * min(cfg.pe_rows, cig)
    partial_sum_accesses = 2 * cycles * min(cfg.pe_cols, cog)
    accesses = AccessCounts(
        macs=macs,
        rf_accesses=RF_ACCESSES_PER_MAC * macs,
        buffer_accesses=geometry.weights + input_reads + partial_sum_accesses)
    return CycleReport(DataflowMode.WS, cycles, accesses, _utilization(macs, cycles, cfg))


def os_geometry_cycles(geometry: ConvGeometry, cfg: AcceleratorConfig) -> CycleReport:
    kept = kept_weights(geometry.filter_size, cfg.weight_sparsity)
    blocks = math.ceil(geometry.out_h / cfg.pe_rows) * math.ceil(geometry.out_w / cfg.pe_cols)
    cycles = geometry.out_channels * blocks * kept
    effective_macs = geometry.output_elements * kept
    accesses = AccessCounts(
        macs=effective_macs,
        rf_accesses=RF_ACCESSES_PER_MAC * effective_macs,
        # One input read per active PE per cycle, one weight broadcast per cycle, one write per output.
        buffer_accesses=effective_macs + cycles + geometry.output_elements)
    return CycleReport(DataflowMode.OS, cycles, accesses, _utilization(effective_macs, cycles, cfg))


def ws_cycles(layer: LayerKind, in_shape: TensorShape, cfg: AcceleratorConfig) -> CycleReport:
    return ws_geometry_cycles(conv_geometry(layer, in_shape), cfg)


def os_cycles(layer: LayerKind, in_shape: TensorShape, cfg: AcceleratorConfig) -> CycleReport:
    return os_geometry_cycles(conv_geometry(layer, in_shape), cfg)


def mode_cycles(layer: LayerKind, in_shape: TensorShape, cfg: AcceleratorConfig, mode: DataflowMode) -> CycleReport:
    if mode == DataflowMode.WS:
        return ws_cycles(layer, in_shape, cfg)
    return os_cycles(layer, in_shape, cfg)


def is_elementwise(layer: LayerKind) -> bool:
    return isinstance(layer, (Pool, GlobalAvgPool, ElementwiseAdd))


def elementwise_cycles(layer: LayerKind, in_shapes: Sequence[TensorShape], out_shape: TensorShape,
                       cfg: AcceleratorConfig) -> CycleReport:
    """Pooling, global average pooling and adds: ops spread over every PE, no MACs.

    DRAM bytes are every operand plus the output, streamed once. Mode is OS by convention.
    """
    if not is_elementwise(layer):
        raise UnsupportedLayerError(layer.kind, reason='not an elementwise layer')
    ops = layer_elementwise_ops(layer, in_shapes, out_shape)
    cycles = math.ceil(ops / cfg.pe_count)
    streamed = sum(shape.elements for shape in in_shapes) + out_shape.elements
    accesses = AccessCounts(
        buffer_accesses=BUFFER_ACCESSES_PER_ELEMENTWISE_OP * ops,
        dram_bytes=cfg.element_bytes * streamed,
        elementwise_ops=ops)
    return CycleReport(DataflowMode.OS, cycles, accesses, _utilization(ops, cycles, cfg))


def dram_cycles(dram_bytes: int, cfg: AcceleratorConfig) -> int:
    return math.ceil(Fraction(dram_bytes) / cfg.dram_bytes_per_cycle)


def total_layer_cycles(compute_cycles: int, dram_bytes: int, n_transfers: int, cfg: AcceleratorConfig) -> LayerTime:
    """Compute and DRAM streaming overlap; each tile transfer adds the full DRAM latency on top."""
    memory = dram_cycles(dram_bytes, cfg)
    return LayerTime(memory, max(compute_cycles, memory) + n_transfers * cfg.dram_latency_cycles)


def energy_total(accesses: AccessCounts, cfg: AcceleratorConfig) -> float:
    return cfg.energy.weigh(accesses.macs, accesses.rf_accesses, accesses.buffer_accesses,
                            Fraction(accesses.dram_bytes, cfg.element_bytes)).total


def select_mode(layer: LayerKind, in_shape: TensorShape, cfg: AcceleratorConfig,
                tiling_per_mode: Mapping[DataflowMode, object]) -> Tuple[DataflowMode, CycleReport]:
    """Pick the mode with the fewest total cycles, then the lower energy, then WS.

    :param tiling_per_mode: Per mode, the DRAM traffic of its tiling: anything with `total_bytes` and `n_transfers`.
    :return: The chosen mode and its report, with DRAM bytes filled in.
    """
    best = None
    for mode in MODE_PREFERENCE:
        if mode not in tiling_per_mode:
            continue
        traffic = tiling_per_mode[mode]
        report = mode_cycles(layer, in_shape, cfg, mode)
        report = dataclasses.replace(report, accesses=report.accesses.with_dram_bytes(traffic.total_bytes))
        total = total_layer_cycles(report.compute_cycles, traffic.total_bytes, traffic.n_transfers, cfg).total_cycles
        key = (total, energy_total(report.accesses, cfg))
        logging.debug(f'{layer.kind} {mode}: {total} cycles')
        if best is None or key < best[0]:
            best = (key, mode, report)
    if best is None:
        raise ValueError('select_mode needs the tiling of at least one mode')
    return best[1], best[2]
