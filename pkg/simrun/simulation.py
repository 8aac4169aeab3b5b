import dataclasses
import functools
import logging
import multiprocessing
import operator
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

from tqdm import tqdm

from dataflow import (AccessCounts, DataflowError, DataflowMode, conv_geometry, elementwise_cycles, is_elementwise,
                      mode_cycles, select_mode, total_layer_cycles)
from hwmodel import AcceleratorConfig, ConfigError, EnergyBreakdown, EnergyCostTable
from hwmodel.accelerator import DEFAULT_ELEMENT_BYTES, KB
from netir import (Conv, Input, LayerGraph, LayerKind, Pool, TensorShape, ValidationError, infer_shapes,
                   output_shape, param_count, validate)
from simrun import simulation_logging
from simrun.errors import SimulationError
from tiler import TilingError, TilingPlan, search_tiling
from zoo import build_variant

"""Layer-by-layer simulation of a network on one accelerator config, and the studies built on it.

Each conv/fc layer is tiled for both dataflow modes and runs in whichever mode finishes first (lower energy, then WS,
break ties). Compute and DRAM streaming overlap, and every tile transfer pays the DRAM latency on top:
```
    total_cycles = max(compute_cycles, dram_cycles) + n_transfers * dram_latency_cycles
```
Pooling, global average pooling and adds stream their operands alongside the neighbouring convolutions: their DRAM
bytes count towards traffic and energy, their time is compute only.

Layer results are memoized on (layer, input shapes, config, forced mode), so a network repeating a block shape, or a
study simulating the same network twice, costs one simulation per distinct layer.

Usage:
```
    graph = zoo.build_variant('1.0-SqNxt-23v5')
    result = simulate_network(graph, hwmodel.preset('16x16_128KB'))
    result.total_cycles, result.total_energy

    rows = compare(['SqueezeNet-v1.0', '1.0-SqNxt-23v5'], cfg)      # normalized time and energy
    series = figure_data(result, merge_same_config=True)            # per-layer cycles and efficiency
```
"""

DEFAULT_SWEEP_PE_ARRAYS = ((8, 8), (16, 16))
DEFAULT_SWEEP_BUFFERS = (32 * KB, 128 * KB)
NO_TILING = '-'


@dataclass(frozen=True)
class LayerResult:
    """One simulated layer. `macs` is the dense count; `accesses.macs` is what executed (sparsity-reduced in OS)."""
    node_id: str
    kind: str
    mode: DataflowMode
    plan: Optional[TilingPlan]
    compute_cycles: int
    dram_cycles: int
    total_cycles: int
    n_transfers: int
    macs: int
    accesses: AccessCounts
    energy: EnergyBreakdown
    pe_count: int
    signature: Tuple = ()

    @property
    def efficiency(self) -> float:
        """Dense MACs per cycle. May exceed the PE count when OS skips zero weights."""
        return self.macs / self.total_cycles if self.total_cycles else 0.0

    @property
    def utilization(self) -> float:
        return self.efficiency / self.pe_count

    @property
    def tiles(self) -> str:
        return self.plan.encode() if self.plan else NO_TILING


@dataclass(frozen=True)
class NetworkResult:
    network: str
    config: str
    layers: Tuple[LayerResult, ...]
    params: int
    pe_count: int

    @property
    def total_cycles(self) -> int:
        return sum(layer.total_cycles for layer in self.layers)

    @property
    def compute_cycles(self) -> int:
        return sum(layer.compute_cycles for layer in self.layers)

    @property
    def total_macs(self) -> int:
        return sum(layer.macs for layer in self.layers)

    @property
    def dram_bytes(self) -> int:
        return sum(layer.accesses.dram_bytes for layer in self.layers)

    @property
    def energy(self) -> EnergyBreakdown:
        return EnergyBreakdown(*(sum((getattr(layer.energy, name) for layer in self.layers), 0.0)
                                 for name in EnergyBreakdown._fields))

    @property
    def total_energy(self) -> float:
        return self.energy.total

    @property
    def efficiency(self) -> float:
        return group_efficiency(self.layers)

    @property
    def utilization(self) -> float:
        return self.efficiency / self.pe_count

    def layer(self, node_id: str) -> LayerResult:
        for layer in self.layers:
            if layer.node_id == node_id:
                return layer
        raise KeyError(node_id)

    def share(self, node_id: str) -> float:
        """Fraction of the network's cycles spent in one layer."""
        return self.layer(node_id).total_cycles / self.total_cycles if self.total_cycles else 0.0


class ComparisonRow(NamedTuple):
    name: str
    params: int
    macs: int
    total_cycles: int
    normalized_time: float
    total_energy: float
    normalized_energy: float
    efficiency: float


class FigureEntry(NamedTuple):
    """One bar of the per-layer cycle figure: a layer, or several with the same configuration summed."""
    name: str
    members: Tuple[str, ...]
    cycles: int
    macs: int
    efficiency: float


class SweepPoint(NamedTuple):
    config: AcceleratorConfig
    result: NetworkResult


def group_efficiency(layers: Iterable[LayerResult]) -> float:
    """Dense MACs per cycle over a set of layers, weighting each by its cycles."""
    layers = list(layers)
    cycles = sum(layer.total_cycles for layer in layers)
    return sum(layer.macs for layer in layers) / cycles if cycles else 0.0


def energy_of(accesses: AccessCounts, table: EnergyCostTable,
              element_bytes: int = DEFAULT_ELEMENT_BYTES) -> EnergyBreakdown:
    """Normalized energy of a set of counts. DRAM is charged per element moved, not per byte."""
    return table.weigh(accesses.macs, accesses.rf_accesses, accesses.buffer_accesses,
                       Fraction(accesses.dram_bytes, element_bytes))


def layer_signature(layer: LayerKind, in_shapes: Sequence[TensorShape], out_shape: TensorShape) -> Tuple:
    """Layers with equal signatures have the same configuration and are summed together in figure data."""
    if isinstance(layer, Conv):
        return (layer.kind, layer.kernel_h, layer.kernel_w, layer.stride, in_shapes[0].channels, layer.out_channels,
                layer.groups, out_shape)
    if isinstance(layer, Pool):
        return layer.kind, layer.pool_kind.value, layer.kernel, layer.stride, in_shapes[0].channels, out_shape
    return layer.kind, in_shapes[0].channels, out_shape


@functools.lru_cache(maxsize=4096)
def _simulate_kind(layer: LayerKind, in_shapes: Tuple[TensorShape, ...], out_shape: TensorShape,
                   cfg: AcceleratorConfig, mode: Optional[DataflowMode]) -> LayerResult:
    signature = layer_signature(layer, in_shapes, out_shape)
    if is_elementwise(layer):
        report = elementwise_cycles(layer, in_shapes, out_shape, cfg)
        # The operand stream overlaps the neighbouring convolutions: bytes count for energy, not for cycles.
        return LayerResult(
            node_id='', kind=layer.kind, mode=report.mode, plan=None,
            compute_cycles=report.compute_cycles, dram_cycles=0, total_cycles=report.compute_cycles, n_transfers=0,
            macs=0, accesses=report.accesses, energy=energy_of(report.accesses, cfg.energy, cfg.element_bytes),
            pe_count=cfg.pe_count, signature=signature)

    in_shape = in_shapes[0]
    modes = [mode] if mode else list(DataflowMode)
    tilings = {}
    for candidate in modes:
        compute = mode_cycles(layer, in_shape, cfg, candidate).compute_cycles
        tilings[candidate] = search_tiling(layer, in_shape, cfg, candidate, compute)
    chosen, report = select_mode(layer, in_shape, cfg, {m: traffic for m, (_, traffic) in tilings.items()})
    plan, traffic = tilings[chosen]
    timing = total_layer_cycles(report.compute_cycles, traffic.total_bytes, traffic.n_transfers, cfg)
    return LayerResult(
        node_id='', kind=layer.kind, mode=chosen, plan=plan,
        compute_cycles=report.compute_cycles, dram_cycles=timing.dram_cycles, total_cycles=timing.total_cycles,
        n_transfers=traffic.n_transfers, macs=conv_geometry(layer, in_shape).macs, accesses=report.accesses,
        energy=energy_of(report.accesses, cfg.energy, cfg.element_bytes), pe_count=cfg.pe_count,
        signature=signature)


def simulate_layer(layer: LayerKind, in_shapes: Union[TensorShape, Sequence[TensorShape]], cfg: AcceleratorConfig,
                   out_shape: Optional[TensorShape] = None, node_id: str = '',
                   mode: Optional[DataflowMode] = None) -> LayerResult:
    """Simulate one layer.

    :param in_shapes: The input shape, or every operand's shape for an add.
    :param out_shape: The output shape, inferred when omitted.
    :param mode: Force a dataflow for conv/fc layers instead of picking the faster one.
    :raises InfeasibleTilingError: When the layer cannot be tiled into the buffer.
    :raises UnsupportedLayerError: For input layers and unknown kinds.
    """
    if isinstance(in_shapes, TensorShape):
        in_shapes = (in_shapes,)
    in_shapes = tuple(in_shapes)
    if out_shape is None:
        out_shape = output_shape(layer, in_shapes)
    result = _simulate_kind(layer, in_shapes, out_shape, cfg, mode)
    logging.debug(f'{node_id or layer.kind}: {result.mode} {result.tiles} '
                  f'compute={result.compute_cycles} total={result.total_cycles}')
    return dataclasses.replace(result, node_id=node_id)


def simulate_network(graph: LayerGraph, cfg: AcceleratorConfig, mode: Optional[DataflowMode] = None) -> NetworkResult:
    """Simulate every layer of a graph in topological order. Input nodes are free and produce no result.

    :raises ValidationError: When the graph has diagnostics.
    :raises SimulationError: Naming the layer that could not be simulated.
    """
    diagnostics = validate(graph)
    if diagnostics:
        raise ValidationError(graph.name, diagnostics)
    if not graph.is_annotated:
        graph = infer_shapes(graph)

    layers = []
    for node in graph.nodes:
        if isinstance(node.kind, Input):
            continue
        try:
            layers.append(simulate_layer(node.kind, graph.input_shapes(node.id), cfg, graph.output_shape(node.id),
                                         node.id, mode))
        except (DataflowError, TilingError) as e:
            raise SimulationError(node.id, e) from e
    result = NetworkResult(graph.name, cfg.name, tuple(layers), param_count(graph).total, cfg.pe_count)
    logging.info(f'Simulated {graph.name} on {cfg.name}: {result.total_cycles} cycles, '
                 f'energy {result.total_energy:.4g}')
    return result


def _as_graph(network: Union[str, LayerGraph]) -> LayerGraph:
    return build_variant(network) if isinstance(network, str) else network


def compare(networks: Sequence[Union[str, LayerGraph]], cfg: AcceleratorConfig) -> List[ComparisonRow]:
    """Simulate several networks on one config, normalizing time and energy by the best of the set.

    :param networks: Catalog names or graphs, reported in the given order.
    :raises UnknownNetworkError: For a name outside the catalog.
    """
    if not networks:
        raise ValueError('compare needs at least one network')
    results = [simulate_network(_as_graph(network), cfg) for network in networks]
    fastest = min(result.total_cycles for result in results)
    lowest = min(result.total_energy for result in results)
    return [
        ComparisonRow(
            name=result.network,
            params=result.params,
            macs=result.total_macs,
            total_cycles=result.total_cycles,
            normalized_time=result.total_cycles / fastest if fastest else 1.0,
            total_energy=result.total_energy,
            normalized_energy=result.total_energy / lowest if lowest else 1.0,
            efficiency=result.utilization)
        for result in results
    ]


def figure_data(result: NetworkResult, merge_same_config: bool = True) -> List[FigureEntry]:
    """Per-layer cycles and efficiency, in network order.

    When merging, every layer sharing a configuration with an earlier one is summed into that layer's entry and the
    efficiency is recomputed from the summed MACs and cycles.
    """
    groups: Dict[Tuple, List[LayerResult]] = {}
    for layer in result.layers:
        key = layer.signature if merge_same_config else (layer.node_id,)
        groups.setdefault(key, []).append(layer)
    return [
        FigureEntry(
            name=members[0].node_id,
            members=tuple(layer.node_id for layer in members),
            cycles=sum(layer.total_cycles for layer in members),
            macs=sum(layer.macs for layer in members),
            efficiency=group_efficiency(members))
        for members in groups.values()
    ]


def sweep_grid(base: AcceleratorConfig, pe_arrays: Sequence[Tuple[int, int]] = DEFAULT_SWEEP_PE_ARRAYS,
               buffers: Sequence[int] = DEFAULT_SWEEP_BUFFERS,
               sparsities: Optional[Sequence[Fraction]] = None) -> List[AcceleratorConfig]:
    """Every combination of array size, buffer size and sparsity applied to a base config, array size outermost.

    :raises ConfigError: When a grid axis is empty or a grid value is out of range.
    """
    sparsities = sparsities if sparsities is not None else [base.weight_sparsity]
    for axis, values in (('pe', pe_arrays), ('buffer', buffers), ('sparsity', sparsities)):
        if not values:
            raise ConfigError('grid axis is empty', axis)
    configs = []
    for (rows, cols), buffer_bytes, sparsity in ((p, b, s) for p in pe_arrays for b in buffers for s in sparsities):
        cfg = base.replace(pe_rows=rows, pe_cols=cols, buffer_bytes=buffer_bytes, weight_sparsity=sparsity)
        configs.append(cfg.replace(name=f'{cfg.label}_s{float(cfg.weight_sparsity):g}'))
    return configs


def _simulate_point(point: Tuple[int, AcceleratorConfig], graph: LayerGraph, logging_queue=None,
                    log_level=None) -> Tuple[int, NetworkResult]:
    point_id, cfg = point
    logger = simulation_logging.get_logger(point_id, logging_queue, log_level)
    logger.debug(f'Simulating {graph.name} on {cfg.name}')
    result = simulate_network(graph, cfg)
    logger.info(f'{cfg.name}: {result.total_cycles} cycles')
    return point_id, result


def sweep(graph: LayerGraph, configs: Sequence[AcceleratorConfig], use_multiprocessing: bool = True,
          num_processes: Optional[int] = None, progress: bool = True, log_level=None) -> List[SweepPoint]:
    """Simulate a network at every grid point. Results come back in grid order whatever order points finish in.

    In multiprocessing mode the points are spread over a process pool; workers log through a queue drained by a
    thread in this process so that lines from different points never interleave mid-line.
    """
    points = list(enumerate(configs))
    if not use_multiprocessing or num_processes == 1 or len(points) < 2:
        logging.debug(f'Sweeping {len(points)} points in a single process.')
        results = list(map(functools.partial(_simulate_point, graph=graph),
                           tqdm(points, total=len(points), disable=not progress)))
    else:
        num_processes = min(num_processes or multiprocessing.cpu_count(), len(points))
        with multiprocessing.Manager() as manager:
            logging_queue = manager.Queue()
            logging_thread = simulation_logging.LoggerThread(logging_queue)
            logging_thread.start()
            pool = multiprocessing.Pool(processes=num_processes)
            logging.info(f'Sweeping {len(points)} points over ({num_processes}) processes')
            try:
                results = list(tqdm(
                    pool.imap_unordered(
                        functools.partial(_simulate_point, graph=graph, logging_queue=logging_queue,
                                          log_level=log_level),
                        points),
                    total=len(points),
                    disable=not progress))
            finally:
                pool.close()
                pool.join()
                logging_thread.stop()
                logging_thread.join()
    results.sort(key=operator.itemgetter(0))
    return [SweepPoint(configs[point_id], result) for point_id, result in results]
