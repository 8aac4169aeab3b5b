import functools
import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np

from dataflow import DataflowMode, conv_geometry, mode_cycles, total_layer_cycles
from dataflow.geometry import ConvGeometry
from hwmodel import AcceleratorConfig
from netir import LayerKind, TensorShape
from tiler.errors import InfeasiblePlanError, InfeasibleTilingError

"""Loop tiling of one conv/fc layer against the global buffer.

The x (output columns), y (output rows), c (input channels of a group) and k (output channels of a group) loops are
split into tiles; groups are tiled as an extra outermost loop. The kernel loops are never tiled. A tensor is fetched
again for every iteration of a loop it does not depend on that runs outside its innermost dependent loop:
input depends on x, y, c; weights on c, k; outputs on x, y, k.

Input tiles carry their halo. Along each axis the tiles cover the input without gaps (the first tile starts at row 0,
the last ends at the last row) and overlapping halo rows are charged once per tile. Rows skipped by a stride larger
than the kernel are streamed in with the following tile and dropped: they cost DRAM traffic but no buffer space.

A layer that fits the buffer whole gets the identity plan: every tensor moved once, in three transfers. Otherwise
every combination of candidate tile sizes (powers of two below the extent, plus the extent) and loop order is
evaluated, and the cheapest by (estimated layer cycles, DRAM bytes, plan encoding) wins.
"""

LOOPS = ('x', 'y', 'c', 'k')
ALL_ORDERS = list(itertools.permutations(LOOPS))
INPUT_LOOPS = frozenset('xyc')
WEIGHT_LOOPS = frozenset('ck')
OUTPUT_LOOPS = frozenset('xyk')
IDENTITY_TRANSFERS = 3


@dataclass(frozen=True)
class TilingPlan:
    tile_x: int
    tile_y: int
    tile_c: int
    tile_k: int
    loop_order: Tuple[str, ...] = LOOPS
    tile_g: int = 1
    reload_factors: Tuple[int, int, int] = (1, 1, 1)

    def encode(self) -> str:
        return (f'x{self.tile_x}.y{self.tile_y}.c{self.tile_c}.k{self.tile_k}.g{self.tile_g}.'
                f'{"".join(self.loop_order)}')

    def __str__(self):
        return self.encode()


@dataclass(frozen=True)
class TrafficBreakdown:
    input_bytes: int
    weight_bytes: int
    output_bytes: int
    n_transfers: int

    @property
    def total_bytes(self) -> int:
        return self.input_bytes + self.weight_bytes + self.output_bytes


def tile_candidates(extent: int) -> List[int]:
    candidates = []
    size = 1
    while size < extent:
        candidates.append(size)
        size *= 2
    return candidates + [extent]


def input_extent(tile: int, stride: int, kernel: int, in_extent: int) -> int:
    """Input rows one tile of `tile` output rows needs, halo included."""
    return min(in_extent, (tile - 1) * stride + kernel)


def input_extent_sum(out_extent: int, tile: int, stride: int, pad: int, kernel: int, in_extent: int) -> int:
    """Input rows read by all tiles along one axis, halo rows counted once per tile.

    The tiles cover the input contiguously: rows a stride larger than the kernel skips between two tiles are read
    with the following tile, so the sum is never below the input extent.
    """
    total = previous_high = 0
    for start in range(0, out_extent, tile):
        end = min(out_extent, start + tile)
        low = 0 if start == 0 else min(previous_high, max(0, start * stride - pad))
        high = in_extent if end == out_extent else min(in_extent, (end - 1) * stride - pad + kernel)
        total += high - low
        previous_high = high
    return total


def footprint(layer: LayerKind, in_shape: TensorShape, element_bytes: int) -> int:
    """Bytes of the whole layer's input, weights and output."""
    geometry = conv_geometry(layer, in_shape)
    return element_bytes * (geometry.input_elements + geometry.weights + geometry.output_elements)


def needs_tiling(layer: LayerKind, in_shape: TensorShape, cfg: AcceleratorConfig) -> bool:
    return footprint(layer, in_shape, cfg.element_bytes) > cfg.buffer_bytes


def tile_footprint(geometry: ConvGeometry, plan: TilingPlan, element_bytes: int) -> int:
    in_h = input_extent(plan.tile_y, geometry.stride, geometry.kernel_h, geometry.in_h)
    in_w = input_extent(plan.tile_x, geometry.stride, geometry.kernel_w, geometry.in_w)
    per_group = (plan.tile_c * in_h * in_w
                 + geometry.kernel_h * geometry.kernel_w * plan.tile_c * plan.tile_k
                 + plan.tile_k * plan.tile_y * plan.tile_x)
    return element_bytes * plan.tile_g * per_group


def _reload_and_fetches(order, dependencies, trips):
    """Reload factor and number of tile fetches of one tensor under a loop order, outermost loop first."""
    innermost = max(position for position, loop in enumerate(order) if loop in dependencies)
    reload = fetches = 1
    for loop in order[:innermost + 1]:
        fetches = fetches * trips[loop]
        if loop not in dependencies:
            reload = reload * trips[loop]
    return reload, fetches


def identity_plan(geometry: ConvGeometry) -> TilingPlan:
    return TilingPlan(geometry.out_w, geometry.out_h, geometry.group_in_channels, geometry.group_out_channels,
                      LOOPS, geometry.groups)


def _check_plan(geometry: ConvGeometry, plan: TilingPlan):
    bounds = (('tile_x', geometry.out_w), ('tile_y', geometry.out_h), ('tile_c', geometry.group_in_channels),
              ('tile_k', geometry.group_out_channels), ('tile_g', geometry.groups))
    for name, bound in bounds:
        value = getattr(plan, name)
        if not 1 <= value <= bound:
            raise InfeasiblePlanError(f'{name} must be in [1, {bound}], got {value}')
    if sorted(plan.loop_order) != sorted(LOOPS):
        raise InfeasiblePlanError(f'loop order must be a permutation of {LOOPS}, got {plan.loop_order}')


def plan_traffic(geometry: ConvGeometry, plan: TilingPlan, element_bytes: int) -> Tuple[TrafficBreakdown,
                                                                                        Tuple[int, int, int]]:
    _check_plan(geometry, plan)
    trips = {
        'x': math.ceil(geometry.out_w / plan.tile_x),
        'y': math.ceil(geometry.out_h / plan.tile_y),
        'c': math.ceil(geometry.group_in_channels / plan.tile_c),
        'k': math.ceil(geometry.group_out_channels / plan.tile_k),
    }
    group_trips = math.ceil(geometry.groups / plan.tile_g)
    rows = input_extent_sum(geometry.out_h, plan.tile_y, geometry.stride, geometry.pad_h, geometry.kernel_h,
                            geometry.in_h)
    cols = input_extent_sum(geometry.out_w, plan.tile_x, geometry.stride, geometry.pad_w, geometry.kernel_w,
                            geometry.in_w)
    input_reload, input_fetches = _reload_and_fetches(plan.loop_order, INPUT_LOOPS, trips)
    weight_reload, weight_fetches = _reload_and_fetches(plan.loop_order, WEIGHT_LOOPS, trips)
    output_reload, output_fetches = _reload_and_fetches(plan.loop_order, OUTPUT_LOOPS, trips)
    breakdown = TrafficBreakdown(
        input_bytes=element_bytes * geometry.in_channels * rows * cols * input_reload,
        weight_bytes=element_bytes * geometry.weights * weight_reload,
        output_bytes=element_bytes * geometry.output_elements * output_reload,
        n_transfers=group_trips * (input_fetches + weight_fetches + output_fetches))
    return breakdown, (input_reload, weight_reload, output_reload)


def traffic(layer: LayerKind, in_shape: TensorShape, plan: TilingPlan, element_bytes: int) -> TrafficBreakdown:
    """DRAM traffic of a given plan.

    :raises InfeasiblePlanError: When a tile extent is out of range or the loop order is not a permutation of x/y/c/k.
    """
    return plan_traffic(conv_geometry(layer, in_shape), plan, element_bytes)[0]


def plan_cost(compute_cycles: int, breakdown: TrafficBreakdown, cfg: AcceleratorConfig) -> Tuple[int, int]:
    """The search objective: estimated layer cycles, then DRAM bytes."""
    cycles = total_layer_cycles(compute_cycles, breakdown.total_bytes, breakdown.n_transfers, cfg).total_cycles
    return cycles, breakdown.total_bytes


def _candidate_grid(geometry: ConvGeometry, element_bytes: int) -> Dict[str, np.ndarray]:
    axes = {
        'x': tile_candidates(geometry.out_w),
        'y': tile_candidates(geometry.out_h),
        'c': tile_candidates(geometry.group_in_channels),
        'k': tile_candidates(geometry.group_out_channels),
        'g': tile_candidates(geometry.groups),
    }
    grid = dict(zip(axes, (a.ravel() for a in np.meshgrid(
        *(np.array(values, dtype=np.int64) for values in axes.values()), indexing='ij'))))

    def per_tile(values, function):
        table = {value: function(value) for value in values}
        return np.vectorize(table.__getitem__, otypes=[np.int64])

    in_h = per_tile(axes['y'], lambda t: input_extent(t, geometry.stride, geometry.kernel_h, geometry.in_h))
    in_w = per_tile(axes['x'], lambda t: input_extent(t, geometry.stride, geometry.kernel_w, geometry.in_w))
    rows = per_tile(axes['y'], lambda t: input_extent_sum(geometry.out_h, t, geometry.stride, geometry.pad_h,
                                                          geometry.kernel_h, geometry.in_h))
    cols = per_tile(axes['x'], lambda t: input_extent_sum(geometry.out_w, t, geometry.stride, geometry.pad_w,
                                                          geometry.kernel_w, geometry.in_w))
    grid['working_set'] = element_bytes * grid['g'] * (
        grid['c'] * in_h(grid['y']) * in_w(grid['x'])
        + geometry.kernel_h * geometry.kernel_w * grid['c'] * grid['k']
        + grid['k'] * grid['y'] * grid['x'])
    grid['input_bytes'] = element_bytes * geometry.in_channels * rows(grid['y']) * cols(grid['x'])
    return grid


def _vector_reload(order, dependencies, trips):
    innermost = max(position for position, loop in enumerate(order) if loop in dependencies)
    reload = np.ones_like(trips['x'])
    fetches = np.ones_like(trips['x'])
    for loop in order[:innermost + 1]:
        fetches = fetches * trips[loop]
        if loop not in dependencies:
            reload = reload * trips[loop]
    return reload, fetches


@functools.lru_cache(maxsize=4096)
def _search(geometry: ConvGeometry, buffer_bytes: int, element_bytes: int, bytes_per_cycle: Fraction,
            latency: int, compute_cycles: int) -> Tuple[TilingPlan, TrafficBreakdown]:
    grid = _candidate_grid(geometry, element_bytes)
    feasible = grid['working_set'] <= buffer_bytes
    if not feasible.any():
        raise InfeasibleTilingError(int(grid['working_set'].min()), buffer_bytes)
    grid = {name: values[feasible] for name, values in grid.items()}

    trips = {
        'x': -(-geometry.out_w // grid['x']),
        'y': -(-geometry.out_h // grid['y']),
        'c': -(-geometry.group_in_channels // grid['c']),
        'k': -(-geometry.group_out_channels // grid['k']),
    }
    group_trips = -(-geometry.groups // grid['g'])
    weight_bytes = element_bytes * geometry.weights
    output_bytes = element_bytes * geometry.output_elements

    cycles, total_bytes = [], []
    for order in ALL_ORDERS:
        input_reload, input_fetches = _vector_reload(order, INPUT_LOOPS, trips)
        weight_reload, weight_fetches = _vector_reload(order, WEIGHT_LOOPS, trips)
        output_reload, output_fetches = _vector_reload(order, OUTPUT_LOOPS, trips)
        order_bytes = grid['input_bytes'] * input_reload + weight_bytes * weight_reload + output_bytes * output_reload
        transfers = group_trips * (input_fetches + weight_fetches + output_fetches)
        dram = -(-(order_bytes * bytes_per_cycle.denominator) // bytes_per_cycle.numerator)
        cycles.append(np.maximum(compute_cycles, dram) + transfers * latency)
        total_bytes.append(order_bytes)
    cycles = np.stack(cycles)
    total_bytes = np.stack(total_bytes)

    fastest = cycles == cycles.min()
    cheapest = fastest & (total_bytes == total_bytes[fastest].min())
    tied = []
    for order_index, candidate in zip(*np.nonzero(cheapest)):
        tied.append(TilingPlan(int(grid['x'][candidate]), int(grid['y'][candidate]), int(grid['c'][candidate]),
                               int(grid['k'][candidate]), ALL_ORDERS[order_index], int(grid['g'][candidate])))
    plan = min(tied, key=TilingPlan.encode)
    breakdown, reload_factors = plan_traffic(geometry, plan, element_bytes)
    plan = TilingPlan(plan.tile_x, plan.tile_y, plan.tile_c, plan.tile_k, plan.loop_order, plan.tile_g,
                      reload_factors)
    logging.debug(f'Tiling search: {int(feasible.sum())} feasible tile shapes x {len(ALL_ORDERS)} orders, '
                  f'chose {plan} with {breakdown.total_bytes} bytes')
    return plan, breakdown


def search_geometry(geometry: ConvGeometry, cfg: AcceleratorConfig,
                    compute_cycles: int) -> Tuple[TilingPlan, TrafficBreakdown]:
    whole = geometry.input_elements + geometry.weights + geometry.output_elements
    if cfg.element_bytes * whole <= cfg.buffer_bytes:
        breakdown = TrafficBreakdown(cfg.element_bytes * geometry.input_elements,
                                     cfg.element_bytes * geometry.weights,
                                     cfg.element_bytes * geometry.output_elements,
                                     IDENTITY_TRANSFERS)
        return identity_plan(geometry), breakdown
    return _search(geometry, cfg.buffer_bytes, cfg.element_bytes, cfg.dram_bytes_per_cycle,
                   cfg.dram_latency_cycles, compute_cycles)


def search_tiling(layer: LayerKind, in_shape: TensorShape, cfg: AcceleratorConfig, mode: DataflowMode,
                  compute_cycles: Optional[int] = None) -> Tuple[TilingPlan, TrafficBreakdown]:
    """Choose the tiling of one layer for one dataflow mode.

    :param compute_cycles: The mode's compute cycles, computed from the dataflow model when omitted.
    :return: The plan and its DRAM traffic.
    :raises InfeasibleTilingError: When no candidate tile fits the buffer.
    """
    if compute_cycles is None:
        compute_cycles = mode_cycles(layer, in_shape, cfg, mode).compute_cycles
    return search_geometry(conv_geometry(layer, in_shape), cfg, compute_cycles)
