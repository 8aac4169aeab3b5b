import logging
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import List, NamedTuple, Optional, Tuple, Union

from netir import GraphBuilder, LayerGraph, PoolKind, TensorShape
from zoo.errors import SpecError

"""Builder for the SqueezeNext family.

A network is conv1 (+ max-pool), four stages of blocks, a 1x1 bottleneck conv, global average pooling and a fully
connected classifier. Each block is a two-stage 1x1 bottleneck, a separable 1x3 / 3x1 pair, and a 1x1 expansion back
to the stage width, summed with the skip path.

The first 1x1 of a block keeps, quarters or halves its input width:
* stride-2 blocks (first block of stages 2-4) keep it, the stride sitting on that first 1x1;
* blocks that narrow the width (input wider than the stage, e.g. 64 -> 32 after conv1) quarter it;
* every other block halves it, giving the regular C -> C/2 -> C/4 -> C/2 -> C/2 -> C chain.
The skip path is a 1x1 projection (stride s) whenever the block changes resolution or width, else identity. With
group size 2 every 1x1 of a block, projection included, is a 2-group convolution.

Node ids carry the stage and block: `s2b1_reduce1`, `s2b1_sep1x3`, `s2b1_add`, ... so per-stage aggregates can be
recovered from any simulation report with `stage_of`.
"""

DEFAULT_WIDTH_MULT = Fraction(1)
DEFAULT_DEPTH_DIST = (6, 6, 8, 1)
DEFAULT_CONV1_KERNEL = 7
DEFAULT_CONV1_STRIDE = 2
DEFAULT_CONV1_CHANNELS = 64
DEFAULT_STAGE_WIDTHS = (32, 64, 128, 256)
DEFAULT_FC_BOTTLENECK_CHANNELS = 128
DEFAULT_NUM_CLASSES = 1000
DEFAULT_INPUT_SIZE = 227
NUM_STAGES = 4
POOL1_KERNEL = 3
POOL1_STRIDE = 2

STAGE_ID_PATTERN = re.compile(r'^s(\d+)b(\d+)_')


def _as_fraction(value: Union[Fraction, float, int, str]) -> Fraction:
    # str() first so 1.5 and '1.5' both give exactly 3/2.
    return value if isinstance(value, Fraction) else Fraction(str(value))


def _exact(value: Fraction, what: str) -> int:
    if value.denominator != 1:
        raise SpecError(f'{what} is not an integer: {value}')
    return int(value)


class BlockPlan(NamedTuple):
    stage: int
    index: int
    in_channels: int
    out_channels: int
    stride: int
    reduced_channels: int
    squeezed_channels: int
    projection: bool
    horizontal_first: bool

    @property
    def prefix(self) -> str:
        return f's{self.stage}b{self.index}'


@dataclass(frozen=True)
class SqueezeNextSpec:
    width_mult: Fraction = DEFAULT_WIDTH_MULT
    depth_dist: Tuple[int, ...] = DEFAULT_DEPTH_DIST
    conv1_kernel: int = DEFAULT_CONV1_KERNEL
    conv1_stride: int = DEFAULT_CONV1_STRIDE
    group_size: int = 1
    stage_widths: Tuple[int, ...] = DEFAULT_STAGE_WIDTHS
    fc_bottleneck_channels: int = DEFAULT_FC_BOTTLENECK_CHANNELS
    num_classes: int = DEFAULT_NUM_CLASSES
    conv1_channels: int = DEFAULT_CONV1_CHANNELS
    input_size: int = DEFAULT_INPUT_SIZE

    def __post_init__(self):
        object.__setattr__(self, 'width_mult', _as_fraction(self.width_mult))
        object.__setattr__(self, 'depth_dist', tuple(self.depth_dist))
        object.__setattr__(self, 'stage_widths', tuple(self.stage_widths))
        if self.width_mult <= 0:
            raise SpecError(f'width_mult must be positive, got {self.width_mult}')
        if len(self.depth_dist) != NUM_STAGES:
            raise SpecError(f'depth_dist must list {NUM_STAGES} stages, got {list(self.depth_dist)}')
        if any(depth < 1 for depth in self.depth_dist):
            raise SpecError(f'every stage needs at least one block, got {list(self.depth_dist)}')
        if len(self.stage_widths) != NUM_STAGES:
            raise SpecError(f'stage_widths must list {NUM_STAGES} stages, got {list(self.stage_widths)}')
        if self.group_size not in (1, 2):
            raise SpecError(f'group_size must be 1 or 2, got {self.group_size}')
        for name in ('conv1_kernel', 'conv1_stride', 'fc_bottleneck_channels', 'num_classes', 'conv1_channels',
                     'input_size'):
            if getattr(self, name) < 1:
                raise SpecError(f'{name} must be positive, got {getattr(self, name)}')

    @property
    def module_count(self) -> int:
        """Blocks plus conv1 plus the final bottleneck conv: the number in a name like 1.0-SqNxt-23."""
        return sum(self.depth_dist) + 2

    @property
    def width_label(self) -> str:
        return f'{float(self.width_mult):.1f}'

    @property
    def default_name(self) -> str:
        group = 'G-' if self.group_size > 1 else ''
        return f'{self.width_label}-{group}SqNxt-{self.module_count}'

    def stage_width(self, stage: int) -> int:
        return _exact(self.stage_widths[stage - 1] * self.width_mult, f'stage {stage} width')

    @property
    def bottleneck_channels(self) -> int:
        return _exact(self.fc_bottleneck_channels * self.width_mult, 'bottleneck width')

    def block_plans(self) -> List[BlockPlan]:
        """Channel arithmetic of every block, in network order. Raises SpecError on a non-integral width."""
        plans = []
        in_channels = self.conv1_channels
        block_number = 0
        for stage in range(1, NUM_STAGES + 1):
            width = self.stage_width(stage)
            for index in range(1, self.depth_dist[stage - 1] + 1):
                stride = 2 if stage > 1 and index == 1 else 1
                if stride == 2:
                    ratio = Fraction(1)
                elif in_channels > width:
                    ratio = Fraction(1, 4)
                else:
                    ratio = Fraction(1, 2)
                what = f'block s{stage}b{index}'
                reduced = _exact(in_channels * ratio, f'{what} reduced width')
                squeezed = _exact(Fraction(reduced, 2), f'{what} squeezed width')
                for channels in (in_channels, reduced, squeezed, width):
                    if channels < self.group_size or channels % self.group_size:
                        raise SpecError(f'{what}: {channels} channels cannot be split into {self.group_size} groups')
                plans.append(BlockPlan(
                    stage=stage,
                    index=index,
                    in_channels=in_channels,
                    out_channels=width,
                    stride=stride,
                    reduced_channels=reduced,
                    squeezed_channels=squeezed,
                    projection=stride != 1 or in_channels != width,
                    horizontal_first=block_number % 2 == 0))
                in_channels = width
                block_number += 1
        return plans


def _add_block(builder: GraphBuilder, source: str, plan: BlockPlan, groups: int) -> str:
    p = plan.prefix
    x = builder.conv(f'{p}_reduce1', source, plan.reduced_channels, kernel=1, stride=plan.stride, groups=groups,
                     bn=True, relu=True)
    x = builder.conv(f'{p}_reduce2', x, plan.squeezed_channels, kernel=1, groups=groups, bn=True, relu=True)
    separable = [('sep1x3', (1, 3), (0, 1)), ('sep3x1', (3, 1), (1, 0))]
    if not plan.horizontal_first:
        separable.reverse()
    for suffix, kernel, pad in separable:
        x = builder.conv(f'{p}_{suffix}', x, plan.reduced_channels, kernel=kernel, pad=pad, bn=True, relu=True)
    x = builder.conv(f'{p}_expand', x, plan.out_channels, kernel=1, groups=groups, bn=True, relu=True)

    skip = source
    if plan.projection:
        skip = builder.conv(f'{p}_project', source, plan.out_channels, kernel=1, stride=plan.stride,
                            groups=groups, bn=True, relu=True)
    return builder.add(f'{p}_add', x, skip)


def build_squeezenext(spec: SqueezeNextSpec, name: Optional[str] = None) -> LayerGraph:
    """Build and shape-annotate a SqueezeNext graph.

    :param spec: Width, depth distribution, conv1 geometry and grouping.
    :param name: Graph name, defaults to the spec's canonical label.
    :return: The annotated LayerGraph.
    :raises SpecError: On channel counts that do not divide.
    """
    plans = spec.block_plans()
    builder = GraphBuilder(name or spec.default_name, TensorShape(3, spec.input_size, spec.input_size))
    x = builder.conv('conv1', builder.input_id, spec.conv1_channels, kernel=spec.conv1_kernel,
                     stride=spec.conv1_stride, bn=True, relu=True)
    x = builder.pool('pool1', x, POOL1_KERNEL, POOL1_STRIDE, pool_kind=PoolKind.MAX)
    for plan in plans:
        x = _add_block(builder, x, plan, spec.group_size)
    x = builder.conv('bottleneck', x, spec.bottleneck_channels, kernel=1, bn=True, relu=True)
    x = builder.global_avg_pool('pool_global', x)
    builder.fully_connected('fc', x, spec.num_classes)
    graph = builder.build()
    logging.debug(f'Built {graph.name}: {len(plans)} blocks, {len(graph.nodes)} nodes')
    return graph


def stage_of(node_id: str) -> Optional[int]:
    """Stage number of a block node id (`s1b3_expand` -> 1), None for stem and head layers."""
    match = STAGE_ID_PATTERN.match(node_id)
    return int(match.group(1)) if match else None
