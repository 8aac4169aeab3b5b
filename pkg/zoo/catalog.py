import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Tuple, Union

from netir import LayerGraph
from zoo import baselines
from zoo.errors import UnknownNetworkError
from zoo.squeezenext import SqueezeNextSpec, build_squeezenext

"""The closed catalog of named networks, with the published parameter and MAC counts attached as metadata.

Expected values are informational only: tolerances are a matter for whoever checks against them. Entries without a
builder (`buildable=False`) are reference rows, listed for comparison but never built.
"""

SOURCE_ACCURACY = 'accuracy-comparison'
SOURCE_WIDTH = 'width-variants'
SOURCE_HARDWARE = 'hardware-simulation'

DEPTH_23 = (6, 6, 8, 1)
DEPTH_34 = (8, 10, 13, 1)
DEPTH_44 = (10, 14, 17, 1)
DEPTH_V3 = (4, 8, 8, 1)
DEPTH_V4 = (2, 10, 8, 1)
DEPTH_V5 = (2, 4, 14, 1)
V2_CONV1_KERNEL = 5


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    description: str
    expected_params: Optional[int]
    expected_macs: Optional[int]
    source_table: str
    buildable: bool = True


def _squeezenext(width: str, depth: Tuple[int, ...] = DEPTH_23, conv1_kernel: int = 7,
                 group_size: int = 1) -> SqueezeNextSpec:
    return SqueezeNextSpec(width_mult=Fraction(width), depth_dist=depth, conv1_kernel=conv1_kernel,
                           group_size=group_size)


def _entry(name: str, description: str, params: Optional[float], macs: Optional[float], source: str,
           buildable: bool = True) -> CatalogEntry:
    return CatalogEntry(
        name=name,
        description=description,
        expected_params=round(params * 1e6) if params is not None else None,
        expected_macs=round(macs * 1e6) if macs is not None else None,
        source_table=source,
        buildable=buildable)


_ENTRIES = [
    (_entry('1.0-SqNxt-23', 'baseline SqueezeNext, depth [6,6,8,1], 7x7 conv1', 0.72, 282, SOURCE_HARDWARE),
     _squeezenext('1.0')),
    (_entry('1.0-G-SqNxt-23', '1.0-SqNxt-23 with group size 2 on block 1x1 convs', 0.54, None, SOURCE_ACCURACY),
     _squeezenext('1.0', group_size=2)),
    (_entry('1.0-SqNxt-23v2', '1.0-SqNxt-23 with a 5x5 conv1', 0.74, 228, SOURCE_HARDWARE),
     _squeezenext('1.0', conv1_kernel=V2_CONV1_KERNEL)),
    (_entry('1.0-SqNxt-23v3', 'v2 with depth [4,8,8,1]', 0.74, 228, SOURCE_HARDWARE),
     _squeezenext('1.0', DEPTH_V3, V2_CONV1_KERNEL)),
    (_entry('1.0-SqNxt-23v4', 'v2 with depth [2,10,8,1]', 0.77, 228, SOURCE_HARDWARE),
     _squeezenext('1.0', DEPTH_V4, V2_CONV1_KERNEL)),
    (_entry('1.0-SqNxt-23v5', 'v2 with depth [2,4,14,1]', 0.94, 228, SOURCE_HARDWARE),
     _squeezenext('1.0', DEPTH_V5, V2_CONV1_KERNEL)),
    (_entry('1.0-SqNxt-34', 'depth [8,10,13,1]', 1.0, None, SOURCE_ACCURACY),
     _squeezenext('1.0', DEPTH_34)),
    (_entry('1.0-SqNxt-44', 'depth [10,14,17,1]', 1.2, None, SOURCE_ACCURACY),
     _squeezenext('1.0', DEPTH_44)),
    (_entry('1.5-SqNxt-23', '1.5x wider 1.0-SqNxt-23', 1.4, None, SOURCE_WIDTH),
     _squeezenext('1.5')),
    (_entry('1.5-SqNxt-34', '1.5x wider 1.0-SqNxt-34', 2.1, None, SOURCE_WIDTH),
     _squeezenext('1.5', DEPTH_34)),
    (_entry('1.5-SqNxt-44', '1.5x wider 1.0-SqNxt-44', 2.6, None, SOURCE_WIDTH),
     _squeezenext('1.5', DEPTH_44)),
    (_entry('2.0-SqNxt-23', '2x wider 1.0-SqNxt-23', 2.4, 749, SOURCE_HARDWARE),
     _squeezenext('2.0')),
    (_entry('2.0-SqNxt-34', '2x wider 1.0-SqNxt-34', 3.8, None, SOURCE_WIDTH),
     _squeezenext('2.0', DEPTH_34)),
    (_entry('2.0-SqNxt-44', '2x wider 1.0-SqNxt-44', 4.4, None, SOURCE_WIDTH),
     _squeezenext('2.0', DEPTH_44)),
    (_entry('2.0-SqNxt-23v4', '2x wider 1.0-SqNxt-23v4', 2.56, 708, SOURCE_HARDWARE),
     _squeezenext('2.0', DEPTH_V4, V2_CONV1_KERNEL)),
    (_entry('2.0-SqNxt-23v5', '2x wider 1.0-SqNxt-23v5', 3.23, 708, SOURCE_HARDWARE),
     _squeezenext('2.0', DEPTH_V5, V2_CONV1_KERNEL)),
    (_entry('AlexNet', 'five convs and three FC layers, 227x227 input', 60.9, 725, SOURCE_HARDWARE),
     baselines.alexnet),
    (_entry('SqueezeNet-v1.0', 'fire modules, 7x7 conv1', 1.2, 837, SOURCE_HARDWARE),
     lambda: baselines.squeezenet('1.0')),
    (_entry('SqueezeNet-v1.1', 'fire modules, 3x3 conv1, earlier pooling', 1.2, 352, SOURCE_HARDWARE),
     lambda: baselines.squeezenet('1.1')),
    (_entry('MobileNet-1.0-224', 'depthwise-separable convs, 224x224 input', 4.2, 574, SOURCE_HARDWARE),
     baselines.mobilenet),
]

REFERENCE_ENTRIES = [
    _entry('Tiny-DarkNet', 'published counts only, no builder', 1.0, 495, SOURCE_HARDWARE, buildable=False),
]

Recipe = Union[SqueezeNextSpec, Callable[[], LayerGraph]]

RECIPES: Dict[str, Recipe] = {entry.name: recipe for entry, recipe in _ENTRIES}


def catalog(include_references: bool = False) -> List[CatalogEntry]:
    """Every catalog entry in a stable order, optionally followed by the reference rows."""
    entries = [entry for entry, _ in _ENTRIES]
    return entries + REFERENCE_ENTRIES if include_references else entries


def catalog_entry(name: str) -> CatalogEntry:
    for entry in catalog(include_references=True):
        if entry.name == name:
            return entry
    raise UnknownNetworkError(name)


def build_variant(name: str) -> LayerGraph:
    """Build the named catalog network.

    :param name: A catalog name such as '1.0-SqNxt-23v5' or 'AlexNet'.
    :return: The shape-annotated graph.
    :raises UnknownNetworkError: When the name is not in the catalog or is a reference row.
    """
    if name not in RECIPES:
        if any(entry.name == name for entry in REFERENCE_ENTRIES):
            raise UnknownNetworkError(name, 'reference row without a builder')
        raise UnknownNetworkError(name)
    logging.info(f'Building {name}')
    recipe = RECIPES[name]
    if isinstance(recipe, SqueezeNextSpec):
        return build_squeezenext(recipe, name=name)
    return recipe()
