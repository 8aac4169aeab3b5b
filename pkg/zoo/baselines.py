import logging
from typing import List, NamedTuple, Sequence

from netir import GraphBuilder, LayerGraph, TensorShape

"""Comparison networks built from their published layer tables: AlexNet, SqueezeNet v1.0 / v1.1 and MobileNet.

The IR has no concatenation, so SqueezeNet's fire modules are expressed without one. A fire module's output is kept as
its two expand branches ("parts"). By linearity, a convolution over the concatenated parts equals one partial
convolution per part summed by elementwise adds, with the bias carried by the first partial only; a pooling over the
parts is one pooling per part. Parameter and MAC totals are unchanged by the rewrite.

LRN and dropout are omitted: they hold no parameters and no MACs.
"""

ALEXNET_INPUT_SIZE = 227
SQUEEZENET_INPUT_SIZE = 227
MOBILENET_INPUT_SIZE = 224
NUM_CLASSES = 1000

# (depthwise stride, pointwise output channels) per depthwise-separable layer of MobileNet at width 1.0.
MOBILENET_LAYERS = [
    (1, 64), (2, 128), (1, 128), (2, 256), (1, 256), (2, 512),
    (1, 512), (1, 512), (1, 512), (1, 512), (1, 512),
    (2, 1024), (1, 1024),
]

# (squeeze, expand 1x1, expand 3x3) per fire module, fire2..fire9. Both SqueezeNet versions share them.
FIRE_MODULES = [
    (16, 64, 64), (16, 64, 64), (32, 128, 128), (32, 128, 128),
    (48, 192, 192), (48, 192, 192), (64, 256, 256), (64, 256, 256),
]


class Part(NamedTuple):
    node_id: str
    channels: int


def alexnet() -> LayerGraph:
    """AlexNet with the two-tower grouping of conv2, conv4 and conv5."""
    b = GraphBuilder('AlexNet', TensorShape(3, ALEXNET_INPUT_SIZE, ALEXNET_INPUT_SIZE))
    x = b.conv('conv1', b.input_id, 96, kernel=11, stride=4, bias=True, relu=True)
    x = b.pool('pool1', x, 3, 2)
    x = b.conv('conv2', x, 256, kernel=5, pad=2, groups=2, bias=True, relu=True)
    x = b.pool('pool2', x, 3, 2)
    x = b.conv('conv3', x, 384, kernel=3, pad=1, bias=True, relu=True)
    x = b.conv('conv4', x, 384, kernel=3, pad=1, groups=2, bias=True, relu=True)
    x = b.conv('conv5', x, 256, kernel=3, pad=1, groups=2, bias=True, relu=True)
    x = b.pool('pool5', x, 3, 2)
    x = b.fully_connected('fc6', x, 4096)
    x = b.fully_connected('fc7', x, 4096)
    b.fully_connected('fc8', x, NUM_CLASSES)
    return b.build()


def conv_over_parts(builder: GraphBuilder, node_id: str, parts: Sequence[Part], out_channels: int,
                    kernel: int = 1, pad: int = 0) -> str:
    """A convolution over the channel concatenation of `parts`, as partial convolutions joined by adds."""
    if len(parts) == 1:
        return builder.conv(node_id, parts[0].node_id, out_channels, kernel=kernel, pad=pad, bias=True, relu=True)

    partials = [
        builder.conv(f'{node_id}_part{i}', part.node_id, out_channels, kernel=kernel, pad=pad, bias=i == 0)
        for i, part in enumerate(parts)
    ]
    total = partials[0]
    for i, partial in enumerate(partials[1:], start=1):
        total = builder.add(node_id if i == len(partials) - 1 else f'{node_id}_sum{i}', total, partial)
    return total


def pool_parts(builder: GraphBuilder, node_id: str, parts: Sequence[Part]) -> List[Part]:
    return [
        Part(builder.pool(f'{node_id}_part{i}', part.node_id, 3, 2), part.channels)
        for i, part in enumerate(parts)
    ]


def fire(builder: GraphBuilder, node_id: str, parts: Sequence[Part], squeeze: int, expand1: int,
         expand3: int) -> List[Part]:
    x = conv_over_parts(builder, f'{node_id}_squeeze', parts, squeeze)
    e1 = builder.conv(f'{node_id}_expand1x1', x, expand1, kernel=1, bias=True, relu=True)
    e3 = builder.conv(f'{node_id}_expand3x3', x, expand3, kernel=3, pad=1, bias=True, relu=True)
    return [Part(e1, expand1), Part(e3, expand3)]


def squeezenet(version: str) -> LayerGraph:
    """SqueezeNet v1.0 (7x7 conv1, pools after fire4 and fire8) or v1.1 (3x3 conv1, pools after fire3 and fire5)."""
    if version == '1.0':
        conv1_channels, conv1_kernel, pool_after = 96, 7, (4, 8)
    elif version == '1.1':
        conv1_channels, conv1_kernel, pool_after = 64, 3, (3, 5)
    else:
        raise ValueError(f'unknown SqueezeNet version {version}')

    b = GraphBuilder(f'SqueezeNet-v{version}', TensorShape(3, SQUEEZENET_INPUT_SIZE, SQUEEZENET_INPUT_SIZE))
    x = b.conv('conv1', b.input_id, conv1_channels, kernel=conv1_kernel, stride=2, bias=True, relu=True)
    parts = [Part(b.pool('pool1', x, 3, 2), conv1_channels)]
    for number, (squeeze, expand1, expand3) in enumerate(FIRE_MODULES, start=2):
        parts = fire(b, f'fire{number}', parts, squeeze, expand1, expand3)
        if number in pool_after:
            parts = pool_parts(b, f'pool{number}', parts)
    x = conv_over_parts(b, 'conv10', parts, NUM_CLASSES)
    b.global_avg_pool('pool10', x)
    return b.build()


def mobilenet(input_size: int = MOBILENET_INPUT_SIZE) -> LayerGraph:
    """MobileNet v1 at width 1.0: depthwise 3x3 + pointwise 1x1 pairs, all with BN and no conv bias."""
    b = GraphBuilder(f'MobileNet-1.0-{input_size}', TensorShape(3, input_size, input_size))
    x = b.conv('conv1', b.input_id, 32, kernel=3, stride=2, pad=1, bn=True, relu=True)
    channels = 32
    for i, (stride, out_channels) in enumerate(MOBILENET_LAYERS, start=1):
        x = b.conv(f'dw{i}', x, channels, kernel=3, stride=stride, pad=1, groups=channels, bn=True, relu=True)
        x = b.conv(f'pw{i}', x, out_channels, kernel=1, bn=True, relu=True)
        channels = out_channels
    x = b.global_avg_pool('pool_global', x)
    b.fully_connected('fc', x, NUM_CLASSES)
    graph = b.build()
    logging.debug(f'Built {graph.name} with {len(MOBILENET_LAYERS)} separable layers')
    return graph
