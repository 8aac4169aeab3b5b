import enum
from dataclasses import dataclass
from typing import Union

"""Layer kinds and tensor shapes of the network IR.

Every layer is an immutable value. Hyperparameters are validated on construction so that a malformed layer can never
enter a graph; a failure raises `ValueError` naming the field, which the network file parser turns into a
`NetworkFileError` with node context.

Batch size is fixed at 1 everywhere, so shapes carry only (channels, height, width).
"""


KIND_INPUT = 'input'
KIND_CONV = 'conv'
KIND_FC = 'fc'
KIND_POOL = 'pool'
KIND_GAP = 'gap'
KIND_ADD = 'add'
ALL_KINDS = [KIND_INPUT, KIND_CONV, KIND_FC, KIND_POOL, KIND_GAP, KIND_ADD]


def _require_int(field: str, value, minimum: int):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f'{field} must be an integer, got {value!r}')
    if value < minimum:
        raise ValueError(f'{field} must be >= {minimum}, got {value}')


def _require_bool(field: str, value):
    if not isinstance(value, bool):
        raise ValueError(f'{field} must be a boolean, got {value!r}')


@dataclass(frozen=True)
class TensorShape:
    channels: int
    height: int
    width: int

    def __post_init__(self):
        _require_int('channels', self.channels, 1)
        _require_int('height', self.height, 1)
        _require_int('width', self.width, 1)

    @property
    def elements(self) -> int:
        return self.channels * self.height * self.width

    def __str__(self):
        return f'({self.channels}, {self.height}, {self.width})'


class PoolKind(str, enum.Enum):
    MAX = 'max'
    AVG = 'avg'


@dataclass(frozen=True)
class Input:
    kind = KIND_INPUT


@dataclass(frozen=True)
class Conv:
    """A 2D convolution. Separable filters are 1xK / Kx1 convs and depthwise convs have groups == in_channels.

    BN and ReLU are flags: they contribute parameters (BN) but never MACs.
    """
    kernel_h: int
    kernel_w: int
    stride: int
    out_channels: int
    pad_h: int = 0
    pad_w: int = 0
    groups: int = 1
    has_bias: bool = False
    has_batchnorm: bool = False
    has_relu: bool = False
    kind = KIND_CONV

    def __post_init__(self):
        _require_int('kernel_h', self.kernel_h, 1)
        _require_int('kernel_w', self.kernel_w, 1)
        _require_int('stride', self.stride, 1)
        _require_int('out_channels', self.out_channels, 1)
        _require_int('pad_h', self.pad_h, 0)
        _require_int('pad_w', self.pad_w, 0)
        _require_int('groups', self.groups, 1)
        _require_bool('bias', self.has_bias)
        _require_bool('bn', self.has_batchnorm)
        _require_bool('relu', self.has_relu)
        if self.out_channels % self.groups:
            raise ValueError(f'out_channels {self.out_channels} is not divisible by groups {self.groups}')


@dataclass(frozen=True)
class FullyConnected:
    out_features: int
    has_bias: bool = True
    kind = KIND_FC

    def __post_init__(self):
        _require_int('out_features', self.out_features, 1)
        _require_bool('bias', self.has_bias)


@dataclass(frozen=True)
class Pool:
    pool_kind: PoolKind
    kernel: int
    stride: int
    pad: int = 0
    kind = KIND_POOL

    def __post_init__(self):
        if not isinstance(self.pool_kind, PoolKind):
            try:
                object.__setattr__(self, 'pool_kind', PoolKind(self.pool_kind))
            except ValueError:
                raise ValueError(f'pool_kind must be one of {[k.value for k in PoolKind]}, got {self.pool_kind!r}')
        _require_int('kernel', self.kernel, 1)
        _require_int('stride', self.stride, 1)
        _require_int('pad', self.pad, 0)


@dataclass(frozen=True)
class GlobalAvgPool:
    kind = KIND_GAP


@dataclass(frozen=True)
class ElementwiseAdd:
    kind = KIND_ADD


LayerKind = Union[Input, Conv, FullyConnected, Pool, GlobalAvgPool, ElementwiseAdd]
