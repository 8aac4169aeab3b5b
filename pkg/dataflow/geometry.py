from typing import NamedTuple

from dataflow.errors import UnsupportedLayerError
from netir import Conv, FullyConnected, LayerKind, TensorShape


class ConvGeometry(NamedTuple):
    """Loop bounds of one convolution. A fully connected layer is a 1x1 conv over a 1x1 input."""
    kernel_h: int
    kernel_w: int
    stride: int
    pad_h: int
    pad_w: int
    in_channels: int
    in_h: int
    in_w: int
    out_channels: int
    out_h: int
    out_w: int
    groups: int = 1

    @property
    def group_in_channels(self) -> int:
        return self.in_channels // self.groups

    @property
    def group_out_channels(self) -> int:
        return self.out_channels // self.groups

    @property
    def filter_size(self) -> int:
        """Weights feeding one output value."""
        return self.kernel_h * self.kernel_w * self.group_in_channels

    @property
    def weights(self) -> int:
        return self.filter_size * self.out_channels

    @property
    def input_elements(self) -> int:
        return self.in_channels * self.in_h * self.in_w

    @property
    def output_elements(self) -> int:
        return self.out_channels * self.out_h * self.out_w

    @property
    def macs(self) -> int:
        return self.output_elements * self.filter_size

    def transposed(self) -> 'ConvGeometry':
        return self._replace(kernel_h=self.kernel_w, kernel_w=self.kernel_h, pad_h=self.pad_w, pad_w=self.pad_h,
                             in_h=self.in_w, in_w=self.in_h, out_h=self.out_w, out_w=self.out_h)


def conv_geometry(layer: LayerKind, in_shape: TensorShape) -> ConvGeometry:
    if isinstance(layer, FullyConnected):
        return ConvGeometry(1, 1, 1, 0, 0, in_shape.elements, 1, 1, layer.out_features, 1, 1)
    if not isinstance(layer, Conv):
        raise UnsupportedLayerError(layer.kind, reason='only conv and fc layers run on the PE array')
    out_h = (in_shape.height + 2 * layer.pad_h - layer.kernel_h) // layer.stride + 1
    out_w = (in_shape.width + 2 * layer.pad_w - layer.kernel_w) // layer.stride + 1
    return ConvGeometry(layer.kernel_h, layer.kernel_w, layer.stride, layer.pad_h, layer.pad_w,
                        in_shape.channels, in_shape.height, in_shape.width,
                        layer.out_channels, out_h, out_w, layer.groups)
