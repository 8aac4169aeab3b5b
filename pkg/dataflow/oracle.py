import logging
from fractions import Fraction
from typing import NamedTuple, Optional

import numpy as np

from dataflow.cycles import DataflowMode, kept_weights
from dataflow.errors import OracleSizeError
from dataflow.geometry import ConvGeometry, conv_geometry
from hwmodel import AcceleratorConfig
from netir import LayerKind, TensorShape

"""Loop-level reference for the analytic cycle models.

The oracle walks the convolution loop nest (output channels, input channels, output rows and columns, kernel rows and
columns) in the order each dataflow schedules it and counts one cycle per PE-array step. It exists to check the closed
forms, so it refuses layers above ORACLE_MAC_LIMIT.

Weight masks have shape (out_channels, in_channels / groups, kernel_h, kernel_w); False marks a zero weight.
"""

ORACLE_MAC_LIMIT = 10 ** 7


class OracleResult(NamedTuple):
    cycles: int
    macs: int


def _ws_schedule(geometry: ConvGeometry, cfg: AcceleratorConfig) -> OracleResult:
    cig, cog = geometry.group_in_channels, geometry.group_out_channels
    cycles = macs = 0
    for _group in range(geometry.groups):
        for _i in range(geometry.kernel_h):
            for _j in range(geometry.kernel_w):
                for c0 in range(0, cig, cfg.pe_rows):
                    rows = min(cfg.pe_rows, cig - c0)
                    for k0 in range(0, cog, cfg.pe_cols):
                        cols = min(cfg.pe_cols, cog - k0)
                        # Weights [k0:k0+cols, c0:c0+rows, i, j] stay pinned while every output pixel streams past.
                        for _y in range(geometry.out_h):
                            for _x in range(geometry.out_w):
                                cycles += 1
                                macs += rows * cols
    return OracleResult(cycles, macs)


def _os_schedule(geometry: ConvGeometry, cfg: AcceleratorConfig, mask: np.ndarray) -> OracleResult:
    cycles = macs = 0
    for k in range(geometry.out_channels):
        filter_mask = mask[k]
        for y0 in range(0, geometry.out_h, cfg.pe_rows):
            for x0 in range(0, geometry.out_w, cfg.pe_cols):
                active = min(cfg.pe_rows, geometry.out_h - y0) * min(cfg.pe_cols, geometry.out_w - x0)
                for c in range(geometry.group_in_channels):
                    for i in range(geometry.kernel_h):
                        for j in range(geometry.kernel_w):
                            if filter_mask[c, i, j]:
                                cycles += 1
                                macs += active
    return OracleResult(cycles, macs)


def mask_shape(geometry: ConvGeometry):
    return geometry.out_channels, geometry.group_in_channels, geometry.kernel_h, geometry.kernel_w


def oracle_schedule(layer: LayerKind, in_shape: TensorShape, cfg: AcceleratorConfig, mode: DataflowMode,
                    weight_mask: Optional[np.ndarray] = None) -> OracleResult:
    """Enumerate the schedule and return its cycle and executed-MAC counts.

    :param weight_mask: Zero-weight mask, all weights dense when omitted. Only OS skips zeros.
    :raises OracleSizeError: When the layer has more than ORACLE_MAC_LIMIT dense MACs.
    """
    geometry = conv_geometry(layer, in_shape)
    if geometry.macs > ORACLE_MAC_LIMIT:
        raise OracleSizeError(geometry.macs, ORACLE_MAC_LIMIT)
    if weight_mask is None:
        weight_mask = np.ones(mask_shape(geometry), dtype=bool)
    elif weight_mask.shape != mask_shape(geometry):
        raise ValueError(f'weight mask shape {weight_mask.shape} does not match {mask_shape(geometry)}')

    if mode == DataflowMode.WS:
        result = _ws_schedule(geometry, cfg)
    else:
        result = _os_schedule(geometry, cfg, weight_mask.astype(bool))
    logging.debug(f'Oracle {mode}: {result.cycles} cycles, {result.macs} MACs')
    return result


def oracle_cycles(layer: LayerKind, in_shape: TensorShape, cfg: AcceleratorConfig, mode: DataflowMode,
                  weight_mask: Optional[np.ndarray] = None) -> int:
    return oracle_schedule(layer, in_shape, cfg, mode, weight_mask).cycles


def sparsity_mask(layer: LayerKind, in_shape: TensorShape, sparsity: Fraction, seed: int = 0) -> np.ndarray:
    """A random mask with exactly floor(n * sparsity) zeros in every filter of n weights."""
    geometry = conv_geometry(layer, in_shape)
    n = geometry.filter_size
    zeros = n - kept_weights(n, sparsity)
    rng = np.random.default_rng(seed)
    mask = np.ones((geometry.out_channels, n), dtype=bool)
    if zeros:
        positions = np.argsort(rng.random((geometry.out_channels, n)), axis=1)[:, :zeros]
        np.put_along_axis(mask, positions, False, axis=1)
    return mask.reshape(mask_shape(geometry))
