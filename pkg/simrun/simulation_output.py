import abc
import csv
import json
import logging
from typing import Any, Dict, Iterable, List, Optional, TextIO, Union

import pandas as pd

from simrun.simulation import ComparisonRow, FigureEntry, NetworkResult, SweepPoint

"""Report rows for simulation results, and the writers that render them as a table, CSV or JSON.

Results are first flattened into lists of dict rows (one list per named output), then handed to a `RowWriter`. All
three writers see the same rows, so CSV and JSON carry identical numbers.

Usage:
```
    with writer_for_format(FORMAT_CSV, sys.stdout) as writer:
        writer.write_summary(network_summary(result))
        writer.write_rows(OUTPUT_LAYERS, layer_rows(result))
```
A CSV report holds the rows only. The table adds the summary lines, and JSON nests the rows under their output name
next to the summary fields.
"""

FORMAT_TABLE = 'table'
FORMAT_CSV = 'csv'
FORMAT_JSON = 'json'
ALL_FORMATS = [FORMAT_TABLE, FORMAT_CSV, FORMAT_JSON]
DEFAULT_FORMAT = FORMAT_TABLE

OUTPUT_LAYERS = 'layers'
OUTPUT_TILING = 'tiling'
OUTPUT_COMPARISON = 'networks'
OUTPUT_FIGURE = 'series'
OUTPUT_SWEEP = 'points'

LAYER_COLUMNS = ['layer', 'kind', 'mode', 'tiles', 'compute_cycles', 'dram_cycles', 'total_cycles', 'macs',
                 'efficiency', 'energy_total', 'energy_dram', 'energy_buffer', 'energy_rf', 'energy_mac']
TABLE_FLOAT_FORMAT = '{:.4g}'.format


def layer_rows(result: NetworkResult) -> List[Dict[str, Any]]:
    return [
        dict(zip(LAYER_COLUMNS, (
            layer.node_id, layer.kind, str(layer.mode), layer.tiles, layer.compute_cycles, layer.dram_cycles,
            layer.total_cycles, layer.macs, layer.efficiency, layer.energy.total, layer.energy.dram,
            layer.energy.buffer, layer.energy.rf, layer.energy.mac)))
        for layer in result.layers
    ]


def tiling_rows(result: NetworkResult) -> List[Dict[str, Any]]:
    """The chosen tiling plan of every tiled layer, with its reload factors and DRAM traffic."""
    rows = []
    for layer in result.layers:
        if layer.plan is None:
            continue
        plan = layer.plan
        reload_input, reload_weight, reload_output = plan.reload_factors
        rows.append(dict(
            layer=layer.node_id, mode=str(layer.mode), tile_x=plan.tile_x, tile_y=plan.tile_y, tile_c=plan.tile_c,
            tile_k=plan.tile_k, tile_g=plan.tile_g, loop_order=''.join(plan.loop_order), reload_input=reload_input,
            reload_weight=reload_weight, reload_output=reload_output, n_transfers=layer.n_transfers,
            dram_bytes=layer.accesses.dram_bytes))
    return rows


def network_summary(result: NetworkResult) -> Dict[str, Any]:
    energy = result.energy
    return dict(
        network=result.network, config=result.config, params=result.params, macs=result.total_macs,
        total_cycles=result.total_cycles, compute_cycles=result.compute_cycles, dram_bytes=result.dram_bytes,
        efficiency=result.efficiency, utilization=result.utilization, energy_total=energy.total,
        energy_dram=energy.dram, energy_buffer=energy.buffer, energy_rf=energy.rf, energy_mac=energy.mac)


def comparison_rows(rows: Iterable[ComparisonRow]) -> List[Dict[str, Any]]:
    return [row._asdict() for row in rows]


def figure_rows(entries: Iterable[FigureEntry]) -> List[Dict[str, Any]]:
    return [
        dict(layer=entry.name, cycles=entry.cycles, efficiency=entry.efficiency, macs=entry.macs,
             members=';'.join(entry.members))
        for entry in entries
    ]


def sweep_rows(points: Iterable[SweepPoint]) -> List[Dict[str, Any]]:
    rows = []
    for point_id, (cfg, result) in enumerate(points):
        row = dict(point=point_id, pe=f'{cfg.pe_rows}x{cfg.pe_cols}', buffer_bytes=cfg.buffer_bytes,
                   sparsity=float(cfg.weight_sparsity))
        row.update(network_summary(result))
        rows.append(row)
    return rows


class RowWriter(abc.ABC):
    """Renders named lists of dict rows onto a text stream. Use as a context manager, or call `close()`."""
    def __init__(self, stream: TextIO):
        self.stream = stream
        self._outputs_written = 0

    @abc.abstractmethod
    def write_rows(self, output_name: str, rows: Union[Iterable[dict], dict]):
        pass

    def write_summary(self, summary: Dict[str, Any]):
        """Scalar facts about the whole report. Formats without a place for them ignore them."""
        pass

    def close(self):
        self.stream.flush()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()

    def _separate(self):
        # Several outputs on one stream are separated by a blank line.
        if self._outputs_written:
            self.stream.write('\n')
        self._outputs_written += 1


class CsvWriter(RowWriter):
    def write_rows(self, output_name: str, rows: Union[Iterable[dict], dict]):
        if isinstance(rows, dict):
            rows = [rows]
        rows = list(rows)
        if not rows:
            logging.debug(f'No rows for output({output_name})')
            return
        self._separate()
        writer = csv.DictWriter(self.stream, list(rows[0].keys()), lineterminator='\n')
        writer.writeheader()
        writer.writerows(rows)


class TableWriter(RowWriter):
    """Aligned plain-text tables for a terminal."""
    def write_summary(self, summary: Dict[str, Any]):
        self._separate()
        width = max(len(key) for key in summary)
        for key, value in summary.items():
            shown = TABLE_FLOAT_FORMAT(value) if isinstance(value, float) else value
            self.stream.write(f'{key:<{width}}  {shown}\n')

    def write_rows(self, output_name: str, rows: Union[Iterable[dict], dict]):
        if isinstance(rows, dict):
            rows = [rows]
        frame = pd.DataFrame(list(rows))
        self._separate()
        if frame.empty:
            self.stream.write(f'(no {output_name})\n')
            return
        self.stream.write(frame.to_string(index=False, float_format=TABLE_FLOAT_FORMAT) + '\n')


class JsonWriter(RowWriter):
    """Collects everything into one document, written on close: summary fields plus one array per output."""
    def __init__(self, stream: TextIO):
        super().__init__(stream)
        self.document: Dict[str, Any] = {}
        self._top_level: Optional[str] = None

    def write_summary(self, summary: Dict[str, Any]):
        self.document.update(summary)

    def write_rows(self, output_name: str, rows: Union[Iterable[dict], dict]):
        existing = self.document.setdefault(output_name, [])
        if not isinstance(existing, list):
            raise ValueError(f'output({output_name}) collides with a summary field of the same name')
        existing.extend([rows] if isinstance(rows, dict) else rows)
        if self._top_level is None:
            self._top_level = output_name

    def close(self):
        # A rows-only report (no summary, one output) is written as a bare array.
        only_rows = self._top_level is not None and list(self.document) == [self._top_level]
        document = self.document[self._top_level] if only_rows else self.document
        self.stream.write(json.dumps(document, indent=2) + '\n')
        super().close()


WRITERS = {FORMAT_TABLE: TableWriter, FORMAT_CSV: CsvWriter, FORMAT_JSON: JsonWriter}


def writer_for_format(output_format: str, stream: TextIO) -> RowWriter:
    if output_format not in WRITERS:
        raise ValueError(f'unknown output format {output_format}, expected one of {ALL_FORMATS}')
    return WRITERS[output_format](stream)
