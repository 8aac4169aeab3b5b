import csv
import io
import json
import logging
import unittest
from unittest import mock

from hwmodel import preset
from netir import GraphBuilder, TensorShape
from simrun import compare, figure_data, simulate_network, simulation_output, sweep, sweep_grid


def _simulated():
    b = GraphBuilder('toy', TensorShape(3, 8, 8))
    x = b.conv('conv1', b.input_id, 16, kernel=3, pad=1, bn=True, relu=True)
    x = b.global_avg_pool('gap', x)
    b.fully_connected('fc', x, 10)
    return simulate_network(b.build(), preset('8x8_32KB'))


class ReportRowsTestCase(unittest.TestCase):
    def setUp(self):
        self.log_level = logging.root.level
        logging.disable(logging.CRITICAL)
        self.result = _simulated()

    def tearDown(self):
        logging.disable(logging.NOTSET)
        logging.root.setLevel(self.log_level)

    def test_layer_columns(self):
        rows = simulation_output.layer_rows(self.result)
        self.assertEqual(['conv1', 'gap', 'fc'], [row['layer'] for row in rows])
        self.assertEqual(['layer', 'kind', 'mode', 'tiles', 'compute_cycles', 'dram_cycles', 'total_cycles', 'macs',
                          'efficiency', 'energy_total', 'energy_dram', 'energy_buffer', 'energy_rf', 'energy_mac'],
                         list(rows[0]))
        self.assertEqual('gap', rows[1]['kind'])
        self.assertEqual('OS', rows[1]['mode'])
        self.assertEqual('-', rows[1]['tiles'])

    def test_tiling_rows_skip_elementwise(self):
        rows = simulation_output.tiling_rows(self.result)
        self.assertEqual(['conv1', 'fc'], [row['layer'] for row in rows])
        self.assertEqual(3, rows[0]['n_transfers'])

    def test_summary(self):
        summary = simulation_output.network_summary(self.result)
        self.assertEqual('toy', summary['network'])
        self.assertEqual('8x8_32KB', summary['config'])
        self.assertEqual(self.result.total_cycles, summary['total_cycles'])

    def test_comparison_and_figure_rows(self):
        rows = simulation_output.comparison_rows(compare([self.result_graph()], preset('8x8_32KB')))
        self.assertEqual(1.0, rows[0]['normalized_time'])
        series = simulation_output.figure_rows(figure_data(self.result, merge_same_config=False))
        self.assertEqual(['layer', 'cycles', 'efficiency', 'macs', 'members'], list(series[0]))

    def test_sweep_rows(self):
        configs = sweep_grid(preset('16x16_128KB'), [(8, 8)], [32 * 1024])
        rows = simulation_output.sweep_rows(sweep(self.result_graph(), configs, use_multiprocessing=False,
                                                  progress=False))
        self.assertEqual(1, len(rows))
        self.assertEqual('8x8', rows[0]['pe'])
        self.assertEqual(0.4, rows[0]['sparsity'])

    @staticmethod
    def result_graph():
        b = GraphBuilder('toy', TensorShape(3, 8, 8))
        x = b.conv('conv1', b.input_id, 16, kernel=3, pad=1, bn=True, relu=True)
        b.fully_connected('fc', x, 10)
        return b.build()


class WritersTestCase(unittest.TestCase):
    def setUp(self):
        self.log_level = logging.root.level
        logging.disable(logging.CRITICAL)
        self.result = _simulated()

    def tearDown(self):
        logging.disable(logging.NOTSET)
        logging.root.setLevel(self.log_level)

    def _render(self, output_format, summary=True):
        stream = io.StringIO()
        with simulation_output.writer_for_format(output_format, stream) as writer:
            if summary:
                writer.write_summary(simulation_output.network_summary(self.result))
            writer.write_rows(simulation_output.OUTPUT_LAYERS, simulation_output.layer_rows(self.result))
        return stream.getvalue()

    def test_csv_holds_rows_only(self):
        rows = list(csv.DictReader(io.StringIO(self._render(simulation_output.FORMAT_CSV))))
        self.assertEqual(3, len(rows))
        self.assertEqual(simulation_output.LAYER_COLUMNS, list(rows[0]))

    def test_json_document(self):
        document = json.loads(self._render(simulation_output.FORMAT_JSON))
        self.assertEqual('toy', document['network'])
        self.assertEqual(3, len(document['layers']))

    def test_json_rows_only_is_array(self):
        document = json.loads(self._render(simulation_output.FORMAT_JSON, summary=False))
        self.assertIsInstance(document, list)

    def test_csv_and_json_agree(self):
        csv_rows = list(csv.DictReader(io.StringIO(self._render(simulation_output.FORMAT_CSV))))
        json_rows = json.loads(self._render(simulation_output.FORMAT_JSON))['layers']
        for csv_row, json_row in zip(csv_rows, json_rows):
            self.assertEqual({key: str(value) for key, value in json_row.items()}, csv_row)

    def test_json_summary_field_cannot_hold_rows(self):
        writer = simulation_output.JsonWriter(io.StringIO())
        writer.write_summary({'layers': 3})
        with self.assertRaises(ValueError):
            writer.write_rows('layers', [{'layer': 'conv1'}])

    def test_table(self):
        text = self._render(simulation_output.FORMAT_TABLE)
        self.assertIn('total_cycles', text)
        self.assertIn('conv1', text)
        self.assertIn('network', text.splitlines()[0])

    def test_several_outputs_are_separated(self):
        stream = io.StringIO()
        writer = simulation_output.CsvWriter(stream)
        writer.write_rows('first', {'a': 1})
        writer.write_rows('second', [{'b': 2}])
        writer.close()
        self.assertEqual('a\n1\n\nb\n2\n', stream.getvalue())

    def test_close_flushes(self):
        stream = mock.Mock()
        simulation_output.CsvWriter(stream).close()
        stream.flush.assert_called_once()

    def test_unknown_format(self):
        with self.assertRaises(ValueError):
            simulation_output.writer_for_format('xml', io.StringIO())


if __name__ == '__main__':
    unittest.main()
