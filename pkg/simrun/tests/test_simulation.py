import logging
import unittest
from fractions import Fraction
from unittest import mock

from dataflow import AccessCounts, DataflowMode
from hwmodel import EnergyCostTable, preset
from hwmodel.accelerator import KB
from netir import (Conv, ElementwiseAdd, GraphBuilder, Input, LayerGraph, Node, TensorShape, ValidationError,
                   mac_count)
from simrun import (SimulationError, compare, energy_of, figure_data, group_efficiency, simulate_layer,
                    simulate_network, sweep, sweep_grid)
from simrun import simulation
from tiler import InfeasibleTilingError, TilingPlan
from zoo import UnknownNetworkError, build_variant, stage_of

LARGE = preset('16x16_128KB')
SMALL = preset('8x8_32KB')


def _toy_graph() -> LayerGraph:
    b = GraphBuilder('toy', TensorShape(3, 8, 8))
    x = b.conv('conv1', b.input_id, 16, kernel=3, pad=1, bn=True, relu=True)
    b.fully_connected('fc', x, 10)
    return b.build()


def _mid_graph() -> LayerGraph:
    """Big enough to need tiling on the small presets."""
    b = GraphBuilder('mid', TensorShape(64, 28, 28))
    x = b.conv('conv1', b.input_id, 128, kernel=3, pad=1, bn=True, relu=True)
    y = b.conv('reduce', x, 64, kernel=1, bn=True, relu=True)
    y = b.conv('expand', y, 128, kernel=(1, 3), pad=(0, 1), bn=True, relu=True)
    x = b.add('add', x, y)
    x = b.pool('pool', x, 3, 2)
    x = b.global_avg_pool('gap', x)
    b.fully_connected('fc', x, 100)
    return b.build()


class EnergyTestCase(unittest.TestCase):
    def test_weighted_sum(self):
        energy = energy_of(AccessCounts(macs=100, rf_accesses=300, buffer_accesses=50, dram_bytes=20),
                           EnergyCostTable())
        self.assertEqual(2700, energy.total)
        self.assertEqual((100, 300, 300, 2000), tuple(energy))

    def test_zero(self):
        self.assertEqual(0, energy_of(AccessCounts(), EnergyCostTable()).total)

    def test_linear(self):
        counts = AccessCounts(macs=7, rf_accesses=21, buffer_accesses=40, dram_bytes=64)
        self.assertEqual(2 * energy_of(counts, EnergyCostTable()).total,
                         energy_of(counts + counts, EnergyCostTable()).total)
        doubled_dram = EnergyCostTable(dram_access=400.0)
        self.assertEqual(energy_of(counts, EnergyCostTable()).dram * 2, energy_of(counts, doubled_dram).dram)


class SimulateLayerTestCase(unittest.TestCase):
    def setUp(self):
        self.log_level = logging.root.level
        logging.disable(logging.CRITICAL)

    def tearDown(self):
        logging.disable(logging.NOTSET)
        logging.root.setLevel(self.log_level)

    def test_small_pointwise_layer(self):
        dense = LARGE.replace(weight_sparsity=0)
        result = simulate_layer(Conv(1, 1, 1, 32), TensorShape(32, 4, 4), dense, node_id='pw')
        self.assertEqual('pw', result.node_id)
        self.assertEqual(DataflowMode.WS, result.mode)
        self.assertEqual(64, result.compute_cycles)
        self.assertEqual(4096, result.accesses.dram_bytes)
        self.assertEqual(256, result.dram_cycles)
        self.assertEqual(556, result.total_cycles)
        self.assertEqual(3, result.n_transfers)
        self.assertEqual(TilingPlan(4, 4, 32, 32), result.plan)
        self.assertEqual(16 * 1024, result.macs)
        self.assertEqual(16384 + 3 * 16384 + 6 * 4096 + 2048 * 200, result.energy.total)

    def test_forced_mode(self):
        dense = LARGE.replace(weight_sparsity=0)
        result = simulate_layer(Conv(1, 1, 1, 32), TensorShape(32, 4, 4), dense, mode=DataflowMode.OS)
        self.assertEqual(DataflowMode.OS, result.mode)
        self.assertEqual(1024, result.compute_cycles)
        self.assertEqual(1324, result.total_cycles)

    def test_chosen_mode_is_never_slower(self):
        layers = [
            (Conv(7, 7, 2, 64), TensorShape(3, 227, 227)),
            (Conv(1, 1, 1, 64), TensorShape(128, 28, 28)),
            (Conv(3, 3, 1, 32, 1, 1, groups=32), TensorShape(32, 56, 56)),
            (Conv(1, 3, 1, 128, 0, 1), TensorShape(64, 14, 14)),
        ]
        for cfg in (LARGE, SMALL):
            for layer, shape in layers:
                with self.subTest(layer=layer, cfg=cfg.name):
                    chosen = simulate_layer(layer, shape, cfg)
                    for mode in DataflowMode:
                        self.assertLessEqual(chosen.total_cycles,
                                             simulate_layer(layer, shape, cfg, mode=mode).total_cycles)

    def test_sparsity_never_slows(self):
        layer, shape = Conv(7, 7, 2, 64), TensorShape(3, 227, 227)
        sparse = simulate_layer(layer, shape, LARGE)
        dense = simulate_layer(layer, shape, LARGE.replace(weight_sparsity=0))
        self.assertLessEqual(sparse.total_cycles, dense.total_cycles)
        self.assertEqual(sparse.macs, dense.macs)

    def test_elementwise_add(self):
        shape = TensorShape(64, 14, 14)
        result = simulate_layer(ElementwiseAdd(), [shape, shape], SMALL)
        self.assertEqual(DataflowMode.OS, result.mode)
        self.assertEqual(196, result.compute_cycles)
        self.assertEqual(196, result.total_cycles)
        self.assertEqual(0, result.dram_cycles)
        self.assertEqual(0, result.macs)
        self.assertEqual(2 * 3 * 12544, result.accesses.dram_bytes)
        self.assertEqual(2 * 12544 * 6 + 3 * 12544 * 200, result.energy.total)
        self.assertEqual('-', result.tiles)

    def test_faster_dram_never_slows(self):
        layer, shape = Conv(3, 3, 1, 128, 1, 1), TensorShape(64, 28, 28)
        slow = simulate_layer(layer, shape, SMALL)
        fast = simulate_layer(layer, shape, SMALL.replace(dram_bytes_per_cycle=Fraction(32)))
        self.assertLessEqual(fast.total_cycles, slow.total_cycles)

    def test_infeasible(self):
        with self.assertRaises(InfeasibleTilingError):
            simulate_layer(Conv(3, 3, 1, 16, 1, 1), TensorShape(16, 8, 8), SMALL.replace(buffer_bytes=16))

    def test_dense_efficiency_bounded_by_array(self):
        dense = SMALL.replace(weight_sparsity=0)
        for layer, shape in ((Conv(3, 3, 1, 64, 1, 1), TensorShape(64, 16, 16)),
                             (Conv(1, 1, 1, 8), TensorShape(3, 5, 5))):
            self.assertLessEqual(simulate_layer(layer, shape, dense).efficiency, dense.pe_count)


class SimulateNetworkTestCase(unittest.TestCase):
    def setUp(self):
        self.log_level = logging.root.level
        logging.disable(logging.CRITICAL)

    def tearDown(self):
        logging.disable(logging.NOTSET)
        logging.root.setLevel(self.log_level)

    def test_totals_are_layer_sums(self):
        graph = _mid_graph()
        result = simulate_network(graph, SMALL)
        self.assertEqual(['conv1', 'reduce', 'expand', 'add', 'pool', 'gap', 'fc'],
                         [layer.node_id for layer in result.layers])
        self.assertEqual(sum(layer.total_cycles for layer in result.layers), result.total_cycles)
        self.assertAlmostEqual(sum(layer.energy.total for layer in result.layers), result.total_energy)
        self.assertEqual(mac_count(graph).total, result.total_macs)
        self.assertAlmostEqual(1.0, sum(result.share(layer.node_id) for layer in result.layers))

    def test_empty_graph(self):
        graph = GraphBuilder('empty', TensorShape(3, 8, 8)).build()
        result = simulate_network(graph, LARGE)
        self.assertEqual((), result.layers)
        self.assertEqual(0, result.total_cycles)
        self.assertEqual(0, result.total_energy)

    def test_invalid_graph(self):
        graph = LayerGraph('broken', TensorShape(3, 8, 8),
                           (Node('input', Input()), Node('add', ElementwiseAdd(), ('input', 'missing'))))
        with self.assertRaises(ValidationError):
            simulate_network(graph, LARGE)

    def test_failure_names_layer(self):
        with self.assertRaises(SimulationError) as raised:
            simulate_network(_toy_graph(), SMALL.replace(buffer_bytes=16))
        self.assertEqual('conv1', raised.exception.node_id)
        self.assertIsInstance(raised.exception.cause, InfeasibleTilingError)
        self.assertIn('conv1', str(raised.exception))

    def test_deterministic(self):
        first = simulate_network(_mid_graph(), SMALL)
        simulation._simulate_kind.cache_clear()
        second = simulate_network(_mid_graph(), SMALL)
        self.assertEqual(first, second)
        self.assertIsNotNone(simulation._simulate_kind.cache_info().maxsize)

    def test_figure_data(self):
        result = simulate_network(_mid_graph(), SMALL)
        unmerged = figure_data(result, merge_same_config=False)
        self.assertEqual(len(result.layers), len(unmerged))
        self.assertEqual(result.total_cycles, sum(entry.cycles for entry in unmerged))

    def test_compare_singleton(self):
        rows = compare([_toy_graph()], LARGE)
        self.assertEqual(1, len(rows))
        self.assertEqual(1.0, rows[0].normalized_time)
        self.assertEqual(1.0, rows[0].normalized_energy)

    def test_compare_unknown_name(self):
        with self.assertRaises(UnknownNetworkError):
            compare(['Not-A-Net'], LARGE)


class SweepTestCase(unittest.TestCase):
    def setUp(self):
        self.log_level = logging.root.level
        logging.disable(logging.CRITICAL)

    def tearDown(self):
        logging.disable(logging.NOTSET)
        logging.root.setLevel(self.log_level)

    def test_grid_order(self):
        configs = sweep_grid(LARGE, [(8, 8), (16, 16)], [32 * KB, 128 * KB], [Fraction(0), Fraction(2, 5)])
        self.assertEqual(8, len(configs))
        self.assertEqual(['8x8_32KB_s0', '8x8_32KB_s0.4', '8x8_128KB_s0', '8x8_128KB_s0.4',
                          '16x16_32KB_s0', '16x16_32KB_s0.4', '16x16_128KB_s0', '16x16_128KB_s0.4'],
                         [cfg.name for cfg in configs])

    def test_empty_axis(self):
        with self.assertRaises(ValueError):
            sweep_grid(LARGE, [], [32 * KB])

    def test_single_process(self):
        configs = sweep_grid(LARGE, [(8, 8), (16, 16)], [16 * KB, 32 * KB, 128 * KB])
        points = sweep(_mid_graph(), configs, use_multiprocessing=False, progress=False)
        self.assertEqual(configs, [point.config for point in points])
        cycles = {(p.config.pe_rows, p.config.buffer_bytes): p.result.total_cycles for p in points}
        for rows in (8, 16):
            self.assertGreaterEqual(cycles[rows, 16 * KB], cycles[rows, 32 * KB])
            self.assertGreaterEqual(cycles[rows, 32 * KB], cycles[rows, 128 * KB])
        for buffer_bytes in (16 * KB, 32 * KB, 128 * KB):
            self.assertLessEqual(cycles[16, buffer_bytes], cycles[8, buffer_bytes])

    @mock.patch('simrun.simulation.simulation_logging.LoggerThread')
    @mock.patch('simrun.simulation.multiprocessing')
    def test_pool_results_are_reordered(self, mock_multiprocessing, mock_thread):
        configs = sweep_grid(LARGE, [(8, 8), (16, 16)], [128 * KB])
        results = [simulation._simulate_point(point, _toy_graph()) for point in enumerate(configs)]
        pool = mock_multiprocessing.Pool.return_value
        pool.imap_unordered.return_value = iter(reversed(results))

        points = sweep(_toy_graph(), configs, num_processes=2, progress=False)

        self.assertEqual(configs, [point.config for point in points])
        self.assertEqual([result for _, result in results], [point.result for point in points])
        mock_multiprocessing.Pool.assert_called_once_with(processes=2)
        pool.close.assert_called_once()
        mock_thread.return_value.start.assert_called_once()
        mock_thread.return_value.stop.assert_called_once()
        mock_multiprocessing.Manager.return_value.__exit__.assert_called_once()


class PublishedTrendsTestCase(unittest.TestCase):
    """Whole-network studies on both presets. Simulations are shared across tests."""
    NETWORKS = ['1.0-SqNxt-23', '1.0-SqNxt-23v2', '1.0-SqNxt-23v3', '1.0-SqNxt-23v4', '1.0-SqNxt-23v5',
                'SqueezeNet-v1.0', 'AlexNet', 'MobileNet-1.0-224', '2.0-SqNxt-23v5']

    @classmethod
    def setUpClass(cls):
        cls.log_level = logging.root.level
        logging.disable(logging.CRITICAL)
        graphs = {name: build_variant(name) for name in cls.NETWORKS}
        cls.large = {name: simulate_network(graph, LARGE) for name, graph in graphs.items()}
        cls.small = {name: simulate_network(graph, SMALL) for name, graph in graphs.items()}

    @classmethod
    def tearDownClass(cls):
        logging.disable(logging.NOTSET)
        logging.root.setLevel(cls.log_level)

    def test_first_layer_share(self):
        share = self.large['1.0-SqNxt-23'].share('conv1')
        self.assertGreaterEqual(share, 0.16)
        self.assertLessEqual(share, 0.36)

    def test_variant_ordering_large(self):
        cycles = {name: result.total_cycles for name, result in self.large.items()}
        self.assertLess(cycles['1.0-SqNxt-23v5'], cycles['1.0-SqNxt-23v4'])
        self.assertLessEqual(cycles['1.0-SqNxt-23v4'], cycles['1.0-SqNxt-23v3'])
        self.assertLessEqual(cycles['1.0-SqNxt-23v3'], cycles['1.0-SqNxt-23v2'])
        self.assertLess(cycles['1.0-SqNxt-23v2'], cycles['1.0-SqNxt-23'])
        baseline_energy = self.large['1.0-SqNxt-23'].total_energy
        self.assertLessEqual(self.large['1.0-SqNxt-23v5'].total_energy, 0.92 * baseline_energy)

    def test_variants_beat_baseline_small(self):
        baseline = self.small['1.0-SqNxt-23'].total_cycles
        for name in ('1.0-SqNxt-23v2', '1.0-SqNxt-23v3', '1.0-SqNxt-23v4', '1.0-SqNxt-23v5'):
            self.assertLess(self.small[name].total_cycles, baseline, name)

    def test_cross_network_ratios(self):
        v5 = self.large['1.0-SqNxt-23v5']
        squeezenet_ratio = self.large['SqueezeNet-v1.0'].total_cycles / v5.total_cycles
        alexnet_ratio = self.large['AlexNet'].total_cycles / v5.total_cycles
        self.assertTrue(1.8 <= squeezenet_ratio <= 3.4, squeezenet_ratio)
        self.assertTrue(5.0 <= alexnet_ratio <= 11.5, alexnet_ratio)
        self.assertGreaterEqual(self.large['AlexNet'].total_energy / v5.total_energy, 4)
        small_ratio = self.small['AlexNet'].total_cycles / self.small['1.0-SqNxt-23v5'].total_cycles
        self.assertGreaterEqual(small_ratio, 3.5)

    def _stage_efficiency(self, result, stage):
        return group_efficiency(layer for layer in result.layers if stage_of(layer.node_id) == stage)

    def test_early_layers_are_inefficient_on_large_array(self):
        large = self.large['1.0-SqNxt-23']
        small = self.small['1.0-SqNxt-23']
        large_ratio = self._stage_efficiency(large, 1) / large.efficiency
        small_ratio = self._stage_efficiency(small, 1) / small.efficiency
        self.assertLess(large_ratio, 1)
        self.assertLess(large_ratio, small_ratio)
        self.assertLess(self._stage_efficiency(large, 1), self._stage_efficiency(large, 3))

    def test_depthwise_is_inefficient(self):
        mobilenet, squeezenext = 'MobileNet-1.0-224', '2.0-SqNxt-23v5'
        self.assertLess(self.large[mobilenet].utilization, self.large[squeezenext].utilization)
        mobilenet_speedup = self.small[mobilenet].total_cycles / self.large[mobilenet].total_cycles
        squeezenext_speedup = self.small[squeezenext].total_cycles / self.large[squeezenext].total_cycles
        self.assertLess(mobilenet_speedup, squeezenext_speedup)

    def test_merged_figure_data(self):
        result = self.large['1.0-SqNxt-23']
        merged = figure_data(result, merge_same_config=True)
        self.assertLess(len(merged), len(result.layers))
        self.assertEqual(result.total_cycles, sum(entry.cycles for entry in merged))
        self.assertEqual(result.total_macs, sum(entry.macs for entry in merged))

    def test_compare_normalizes_by_fastest(self):
        rows = compare([self.large['SqueezeNet-v1.0'].network, '1.0-SqNxt-23v5'], LARGE)
        self.assertEqual(['SqueezeNet-v1.0', '1.0-SqNxt-23v5'], [row.name for row in rows])
        self.assertEqual(1.0, rows[1].normalized_time)
        self.assertGreaterEqual(rows[0].normalized_time, 1.8)


if __name__ == '__main__':
    unittest.main()
