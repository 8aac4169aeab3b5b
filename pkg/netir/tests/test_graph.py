import logging
import unittest

from netir import graph as netir_graph
from netir import (Conv, Diagnostic, ElementwiseAdd, FullyConnected, GraphBuilder, LayerGraph, Node, Pool,
                   ShapeError, ShapesNotInferredError, TensorShape, infer_shapes, layer_macs, layer_params, mac_count,
                   output_shape, param_count, validate)
from netir.layers import GlobalAvgPool, Input


def _residual_graph() -> LayerGraph:
    b = GraphBuilder('residual', TensorShape(16, 8, 8))
    x = b.conv('conv1', b.input_id, 16, kernel=3, pad=1, bn=True, relu=True)
    x = b.conv('conv2', x, 16, kernel=(1, 3), pad=(0, 1), bn=True)
    x = b.add('add', x, b.input_id)
    x = b.pool('pool', x, 2, 2)
    x = b.global_avg_pool('gap', x)
    b.fully_connected('fc', x, 10)
    return b.build()


class ShapeInferenceTestCase(unittest.TestCase):
    def test_same_padding_keeps_spatial_size(self):
        shape = output_shape(Conv(3, 3, 1, 128, pad_h=1, pad_w=1), [TensorShape(64, 56, 56)])
        self.assertEqual(TensorShape(128, 56, 56), shape)

    def test_strided_conv_floors(self):
        shape = output_shape(Conv(7, 7, 2, 64), [TensorShape(3, 227, 227)])
        self.assertEqual(TensorShape(64, 111, 111), shape)

    def test_alexnet_first_layer(self):
        shape = output_shape(Conv(11, 11, 4, 96), [TensorShape(3, 227, 227)])
        self.assertEqual(TensorShape(96, 55, 55), shape)

    def test_head_shapes(self):
        graph = _residual_graph()
        self.assertEqual(TensorShape(16, 4, 4), graph.output_shape('pool'))
        self.assertEqual(TensorShape(16, 1, 1), graph.output_shape('gap'))
        self.assertEqual(TensorShape(10, 1, 1), graph.output_shape('fc'))
        self.assertEqual(TensorShape(16, 8, 8), graph.output_shape('add'))

    def test_add_mismatch_names_node(self):
        b = GraphBuilder('bad', TensorShape(64, 28, 28))
        x = b.conv('down', b.input_id, 64, kernel=1, stride=2)
        b.add('join', x, b.input_id)
        with self.assertRaises(ShapeError) as ctx:
            b.build()
        self.assertEqual('join', ctx.exception.node_id)

    def test_non_positive_output_names_node(self):
        b = GraphBuilder('bad', TensorShape(3, 4, 4))
        b.conv('big', b.input_id, 8, kernel=7)
        with self.assertRaises(ShapeError) as ctx:
            b.build()
        self.assertEqual('big', ctx.exception.node_id)

    def test_groups_must_divide_in_channels(self):
        b = GraphBuilder('bad', TensorShape(3, 8, 8))
        b.conv('grouped', b.input_id, 4, kernel=1, groups=2)
        with self.assertRaises(ShapeError) as ctx:
            b.build()
        self.assertEqual('grouped', ctx.exception.node_id)

    def test_inference_is_idempotent(self):
        graph = _residual_graph()
        again = infer_shapes(graph)
        self.assertEqual(graph.shapes, again.shapes)
        self.assertEqual(graph, again)

    def test_input_node_sees_network_input(self):
        graph = _residual_graph()
        self.assertEqual([TensorShape(16, 8, 8)], graph.input_shapes('input'))
        self.assertEqual([TensorShape(16, 8, 8), TensorShape(16, 8, 8)], graph.input_shapes('add'))


class CountingTestCase(unittest.TestCase):
    def test_pointwise_conv_params(self):
        layer = Conv(1, 1, 1, 128, has_bias=True, has_batchnorm=True)
        self.assertEqual(8576, layer_params(layer, [TensorShape(64, 14, 14)]))

    def test_depthwise_conv_params(self):
        layer = Conv(3, 3, 1, 128, pad_h=1, pad_w=1, groups=128, has_batchnorm=True)
        self.assertEqual(1408, layer_params(layer, [TensorShape(128, 14, 14)]))

    def test_conv_macs(self):
        layer = Conv(3, 3, 1, 32, pad_h=1, pad_w=1)
        self.assertEqual(294912, layer_macs(layer, [TensorShape(16, 8, 8)], TensorShape(32, 8, 8)))

    def test_grouped_macs_divide_by_groups(self):
        in_shapes = [TensorShape(64, 8, 8)]
        out_shape = TensorShape(64, 8, 8)
        dense = layer_macs(Conv(3, 3, 1, 64, 1, 1), in_shapes, out_shape)
        for groups in (2, 4, 64):
            self.assertEqual(dense // groups, layer_macs(Conv(3, 3, 1, 64, 1, 1, groups=groups), in_shapes, out_shape))

    def test_fc_flattens_input(self):
        layer = FullyConnected(10)
        self.assertEqual(16 * 4 * 4 * 10 + 10, layer_params(layer, [TensorShape(16, 4, 4)]))
        self.assertEqual(16 * 4 * 4 * 10, layer_macs(layer, [TensorShape(16, 4, 4)], TensorShape(10, 1, 1)))

    def test_separable_pair_weights(self):
        channels, kernel = 32, 3
        square = layer_params(Conv(kernel, kernel, 1, channels), [TensorShape(channels, 8, 8)])
        pair = (layer_params(Conv(1, kernel, 1, channels), [TensorShape(channels, 8, 8)])
                + layer_params(Conv(kernel, 1, 1, channels), [TensorShape(channels, 8, 8)]))
        self.assertEqual(kernel * kernel * channels * channels, square)
        self.assertEqual(2 * kernel * channels * channels, pair)

    def test_doubling_width_quadruples_weights(self):
        for c_in, c_out in ((16, 32), (48, 96)):
            narrow = Conv(3, 3, 1, c_out, has_bias=True, has_batchnorm=True)
            wide = Conv(3, 3, 1, 2 * c_out, has_bias=True, has_batchnorm=True)
            narrow_params = layer_params(narrow, [TensorShape(c_in, 8, 8)])
            wide_params = layer_params(wide, [TensorShape(2 * c_in, 8, 8)])
            # 4x the weights, 2x the bias and BN terms.
            self.assertEqual(4 * 9 * c_in * c_out + 2 * 3 * c_out, wide_params)
            self.assertEqual(9 * c_in * c_out + 3 * c_out, narrow_params)

    def test_pool_and_add_have_no_params_or_macs(self):
        graph = _residual_graph()
        params = param_count(graph).per_layer
        macs = mac_count(graph).per_layer
        for node_id in ('input', 'add', 'pool', 'gap'):
            self.assertEqual(0, params[node_id])
            self.assertEqual(0, macs[node_id])

    def test_totals_are_additive(self):
        graph = _residual_graph()
        for breakdown in (param_count(graph), mac_count(graph), netir_graph.elementwise_op_count(graph)):
            self.assertEqual(breakdown.total, sum(breakdown.per_layer.values()))

    def test_elementwise_ops(self):
        ops = netir_graph.elementwise_op_count(_residual_graph()).per_layer
        self.assertEqual(16 * 8 * 8, ops['add'])
        self.assertEqual(16 * 4 * 4 * 4, ops['pool'])
        self.assertEqual(16 * 4 * 4, ops['gap'])
        self.assertEqual(0, ops['conv1'])

    def test_counting_requires_shapes(self):
        graph = GraphBuilder('raw', TensorShape(3, 8, 8)).build(infer=False)
        with self.assertRaises(ShapesNotInferredError):
            param_count(graph)
        with self.assertRaises(ShapesNotInferredError):
            mac_count(graph)

    def test_counts_survive_reordering(self):
        b = GraphBuilder('branches', TensorShape(8, 8, 8))
        left = b.conv('left', b.input_id, 8, kernel=1)
        right = b.conv('right', b.input_id, 8, kernel=3, pad=1)
        b.add('join', left, right)
        graph = b.build()
        swapped = infer_shapes(netir_graph.reorder(graph, ['input', 'right', 'left', 'join']))
        self.assertEqual([], validate(swapped))
        self.assertEqual(param_count(graph).total, param_count(swapped).total)
        self.assertEqual(mac_count(graph).total, mac_count(swapped).total)


class ValidateTestCase(unittest.TestCase):
    def setUp(self):
        self.log_level = logging.root.level
        logging.disable(logging.CRITICAL)

    def tearDown(self):
        logging.disable(logging.NOTSET)
        logging.root.setLevel(self.log_level)

    def test_well_formed_graph(self):
        self.assertEqual([], validate(_residual_graph()))

    def test_add_shape_mismatch(self):
        b = GraphBuilder('bad', TensorShape(64, 28, 28))
        x = b.conv('down', b.input_id, 64, kernel=1, stride=2)
        b.add('join', x, b.input_id)
        diagnostics = validate(b.build(infer=False))
        self.assertEqual(1, len(diagnostics))
        self.assertEqual('join', diagnostics[0].node_id)
        self.assertEqual('shape', diagnostics[0].code)

    def test_cycle_reported_once(self):
        shape = TensorShape(8, 4, 4)
        nodes = (
            Node('input', Input()),
            Node('a', ElementwiseAdd(), ('input', 'b')),
            Node('b', Conv(1, 1, 1, 8), ('a',)),
        )
        diagnostics = validate(LayerGraph('cyclic', shape, nodes))
        self.assertEqual(['cycle'], [d.code for d in diagnostics])

    def test_structural_defects(self):
        shape = TensorShape(8, 4, 4)
        nodes = (
            Node('input', Input()),
            Node('gap', GlobalAvgPool(), ()),
            Node('pool', Pool('max', 2, 2), ('missing',)),
            Node('pool', Pool('avg', 2, 2), ('input',)),
        )
        codes = sorted(d.code for d in validate(LayerGraph('broken', shape, nodes)))
        self.assertEqual(['arity', 'duplicate-id', 'unknown-input'], codes)

    def test_missing_input_node(self):
        nodes = (Node('fc', FullyConnected(10), ('x',)),)
        codes = [d.code for d in validate(LayerGraph('headless', TensorShape(1, 1, 1), nodes))]
        self.assertIn('input-count', codes)

    def test_out_of_order_node(self):
        nodes = (
            Node('input', Input()),
            Node('second', Conv(1, 1, 1, 4), ('first',)),
            Node('first', Conv(1, 1, 1, 4), ('input',)),
        )
        diagnostics = validate(LayerGraph('unordered', TensorShape(4, 4, 4), nodes))
        self.assertEqual([Diagnostic('second', 'order', 'predecessor first appears after this node')], diagnostics)

    def test_invalid_layer_values_rejected(self):
        with self.assertRaises(ValueError):
            Conv(3, 3, 0, 16)
        with self.assertRaises(ValueError):
            Conv(3, 3, 1, 10, groups=4)
        with self.assertRaises(ValueError):
            Pool('median', 2, 2)
        with self.assertRaises(ValueError):
            TensorShape(0, 4, 4)


if __name__ == '__main__':
    unittest.main()
