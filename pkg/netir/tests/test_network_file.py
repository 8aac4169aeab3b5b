import json
import os
import tempfile
import unittest

from netir import (Conv, FullyConnected, GraphBuilder, NetworkFileError, TensorShape, from_text, infer_shapes,
                   mac_count, param_count, read_network, to_text, validate, write_network)

DATA_DIR = os.path.join(os.path.dirname(__file__), 'data')
TOY_PATH = os.path.join(DATA_DIR, 'toy.net.json')


def _toy_document():
    with open(TOY_PATH) as f:
        return json.load(f)


class NetworkFileTestCase(unittest.TestCase):
    def test_toy_fixture_matches_manual_construction(self):
        b = GraphBuilder('toy', TensorShape(3, 8, 8))
        x = b.conv('conv1', b.input_id, 16, kernel=3, pad=1, bn=True, relu=True)
        b.fully_connected('fc', x, 10)
        expected = b.build()

        parsed = read_network(TOY_PATH)
        self.assertEqual(3, len(parsed.nodes))
        self.assertEqual(expected, parsed)
        annotated = infer_shapes(parsed)
        self.assertEqual(464 + 10250, param_count(annotated).total)
        self.assertEqual(27648 + 10240, mac_count(annotated).total)

    def test_written_text_is_canonical(self):
        with open(TOY_PATH) as f:
            text = f.read()
        self.assertEqual(text, to_text(from_text(text)))

    def test_round_trip_preserves_structure(self):
        b = GraphBuilder('branches', TensorShape(8, 16, 16))
        left = b.conv('left', b.input_id, 8, kernel=(1, 3), pad=(0, 1), groups=2, bn=True)
        right = b.pool('right', b.input_id, 3, 1, pad=1, pool_kind='avg')
        x = b.add('join', left, right)
        x = b.global_avg_pool('gap', x)
        b.fully_connected('fc', x, 4, bias=False)
        graph = b.build()
        parsed = from_text(to_text(graph))
        self.assertEqual(graph, parsed)
        self.assertEqual([], validate(parsed))

    def test_write_then_read(self):
        b = GraphBuilder('small', TensorShape(3, 4, 4))
        b.conv('conv', b.input_id, 2, kernel=1)
        graph = b.build()
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'small.net.json')
            write_network(graph, path)
            self.assertEqual(graph, read_network(path))

    def test_missing_stride_names_node(self):
        document = _toy_document()
        del document['layers'][1]['stride']
        with self.assertRaises(NetworkFileError) as ctx:
            from_text(json.dumps(document, indent=2))
        self.assertEqual('conv1', ctx.exception.node_id)
        self.assertEqual('stride', ctx.exception.field)
        self.assertIsNotNone(ctx.exception.line)
        self.assertIn('conv1', str(ctx.exception))

    def test_unknown_kind(self):
        document = _toy_document()
        document['layers'][1]['kind'] = 'concat'
        with self.assertRaises(NetworkFileError) as ctx:
            from_text(json.dumps(document))
        self.assertEqual('kind', ctx.exception.field)

    def test_unknown_field(self):
        document = _toy_document()
        document['layers'][2]['dilation'] = 2
        with self.assertRaises(NetworkFileError) as ctx:
            from_text(json.dumps(document))
        self.assertEqual('dilation', ctx.exception.field)
        self.assertEqual('fc', ctx.exception.node_id)

    def test_out_of_range_value(self):
        document = _toy_document()
        document['layers'][1]['out_channels'] = 0
        with self.assertRaises(NetworkFileError) as ctx:
            from_text(json.dumps(document))
        self.assertEqual('conv1', ctx.exception.node_id)

    def test_malformed_json_reports_line(self):
        with self.assertRaises(NetworkFileError) as ctx:
            from_text('{\n  "name": "x",\n  oops\n}')
        self.assertEqual(3, ctx.exception.line)

    def test_layer_values(self):
        graph = read_network(TOY_PATH)
        self.assertEqual(Conv(3, 3, 1, 16, pad_h=1, pad_w=1, has_batchnorm=True, has_relu=True),
                         graph.node('conv1').kind)
        self.assertEqual(FullyConnected(10), graph.node('fc').kind)


if __name__ == '__main__':
    unittest.main()
