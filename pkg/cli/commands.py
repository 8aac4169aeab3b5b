import argparse
import contextlib
import logging
import os
import sys
from fractions import Fraction
from typing import Any, Dict, Iterator, List, Optional, TextIO, Tuple

from dataflow import DataflowError, DataflowMode
from hwmodel import AcceleratorConfig, ConfigError, UnknownPresetError, resolve_config
from hwmodel.accelerator import CONFIG_ENV_VAR, DEFAULT_PRESET, KB
from netir import (LayerGraph, NetworkError, elementwise_op_count, infer_shapes, layer_elementwise_ops, layer_macs,
                   layer_params, mac_count, param_count, read_network, write_network)
from simrun import SimulationError, compare, figure_data, simulate_network, simulation_output, sweep, sweep_grid
from tiler import TilingError
from zoo import UnknownNetworkError, ZooError, build_variant, catalog

"""Command line for the SqueezeNext design-space explorer.

Subcommands:
  list                 catalog networks with their published parameter and MAC counts
  describe NET         per-layer shapes, parameters and MACs of a network
  simulate NET         per-layer cycles, tiling and energy on one accelerator config
  compare NET...       several networks on one config, time and energy normalized by the best
  sweep NET            one network over a grid of array sizes, buffer sizes and sparsities
  export NET PATH      write a network file

NET is a catalog name (see `list`) or a network file path. Reports go to stdout, or to --output, as a table, CSV or
JSON. Logs go to stderr only with --log_stderr.

Exit codes: 0 on success, 1 when a network or config cannot be simulated (or a file cannot be written), 2 on usage
errors and unknown names or files.

Usage:
```
    python main.py simulate 1.0-SqNxt-23 --config 8x8_32KB --sparsity 0 --format csv
    python main.py compare SqueezeNet-v1.0 1.0-SqNxt-23v5 --config 16x16_128KB
    python main.py sweep 1.0-SqNxt-23v5 --pe 8x8,16x16 --buffer 32KB,64KB,128KB --sparsity 0,0.4
```
"""

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2

DEFAULT_LOG_FORMAT = '[%(levelname)s] %(message)s'
DATED_LOG_FORMAT = '%(asctime)s|' + DEFAULT_LOG_FORMAT
DEFAULT_LOG_LEVEL = os.getenv('LOG_LEVEL', 'WARNING')

DEFAULT_SWEEP_PE = '8x8,16x16'
DEFAULT_SWEEP_BUFFER = '32KB,128KB'
MODE_AUTO = 'auto'
MODES = {MODE_AUTO: None, 'ws': DataflowMode.WS, 'os': DataflowMode.OS}
SIZE_SUFFIXES = {'KB': KB, 'MB': KB * KB, 'B': 1}
NETWORK_FILE_SUFFIX = '.json'
TOTAL_ROW = 'total'


class UsageError(Exception):
    """A command line that names something that does not exist or cannot be read."""
    pass


def parse_pe_list(text: str) -> List[Tuple[int, int]]:
    """'8x8,16x16' -> [(8, 8), (16, 16)]"""
    arrays = []
    for item in text.split(','):
        try:
            rows, cols = (int(n) for n in item.lower().split('x'))
        except ValueError:
            raise argparse.ArgumentTypeError(f'expected ROWSxCOLS, got {item!r}')
        arrays.append((rows, cols))
    return arrays


def parse_size(text: str) -> int:
    """'32KB' -> 32768. A bare number is bytes."""
    text = text.strip().upper()
    for suffix, scale in SIZE_SUFFIXES.items():
        if text.endswith(suffix):
            number, multiplier = text[:-len(suffix)], scale
            break
    else:
        number, multiplier = text, 1
    try:
        return int(number) * multiplier
    except ValueError:
        raise argparse.ArgumentTypeError(f'expected a size such as 32KB, got {text!r}')


def parse_size_list(text: str) -> List[int]:
    return [parse_size(item) for item in text.split(',')]


def parse_fraction(text: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f'expected a number, got {text!r}')


def parse_fraction_list(text: str) -> List[Fraction]:
    return [parse_fraction(item) for item in text.split(',')]


def _millions(value: Optional[int], digits: int) -> str:
    return f'{value / 1e6:.{digits}f}M' if value is not None else '-'


def resolve_network(selector: str) -> LayerGraph:
    """A catalog name, or a network file when the selector ends in .json or names an existing path."""
    if selector.endswith(NETWORK_FILE_SUFFIX) or os.path.exists(selector):
        try:
            graph = read_network(selector)
        except OSError as e:
            raise UsageError(f'cannot read network file {selector}: {e.strerror}')
        return infer_shapes(graph)
    return build_variant(selector)


def resolve_accelerator(config: Optional[str], sparsity: Optional[Fraction] = None) -> AcceleratorConfig:
    """Preset or config file, with the command-line overrides on top."""
    if config and config.endswith('.json') and not os.path.exists(config):
        raise UsageError(f'cannot read config file {config}')
    cfg = resolve_config(config)
    if sparsity is not None:
        cfg = cfg.replace(weight_sparsity=sparsity)
    return cfg


@contextlib.contextmanager
def open_output(path: Optional[str]) -> Iterator[TextIO]:
    if not path:
        yield sys.stdout
        return
    with open(path, 'w') as f:
        yield f


def run_list(args):
    rows = []
    for entry in catalog(include_references=args.references):
        if args.format == simulation_output.FORMAT_TABLE:
            params, macs = _millions(entry.expected_params, 2), _millions(entry.expected_macs, 0)
        else:
            params, macs = entry.expected_params, entry.expected_macs
        rows.append(dict(name=entry.name, params=params, macs=macs, source=entry.source_table,
                         buildable=entry.buildable, description=entry.description))
    with simulation_output.writer_for_format(args.format, sys.stdout) as writer:
        writer.write_rows('networks', rows)


def describe_rows(graph: LayerGraph) -> List[Dict[str, Any]]:
    """One row per node, in network order, followed by a `total` row."""
    rows = []
    for node in graph.nodes:
        in_shapes = graph.input_shapes(node.id)
        out_shape = graph.output_shape(node.id)
        rows.append(dict(
            layer=node.id, kind=node.kind.kind, inputs=';'.join(node.inputs), shape=str(out_shape),
            params=layer_params(node.kind, in_shapes), macs=layer_macs(node.kind, in_shapes, out_shape),
            elementwise_ops=layer_elementwise_ops(node.kind, in_shapes, out_shape)))
    rows.append(dict(
        layer=TOTAL_ROW, kind=TOTAL_ROW, inputs='', shape='',
        params=param_count(graph).total, macs=mac_count(graph).total,
        elementwise_ops=elementwise_op_count(graph).total))
    return rows


def run_describe(args):
    graph = resolve_network(args.net)
    summary = dict(network=graph.name, input=str(graph.input_shape), layer_count=len(graph.nodes),
                   params=param_count(graph).total, macs=mac_count(graph).total)
    with open_output(args.output) as stream, simulation_output.writer_for_format(args.format, stream) as writer:
        writer.write_summary(summary)
        writer.write_rows(simulation_output.OUTPUT_LAYERS, describe_rows(graph))


def run_simulate(args):
    graph = resolve_network(args.net)
    cfg = resolve_accelerator(args.config, args.sparsity)
    logging.info(f'Simulating {graph.name} on {cfg.name} ({cfg.label}, sparsity {float(cfg.weight_sparsity):g})')
    result = simulate_network(graph, cfg, MODES[args.mode])

    with open_output(args.output) as stream, simulation_output.writer_for_format(args.format, stream) as writer:
        writer.write_summary(simulation_output.network_summary(result))
        writer.write_rows(simulation_output.OUTPUT_LAYERS, simulation_output.layer_rows(result))
        if args.verbose_tiling:
            writer.write_rows(simulation_output.OUTPUT_TILING, simulation_output.tiling_rows(result))

    if args.figure_data:
        series = figure_data(result, merge_same_config=args.merge)
        with open_output(args.figure_data) as stream:
            with simulation_output.CsvWriter(stream) as writer:
                writer.write_rows(simulation_output.OUTPUT_FIGURE, simulation_output.figure_rows(series))
        logging.info(f'Wrote {len(series)} figure series to {args.figure_data}')


def run_compare(args):
    cfg = resolve_accelerator(args.config, args.sparsity)
    rows = compare([resolve_network(net) for net in args.nets], cfg)
    with open_output(args.output) as stream, simulation_output.writer_for_format(args.format, stream) as writer:
        writer.write_rows(simulation_output.OUTPUT_COMPARISON, simulation_output.comparison_rows(rows))


def run_sweep(args):
    graph = resolve_network(args.net)
    base = resolve_accelerator(args.config)
    configs = sweep_grid(base, args.pe, args.buffer, args.sparsity)
    progress = args.progress and sys.stderr.isatty()
    logging.info(f'Sweeping {graph.name} over {len(configs)} grid points')
    points = sweep(graph, configs, use_multiprocessing=args.multiprocessing, num_processes=args.num_processes,
                   progress=progress, log_level=args.log_level)
    with open_output(args.output) as stream, simulation_output.writer_for_format(args.format, stream) as writer:
        writer.write_rows(simulation_output.OUTPUT_SWEEP, simulation_output.sweep_rows(points))


def run_export(args):
    graph = resolve_network(args.net)
    write_network(graph, args.path)
    logging.info(f'Exported {graph.name} to {args.path}')


def setup_logging(args):
    """Called by main(). Initialize the logger outputs, based on CLI arguments.

    Processes flags:
    --log_stderr: If True logs are streamed to stderr. Otherwise nothing is logged to stderr, so reports on stdout
        stay machine-readable.
    --log_file <FILENAME>: If used, logs are appended to the given filename, each line with its datetime.
    """
    logger = logging.getLogger()
    if args.log_level:
        logger.setLevel(args.log_level)

    handlers = []
    if args.log_stderr:
        handlers.append((logging.StreamHandler(), DEFAULT_LOG_FORMAT))
    if args.log_file:
        handlers.append((logging.FileHandler(args.log_file), DATED_LOG_FORMAT))
    for handler, log_format in handlers:
        handler.setFormatter(logging.Formatter(fmt=log_format))
        if args.log_level:
            handler.setLevel(args.log_level)
        logger.addHandler(handler)

    if not logger.hasHandlers():
        # Keeps logging's last-resort stderr handler quiet; errors are summarised by main().
        logger.addHandler(logging.NullHandler())


def _environment_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    env_group = parser.add_argument_group('Environment')
    env_group.add_argument('--log_level',
                           help='Sets the logging output level. Default from $LOG_LEVEL, else WARNING',
                           default=DEFAULT_LOG_LEVEL)
    env_group.add_argument('--log_stderr',
                           help='When true outputs log data to stderr.',
                           action=argparse.BooleanOptionalAction,
                           default=False)
    env_group.add_argument('--log_file',
                           help='If set, directs log output to the given filename',
                           default=None)
    return parser


def _add_output_arguments(parser: argparse.ArgumentParser, with_path: bool = True):
    output_group = parser.add_argument_group('Output')
    output_group.add_argument('--format',
                              help='Report format',
                              choices=simulation_output.ALL_FORMATS,
                              default=simulation_output.DEFAULT_FORMAT)
    if with_path:
        output_group.add_argument('--output', '-o',
                                  help='Write the report to this file instead of stdout',
                                  default=None)


def _add_config_argument(group):
    group.add_argument('--config',
                       help=f'Accelerator preset name or config file. Default from ${CONFIG_ENV_VAR}, '
                            f'else {DEFAULT_PRESET}',
                       default=None)


def setup_arguments(parser: argparse.ArgumentParser):
    """Adds every subcommand with its argument groups and flags to the parser."""
    environment = _environment_parser()
    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND', required=True)

    list_parser = subparsers.add_parser('list', parents=[environment], help='List catalog networks')
    list_parser.add_argument('--references',
                             help='Also list networks with published counts but no builder',
                             action=argparse.BooleanOptionalAction,
                             default=False)
    _add_output_arguments(list_parser, with_path=False)
    list_parser.set_defaults(handler=run_list)

    describe_parser = subparsers.add_parser('describe', parents=[environment],
                                            help='Per-layer shapes, parameters and MACs')
    describe_parser.add_argument('net', help='Catalog name or network file')
    _add_output_arguments(describe_parser)
    describe_parser.set_defaults(handler=run_describe)

    simulate_parser = subparsers.add_parser('simulate', parents=[environment], help='Simulate one network')
    simulate_parser.add_argument('net', help='Catalog name or network file')
    sim_group = simulate_parser.add_argument_group('Simulation')
    _add_config_argument(sim_group)
    sim_group.add_argument('--sparsity',
                           help='Override the weight sparsity of the config, in [0, 1)',
                           type=parse_fraction,
                           default=None)
    sim_group.add_argument('--mode',
                           help='Force one dataflow on every conv/fc layer instead of picking the faster',
                           choices=list(MODES),
                           default=MODE_AUTO)
    sim_group.add_argument('--verbose-tiling',
                           help='Also report the tiling plan of every tiled layer',
                           action='store_true')
    sim_group.add_argument('--figure-data',
                           help='Write per-layer cycles and efficiency as CSV to this path',
                           default=None)
    sim_group.add_argument('--merge',
                           help='In figure data, sum layers with the same configuration',
                           action=argparse.BooleanOptionalAction,
                           default=True)
    _add_output_arguments(simulate_parser)
    simulate_parser.set_defaults(handler=run_simulate)

    compare_parser = subparsers.add_parser('compare', parents=[environment],
                                           help='Compare networks on one config')
    compare_parser.add_argument('nets', help='Catalog names or network files', nargs='+')
    compare_group = compare_parser.add_argument_group('Simulation')
    _add_config_argument(compare_group)
    compare_group.add_argument('--sparsity',
                               help='Override the weight sparsity of the config, in [0, 1)',
                               type=parse_fraction,
                               default=None)
    _add_output_arguments(compare_parser)
    compare_parser.set_defaults(handler=run_compare)

    sweep_parser = subparsers.add_parser('sweep', parents=[environment],
                                         help='Simulate one network over a grid of configs')
    sweep_parser.add_argument('net', help='Catalog name or network file')
    grid_group = sweep_parser.add_argument_group('Grid')
    _add_config_argument(grid_group)
    grid_group.add_argument('--pe',
                            help='Comma separated PE array sizes',
                            type=parse_pe_list,
                            default=parse_pe_list(DEFAULT_SWEEP_PE))
    grid_group.add_argument('--buffer',
                            help='Comma separated global buffer sizes',
                            type=parse_size_list,
                            default=parse_size_list(DEFAULT_SWEEP_BUFFER))
    grid_group.add_argument('--sparsity',
                            help='Comma separated weight sparsities. Default is the config\'s',
                            type=parse_fraction_list,
                            default=None)
    run_group = sweep_parser.add_argument_group('Execution')
    run_group.add_argument('--multiprocessing',
                           help='When true, simulates grid points in a process pool.',
                           action=argparse.BooleanOptionalAction,
                           default=True)
    run_group.add_argument('--num_processes', '-p',
                           help='Number of parallel processes. If unset, uses the cpu count (at most one per point)',
                           type=int,
                           default=None)
    run_group.add_argument('--progress',
                           help='Show a progress bar on stderr when it is a terminal',
                           action=argparse.BooleanOptionalAction,
                           default=True)
    _add_output_arguments(sweep_parser)
    sweep_parser.set_defaults(handler=run_sweep)

    export_parser = subparsers.add_parser('export', parents=[environment], help='Write a network file')
    export_parser.add_argument('net', help='Catalog name or network file')
    export_parser.add_argument('path', help='Where to write the network file')
    export_parser.set_defaults(handler=run_export)


def validate_arguments(parser: argparse.ArgumentParser, args):
    """Check the CLI arguments for values argparse cannot check on its own."""
    if getattr(args, 'num_processes', None) is not None and args.num_processes < 1:
        parser.error('--num_processes must be at least 1')


def _report_failure(args, error: Exception):
    # One line on stderr, whether or not logs are streamed there too.
    logging.error(str(error))
    if not args.log_stderr:
        sys.stderr.write(f'error: {error}\n')


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog='main.py',
        description='Design-space exploration of SqueezeNext networks on a PE-array accelerator.')
    setup_arguments(parser)
    args = parser.parse_args(argv)
    validate_arguments(parser, args)
    setup_logging(args)

    try:
        args.handler(args)
    except (UnknownNetworkError, UnknownPresetError, UsageError) as e:
        _report_failure(args, e)
        return EXIT_USAGE
    except (NetworkError, ZooError, ConfigError, DataflowError, TilingError, SimulationError, OSError) as e:
        _report_failure(args, e)
        return EXIT_ERROR
    return EXIT_OK
