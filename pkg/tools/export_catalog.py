import argparse
import logging
import os

from netir import mac_count, param_count, write_network
from zoo import build_variant, catalog

"""Writes every buildable catalog network as a network file, named after the network.

Use this to get editable starting points for custom variants: edit a file, then pass its path to
`python main.py describe` or `simulate` in place of a catalog name.

Usage:
    `python -m tools.export_catalog --output_dir networks/`
"""

DEFAULT_OUTPUT_DIR = 'networks'


def main():
    parser = argparse.ArgumentParser('Exports the network catalog as network files')
    parser.add_argument('--output_dir', default=DEFAULT_OUTPUT_DIR)
    parser.add_argument('--log_level', default=os.getenv('LOG_LEVEL', 'INFO'))
    args = parser.parse_args()
    logging.basicConfig(level=args.log_level, format='[%(levelname)s] %(message)s')

    os.makedirs(args.output_dir, exist_ok=True)
    for entry in catalog():
        graph = build_variant(entry.name)
        path = os.path.join(args.output_dir, f'{entry.name}.json')
        write_network(graph, path)
        logging.info(f'{path}: {param_count(graph).total} params, {mac_count(graph).total} MACs')


if __name__ == '__main__':
    main()
