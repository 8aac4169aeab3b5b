import sys

from cli import commands

"""Entry point for the design-space explorer, see cli/commands.py for the subcommands.

Usage:
    `python main.py list`
    `python main.py simulate 1.0-SqNxt-23v5 --config 8x8_32KB`
"""

if __name__ == '__main__':
    sys.exit(commands.main())
