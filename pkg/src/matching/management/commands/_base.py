"""
Shared behaviour of the toolkit's management commands.

Exit codes:
- 0: success
- 1: parse error or bad flags (argparse errors included)
- 2: invalid problem
- 3: solver anomaly (monotonicity violation)
- 4: self-check failure
"""

import argparse
import logging
import sys

from django.core.management.base import BaseCommand, CommandError

EXIT_PARSE_ERROR = 1
EXIT_INVALID_PROBLEM = 2
EXIT_SOLVER_ANOMALY = 3
EXIT_SELFCHECK_FAILED = 4


def positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got '{text}'")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def nonnegative_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got '{text}'")
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {value}")
    return value


class HypermatchCommand(BaseCommand):
    """
    Base command: argument errors exit with code 1 and ``--verbosity 2``
    turns on debug logging of the ``matching`` package.
    """

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        # Makes CommandParser.error raise CommandError instead of exiting with 2.
        parser.called_from_command_line = False
        return parser

    def run_from_argv(self, argv):
        try:
            super().run_from_argv(argv)
        except CommandError as exc:
            self.stderr.write(f'CommandError: {exc}')
            sys.exit(exc.returncode)

    def execute(self, *args, **options):
        if options.get('verbosity', 1) >= 2:
            logging.getLogger('matching').setLevel(logging.DEBUG)
        return super().execute(*args, **options)

    def add_threading_arguments(self, parser):
        parser.add_argument(
            '--threads', type=nonnegative_int, default=None,
            help='Worker threads, 0 for one per CPU (default: HYPERMATCH_THREADS).',
        )
        parser.add_argument(
            '--deterministic', action='store_true',
            help='Sequential execution and byte-stable output files.',
        )
