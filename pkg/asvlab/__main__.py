# -*- coding: utf-8 -*-

import sys
import argparse

import asvlab
from asvlab.interfaces.cli import OUTPUT_FORMATS
from asvlab.utils.log import cli_logging_configuration, configure_logging


def _top_parser():
    # --out must not be taken for an abbreviation of --output-as
    parser = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    parser.add_argument(
        "--debug",
        action="store_true",
        default=False,
        help="Log and print debug messages",
    )
    parser.add_argument(
        "--quiet",
        action="store_true",
        default=False,
        help="Only log warnings and errors",
    )
    parser.add_argument(
        "--output-as",
        choices=OUTPUT_FORMATS,
        default=None,
        help="Output result in another format",
    )
    return parser


def main(argv=None):
    """Run an asvlab command and return its exit code"""
    argv = sys.argv[1:] if argv is None else list(argv)

    parser = _top_parser()
    try:
        opts, args = parser.parse_known_args(argv)
    except SystemExit as e:
        return e.code

    configure_logging(cli_logging_configuration(debug=opts.debug, quiet=opts.quiet))

    try:
        return asvlab.cli(args, top_parser=parser, output_as=opts.output_as)
    except SystemExit as e:
        # argparse exits with 2 on usage errors and 0 after --help
        return e.code if isinstance(e.code, int) else 2


if __name__ == "__main__":
    sys.exit(main())
