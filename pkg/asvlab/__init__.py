# -*- coding: utf-8 -*-

import os

from asvlab.utils.log import install_logger_class

# module loggers are created at import time and need the SUCCESS level
install_logger_class()

from asvlab.core import (  # noqa: E402
    AsvLabError,
    AsvLab18n,
)

__title__ = "asvlab"
__version__ = "0.1.0"
__license__ = "AGPL 3.0"
__all__ = ["cli", "m18n", "AsvLabError", "ACTIONSMAP"]


m18n = AsvLab18n()

ACTIONSMAP = os.path.join(os.path.dirname(__file__), "data", "asvlab.yml")


def cli(args, top_parser, output_as=None, actionsmap=None, locales_dir=None):
    """Command line interface

    Execute an action of the actions map and print its result in a
    readable format.

    Keyword arguments:
        - args -- A list of argument strings
        - top_parser -- The top parser used to build the ActionsMapParser
        - output_as -- Output result in another format, see
            asvlab.interfaces.cli.Interface for possible values
        - actionsmap -- Path to an alternate actions map
        - locales_dir -- Path to an alternate locales directory

    Returns:
        The process exit code

    """
    import logging

    from asvlab.interfaces.cli import Interface as Cli

    m18n.set_locales_dir(locales_dir)

    try:
        load_only_category = args[0] if args and not args[0].startswith("-") else None
        Cli(
            top_parser=top_parser,
            load_only_category=load_only_category,
            actionsmap=actionsmap or ACTIONSMAP,
        ).run(args, output_as=output_as)
    except AsvLabError as e:
        logging.getLogger("asvlab").error(e.strerror)
        return e.exit_code
    except KeyboardInterrupt:
        logging.getLogger("asvlab").warning(m18n.g("operation_interrupted"))
        return 1
    return 0
