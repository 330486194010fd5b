# -*- coding: utf-8 -*-

import os
import logging
import argparse
from json.encoder import JSONEncoder
from typing import Optional

import numpy as np

logger = logging.getLogger("asvlab.interface")

# argument types an actions map may name
ARGUMENT_TYPES = {"int": int, "float": float, "str": str}


# Base Class -----------------------------------------------------------


class BaseActionsMapParser:
    """Actions map's base Parser

    Each interface implements an ActionsMapParser class derived from this
    one. It is used to parse the main parts of the actions map (i.e.
    global arguments, categories and actions).

    Keyword arguments:
        - parent -- A parent BaseActionsMapParser derived object

    """

    def __init__(self, parent=None, **kwargs):
        if not parent:
            logger.debug("initializing base actions map parser for %s", self.interface)

    """The name of the interface for which it is the parser"""
    interface: Optional[str] = None

    @staticmethod
    def format_arg_names(name, full):
        """Format argument name

        Return the list of option strings used for the argument, depending
        on its 'full' parameter.

        Keyword arguments:
            - name -- The argument name
            - full -- The argument's 'full' parameter

        """
        raise NotImplementedError("derived class must override this method")

    def add_category_parser(self, name, **kwargs):
        """Add a parser for a category and return it

        Keyword arguments:
            - name -- The category name

        """
        raise NotImplementedError(
            "derived class '%s' must override this method" % self.__class__.__name__
        )

    def add_action_parser(self, name, tid, **kwargs):
        """Add a parser for an action and return an argument parser for it

        Keyword arguments:
            - name -- The action name
            - tid -- The tuple identifier of the action

        """
        raise NotImplementedError(
            "derived class '%s' must override this method" % self.__class__.__name__
        )

    def parse_args(self, args, **kwargs):
        """Parse a list of argument strings into a namespace"""
        raise NotImplementedError(
            "derived class '%s' must override this method" % self.__class__.__name__
        )


# Argument parser ------------------------------------------------------


class _ExtendedSubParsersAction(argparse._SubParsersAction):
    """Subparsers with extended properties for argparse

    It provides the following additional property at initialization,
    e.g. using `parser.add_subparsers`:
      - required -- Either the subparser is required or not (default: False)

    """

    def __init__(self, *args, **kwargs):
        required = kwargs.pop("required", False)
        super(_ExtendedSubParsersAction, self).__init__(*args, **kwargs)
        self.required = required


class ExtendedArgumentParser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        super(ExtendedArgumentParser, self).__init__(*args, **kwargs)

        # Register additional actions
        self.register("action", "parsers", _ExtendedSubParsersAction)

    def add_arguments(self, arguments, extraparser, format_arg_names=None):
        for argument_name, argument_options in arguments.items():
            argument_options = dict(argument_options)
            names = format_arg_names(
                str(argument_name), argument_options.pop("full", None)
            )

            if "type" in argument_options:
                type_name = argument_options["type"]
                try:
                    argument_options["type"] = ARGUMENT_TYPES[type_name]
                except KeyError:
                    raise TypeError(
                        "unknown type '%s' for argument '%s'" % (type_name, argument_name)
                    )

            if "extra" in argument_options:
                extra = argument_options.pop("extra")
                argument_dest = self.add_argument(*names, **argument_options).dest
                extraparser.add_argument(self.get_default("_tid"), argument_dest, extra)
                continue

            self.add_argument(*names, **argument_options)


class JSONExtendedEncoder(JSONEncoder):
    """Extended JSON encoder

    Extend default JSON encoder to recognize numpy scalars and arrays,
    sets and paths. It never raises if the object can't be encoded and
    returns its repr instead.

    """

    def default(self, o):
        """Return a serializable object"""
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (set, tuple)):
            return list(o)
        if isinstance(o, os.PathLike):
            return os.fspath(o)

        logger.warning(
            "cannot properly encode in JSON the object %s, returned repr is: %r",
            type(o),
            o,
        )
        return repr(o)
