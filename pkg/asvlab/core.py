# -*- coding: utf-8 -*-

import os
import json
import logging

import asvlab

logger = logging.getLogger("asvlab.core")


def during_unittests_run():
    return "TESTS_RUN" in os.environ


# Internationalization -------------------------------------------------


class Translator:
    """Internationalization class

    Provide a message catalog mechanism based on JSON files to translate
    a key in the proper locale.

    Keyword arguments:
        - locale_dir -- The directory where locale files are located
        - default_locale -- The default locale to use

    """

    def __init__(self, locale_dir, default_locale="en"):
        self.locale_dir = locale_dir
        self.locale = default_locale
        self._translations = {}

        # Attempt to load default translations
        if not self._load_translations(default_locale):
            logger.error(
                f"unable to load locale '{default_locale}' from '{locale_dir}'. Does the file '{locale_dir}/{default_locale}.json' exists?",
            )
        self.default_locale = default_locale

    def get_locales(self):
        """Return a list of the avalaible locales"""
        return sorted(
            f[:-5] for f in os.listdir(self.locale_dir) if f.endswith(".json")
        )

    def set_locale(self, locale):
        """Set the locale to use

        If the locale is not available, the default locale is used.

        Returns:
            True if the locale has been set, otherwise False

        """
        if locale not in self._translations:
            if not self._load_translations(locale):
                logger.debug(
                    "unable to load locale '%s' from '%s'", locale, self.locale_dir
                )
                self.locale = self.default_locale
                return False

        self.locale = locale
        return True

    def translate(self, key, /, *args, **kwargs):
        """Retrieve proper translation for a key

        Attempt to retrieve translation for a key using the current locale
        or the default locale if 'key' is not found.

        Keyword arguments:
            - key -- The key to translate

        """
        for locale in dict.fromkeys([self.locale, self.default_locale]):
            catalog = self._translations.get(locale, {})
            if key not in catalog:
                continue
            try:
                return catalog[key].format(*args, **kwargs)
            except Exception as e:
                error_message = (
                    "Failed to format translated string '%s': '%s' with arguments '%s' and '%s': %s(%s)"
                    % (key, catalog[key], args, kwargs, e.__class__.__name__, e)
                )
                if during_unittests_run():
                    raise Exception(error_message)
                logger.warning(error_message)
                return catalog[key]

        error_message = (
            "unable to retrieve string to translate with key '%s' for default locale 'locales/%s.json' file"
            % (key, self.default_locale)
        )
        if during_unittests_run():
            raise Exception(error_message)
        logger.warning(error_message)
        return key

    def _load_translations(self, locale, overwrite=False):
        """Load translations for a locale

        Keyword arguments:
            - locale -- The locale to load
            - overwrite -- True to overwrite existing translations

        Returns:
            True if the translations have been loaded, otherwise False

        """
        if not overwrite and locale in self._translations:
            return True

        try:
            with open(f"{self.locale_dir}/{locale}.json", "r", encoding="utf-8") as f:
                j = json.load(f)
        except IOError:
            return False
        else:
            self._translations[locale] = j
        return True


class AsvLab18n:
    """Internationalization service for asvlab

    Manage access to the message catalog shipped with the package.

    Keyword arguments:
        - default_locale -- The default locale to use

    """

    def __init__(self, default_locale="en"):
        self.default_locale = default_locale
        self.locale = default_locale
        self.locales_dir = os.path.join(os.path.dirname(__file__), "locales")
        self._global = Translator(self.locales_dir, default_locale)

    def set_locales_dir(self, locales_dir):
        if locales_dir:
            self.locales_dir = locales_dir
            self._global = Translator(locales_dir, self.default_locale)

    def set_locale(self, locale):
        """Set the locale to use"""
        self.locale = locale
        self._global.set_locale(locale)

    def g(self, key: str, /, *args, **kwargs) -> str:
        """Retrieve proper translation for a key

        Keyword arguments:
            - key -- The key to translate

        """
        return self._global.translate(key, *args, **kwargs)


# Errors ----------------------------------------------------------------


class AsvLabError(Exception):
    """asvlab base exception"""

    exit_code = 1

    def __init__(self, key, /, raw_msg=False, *args, **kwargs):
        if raw_msg:
            msg = key
        else:
            msg = asvlab.m18n.g(key, *args, **kwargs)
        super(AsvLabError, self).__init__(msg)
        self.key = None if raw_msg else key
        self.strerror = msg

    def content(self) -> str:
        return self.strerror


class AsvLabValidationError(AsvLabError):
    """Bad arguments, configuration documents or array shapes"""


class UsageError(AsvLabError):
    """An API was called out of order"""


class SimulationFault(AsvLabError):
    """The vessel state became non-finite"""


class DatasetFormatError(AsvLabError):
    """A records file could not be decoded"""


class TrainingDiverged(AsvLabError):
    """A loss became non-finite during optimization"""


class InvalidUsage(AsvLabValidationError):
    """The command line could not be understood"""

    exit_code = 2
