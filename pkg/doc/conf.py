#!/usr/bin/env python3
# -*- coding: utf-8 -*-
#
# asvlab documentation build configuration file, created by
# sphinx-quickstart.

import os
import sys

sys.path.insert(0, os.path.abspath(".."))

from asvlab import __version__  # noqa: E402

# -- General configuration ------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.intersphinx",
    "sphinx.ext.todo",
    "sphinx.ext.viewcode",
]

templates_path = ["_templates"]
source_suffix = ".rst"
master_doc = "index"

project = "asvlab"
copyright = "2024, asvlab contributors"
author = "asvlab contributors"

version = __version__
release = __version__

language = "en"
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]
pygments_style = "sphinx"
todo_include_todos = True

# -- Options for HTML output ----------------------------------------------

html_theme = "classic"
html_sidebars = {"**": ["searchbox.html"]}
htmlhelp_basename = "asvlabdoc"

# -- Options for manual page output ---------------------------------------

man_pages = [(master_doc, "asvlab", "asvlab Documentation", [author], 1)]

intersphinx_mapping = {
    "python": ("https://docs.python.org/3", None),
    "numpy": ("https://numpy.org/doc/stable", None),
}
