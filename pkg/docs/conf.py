# Sphinx configuration for the pseudo-action docs.
# Build with: sphinx-build -b html docs docs/_build/html

import os
import sys

sys.path.insert(0, os.path.abspath(".."))

project = "pseudo-action"
copyright = "2025, fresh-milkshake"
author = "fresh-milkshake"

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.napoleon",
    "sphinx.ext.viewcode",
    "sphinx.ext.intersphinx",
    "sphinx.ext.mathjax",
    "sphinx.ext.doctest",
    "sphinx_rtd_theme",
]

master_doc = "index"
exclude_patterns = ["_build"]
language = "en"

html_theme = "sphinx_rtd_theme"
html_theme_options = {"navigation_depth": 3, "collapse_navigation": False}

# Google-style docstrings with "Examples:" blocks
napoleon_google_docstring = True
napoleon_numpy_docstring = False
napoleon_use_admonition_for_examples = True
napoleon_use_ivar = True

autodoc_default_options = {"members": True, "member-order": "bysource"}
autodoc_typehints = "description"

intersphinx_mapping = {
    "python": ("https://docs.python.org/3/", None),
    "numpy": ("https://numpy.org/doc/stable/", None),
}
