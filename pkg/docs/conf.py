# -*- coding: utf-8 -*-
#
# ncp-detect documentation build configuration file

import os
import sys

sys.path.insert(0, os.path.abspath('..'))

# -- General configuration ------------------------------------------------

needs_sphinx = '4.0'

# sphinx_click renders the command line reference from ncp_detect.cli
extensions = ['sphinx.ext.autodoc', 'sphinx_click', 'reno.sphinxext']

source_suffix = '.rst'

master_doc = 'index'

project = 'ncp-detect'
copyright = '2024-, the ncp-detect developers'
author = 'the ncp-detect developers'

# The short X.Y version and the full version are filled in by pbr at build
# time; leave them empty here.
version = ''
release = ''

exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']

pygments_style = 'sphinx'

todo_include_todos = False

autodoc_member_order = 'bysource'

# -- Options for HTML output ----------------------------------------------

html_theme = 'alabaster'

# numpy and pydantic types in signatures have no intersphinx targets
autodoc_typehints = 'none'
nitpick_ignore_regex = [('py:class', r'(numpy|np|pydantic|ty|typing)\..*')]
