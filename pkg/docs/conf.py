import os
import re
import sys

sys.path.insert(0, os.path.abspath('..'))

# -- General configuration ------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.intersphinx',
    'sphinx.ext.mathjax',
    'sphinx.ext.napoleon',
]

autodoc_member_order = 'bysource'
autodoc_typehints = 'none'
napoleon_numpy_docstring = True
napoleon_google_docstring = False

intersphinx_mapping = {
    'py': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
    'scipy': ('https://docs.scipy.org/doc/scipy/', None),
    'pydantic': ('https://docs.pydantic.dev/latest/', None),
}

source_suffix = '.rst'
master_doc = 'index'

project = 'pidflow'
copyright = '2022 - Present, VarMonke & sudosnok'

with open('../pidflow/__init__.py') as f:
    version = re.search(r'^__version__ = \'([^\']+)\'', f.read(), re.MULTILINE).group(1)  # type: ignore
release = version

language = 'en'
exclude_patterns = ['_build']
pygments_style = 'friendly'

# -- Options for HTML output ----------------------------------------------

html_theme = 'basic'
htmlhelp_basename = 'pidflow.doc'
