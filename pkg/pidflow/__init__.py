# == __init__.py ==#

__title__ = 'pidflow'
__authors__ = 'VarMonke', 'sudosnok'
__version__ = '0.1.0'
__license__ = 'MIT'
__copyright__ = 'Copyright (c) 2022-present VarMonke & sudosnok'

from .analysis import *
from .cache import *
from .config import *
from .dynamics import *
from .emit import *
from .exceptions import *
from .graph import *
from .integrator import *
from .objectives import *
from .presets import *
from .runner import *
