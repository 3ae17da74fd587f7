import os
PACKAGEDIR = os.path.abspath(os.path.dirname(__file__))

from .version import __version__
from .utils import *
from .subspace import *
from .solver import *
from .powergrid import *
from .sampling import *
