"""Perfect simulation and connectivity analysis for birth-and-death processes of animals in random environments."""

from .animals import *  # noqa: F401,F403
from .clans import *  # noqa: F401,F403
from .connectivity import *  # noqa: F401,F403
from .environment import *  # noqa: F401,F403
from .estimators import *  # noqa: F401,F403
from .free_process import *  # noqa: F401,F403
from .models import *  # noqa: F401,F403
from .multiscale import *  # noqa: F401,F403
from .lattice import box, shell, sup_dist

__version__ = "0.1.0"
