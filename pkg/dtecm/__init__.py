"""Digital-twin enabled hybrid channel model for THz urban macrocells"""
__version__ = "0.1.1"
__author__ = "Joseph Contreras Jr."
__license__ = "MIT"
__copyright__ = "Copyright 2018 Joseph Contreras Jr."

from .commands import cli  # noqa: E402
from .config import load_config  # noqa: E402
from .report import Report  # noqa: E402
