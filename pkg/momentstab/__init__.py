# momentstab/__init__.py

from .common import MomentStabError
from .system_model import load_system, parse_system
