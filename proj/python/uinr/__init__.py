"""Uncertainty-aware implicit neural representations for volume data."""

try:
    from ._uinr import *  # noqa: F401,F403
    from ._uinr import __doc__  # noqa: F401
except ImportError:  # pragma: no cover - in-tree builds place _uinr on sys.path
    from _uinr import *  # noqa: F401,F403
