"""Figure rendering for the mean-field risk simulator's CSV outputs."""

from .figures import KINDS, FigureSpec, SchemaError, build_figure, render

__version__ = "0.1.0"
