"""Figure regeneration for dcmgsim simulation/sweep CSV outputs."""

from .figures import FIGURES, FigureSpec, render_all, render_figure

__all__ = ["FIGURES", "FigureSpec", "render_all", "render_figure"]
