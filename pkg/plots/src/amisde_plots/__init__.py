"""Figure rendering for amisde benchmark CSV/JSON outputs."""

from .density_overlay import plot_density_overlay
from .ess_curves import plot_ess_curves
from .schema import SchemaError

__all__ = ["plot_density_overlay", "plot_ess_curves", "SchemaError"]

__version__ = "0.1.0"
