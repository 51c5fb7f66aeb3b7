"""Multi-scale adaptive hypergraph forecasting on a small numpy autodiff engine."""

from .model import HypergraphForecaster, ModelConfig

__all__ = ["HypergraphForecaster", "ModelConfig"]
__version__ = "0.1.0"
