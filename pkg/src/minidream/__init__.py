"""World-model agent in miniature: vision VAE, mixture-density RNN,
evolved linear controller, and pixel environments small enough to train
end to end on a desktop CPU."""

__version__ = "0.1.0"

from minidream.kernels import BACKEND

__all__ = ["BACKEND", "__version__"]
