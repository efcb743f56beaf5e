"""Activity recognition with latent temporal segmentation and a 3D CNN."""

__version__ = "0.1.0"
