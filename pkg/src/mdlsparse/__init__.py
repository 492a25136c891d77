"""Parameter-free sparse modeling by codelength minimization.

The package selects sparse codes, dictionary atoms, dictionary size, and
low-rank models by minimizing a rigorously accounted description length
in bits, and applies the resulting models to compression reporting, image
denoising, texture segmentation, and video background estimation.
"""

__version__ = "0.1.0"
