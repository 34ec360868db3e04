"""Hermitian-symmetric Fourier watermarks for Gaussian diffusion latents."""

__version__ = "0.1.0"
