"""Wavelet p-leader multifractal analysis."""
__version__ = "0.1.0"
