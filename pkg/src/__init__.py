"""Uniform-hyperbolicity spectral classification for 1D discrete Schrodinger operators."""
