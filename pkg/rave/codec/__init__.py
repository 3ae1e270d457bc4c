"""Quantization, entropy coding and the RAVS container."""
