"""Gaussian primitives and the differentiable rasterizer."""
