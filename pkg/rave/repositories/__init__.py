"""Artifact storage: images, bitstreams, checkpoints and score sidecars."""
