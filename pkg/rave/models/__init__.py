"""Pydantic configuration and report models."""
