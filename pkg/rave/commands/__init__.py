"""CLI command modules for RAVE."""
