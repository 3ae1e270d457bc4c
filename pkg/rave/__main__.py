"""Entry point for python -m rave."""

from rave.cli import app

if __name__ == "__main__":
    app()
