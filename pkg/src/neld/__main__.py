"""Entry point for `python -m neld`."""

from .cli import app

app()
