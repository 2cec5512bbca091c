"""Inference service exposing classifiers, a masked-LM infiller, sentence
similarity, and optional quality scoring over a small JSON protocol."""

from .app import create_app
from .config import ServerConfig

__all__ = ["ServerConfig", "create_app"]

__version__ = "0.1.0"
