"""Reference stdio JSON evaluation server for scalar test functions."""

from .landscapes import KINDS, make_landscape
from .server import RequestHandler, ServerConfig, build_config, main, serve

__all__ = [
    "KINDS",
    "RequestHandler",
    "ServerConfig",
    "build_config",
    "main",
    "make_landscape",
    "serve",
]
