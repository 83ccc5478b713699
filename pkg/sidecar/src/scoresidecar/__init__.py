"""Reference scoring sidecar: one wire protocol for rerank/NLI/similarity."""

from .backends import BackendError, build_backend
from .server import make_server, serve
from .service import RequestError, ScoreService, SidecarConfig

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "RequestError",
    "ScoreService",
    "SidecarConfig",
    "build_backend",
    "make_server",
    "serve",
]
