"""HTTP service wrapping the mining pipeline.

The CLI talks to these endpoints either in-process or over the wire;
anything the CLI can do, a plain HTTP client can do too.
"""

from .app import app

__all__ = ["app"]
