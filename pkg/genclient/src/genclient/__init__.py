"""Reference client for the answer-generator wire protocol."""

from .protocol import (
    PROTOCOL_ENV,
    PROTOCOL_VERSION,
    LineageEntry,
    ProtocolError,
    Request,
    Response,
    parse_request,
    parse_response,
    serialize_request,
    serialize_response,
)
from .server import serve

__version__ = "0.1.0"
