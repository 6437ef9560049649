from .backend import (
    Backend,
    BackendConfig,
    ChatRequest,
    ChatResponse,
    HttpChatBackend,
    MockBackend,
    ask_structured,
    complete,
    make_backend,
    mock_score_profile,
)
from .parsing import extract_structured_block

__all__ = [
    "Backend",
    "BackendConfig",
    "ChatRequest",
    "ChatResponse",
    "HttpChatBackend",
    "MockBackend",
    "ask_structured",
    "complete",
    "extract_structured_block",
    "make_backend",
    "mock_score_profile",
]
