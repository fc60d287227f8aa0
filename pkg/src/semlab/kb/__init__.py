"""Private knowledge base: disambiguation, correction and SNR-directed rewriting."""
from .base import Background, DiskCache, IdentityKb, KbBackend, KbExchange
from .llm import KbConfigError, LlmClientConfig, LlmKb
from .mock import MockKb, content_words, word_count
from .templates import TemplateError, render_prompt

__all__ = [
    "Background",
    "DiskCache",
    "IdentityKb",
    "KbBackend",
    "KbConfigError",
    "KbExchange",
    "LlmClientConfig",
    "LlmKb",
    "MockKb",
    "TemplateError",
    "content_words",
    "render_prompt",
    "word_count",
]
