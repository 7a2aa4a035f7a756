from .core import (
    DuplicateRatingError,
    FinalizedError,
    IncompleteSessionError,
    ReviewError,
    ReviewItem,
    SessionStore,
    UnknownEntityError,
)

__all__ = [
    "DuplicateRatingError",
    "FinalizedError",
    "IncompleteSessionError",
    "ReviewError",
    "ReviewItem",
    "SessionStore",
    "UnknownEntityError",
]
