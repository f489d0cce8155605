"""Token-model backends: synthetic planted-quality, n-gram, remote."""

from .base import TokenModel
from .ngram import NGramModel
from .planted import (
    ANSWER_CLOSE_ID,
    ANSWER_OPEN_ID,
    CONTENT_BASE_ID,
    DIGIT_BASE_ID,
    EOS_ID,
    PlantedModel,
    PlantedTask,
)
from .remote import RemoteClient, RemoteModel, RemoteSession, reconstruct_probs

__all__ = [
    "TokenModel",
    "NGramModel",
    "PlantedModel",
    "PlantedTask",
    "RemoteClient",
    "RemoteModel",
    "RemoteSession",
    "reconstruct_probs",
    "EOS_ID",
    "ANSWER_OPEN_ID",
    "ANSWER_CLOSE_ID",
    "DIGIT_BASE_ID",
    "CONTENT_BASE_ID",
]
