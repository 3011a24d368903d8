"""Mutual-information token selection and one-class SVM detection of web attacks."""

from .errors import MiwafError
from .request_model import ClassLabel, Corpus, RawRequest, load_corpus, save_corpus

__all__ = ["ClassLabel", "Corpus", "MiwafError", "RawRequest", "load_corpus", "save_corpus"]
__version__ = "0.1.0"
