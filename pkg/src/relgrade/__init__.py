"""Retrieval and relevance-grading toolkit for RAG pipelines."""

__version__ = "0.1.0"
