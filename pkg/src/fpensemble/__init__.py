""" Ensembles of fingerprint representations

Encode fingerprint images under several input transformations, fuse the
resulting embeddings (feature, score or decision level), search galleries
exhaustively and measure verification and identification accuracy.
"""

from .core import ModelTag, ModelSubset, EmbeddingVector, cosine_similarity
from .gallery import Gallery, SearchResult
