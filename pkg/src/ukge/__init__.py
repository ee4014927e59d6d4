"""Universal knowledge-graph embeddings: sameAs fusion, KGE training, link-prediction evaluation, serving."""

__version__ = "0.1.0"
