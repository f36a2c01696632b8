"""Relation-conditioned diffusion with attention pooling for few-shot KG completion."""

__version__ = "0.1.0"
