"""Desk-scale laboratory for patch-trigger backdoor attacks on a tiny
image-to-text model: corpora, poisoning, training objectives, caption
metrics, and feature-space defense filters."""

__version__ = "0.1.0"
