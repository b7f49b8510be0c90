"""Toxic span detection: token, span, multi-span, span+token and CRF taggers
over character-offset annotations, with offset-set ensembling and
Integrated Gradients attribution."""

__version__ = "0.1.0"
