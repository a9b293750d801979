"""Ontology-aware knowledge graph completion toolkit."""

__version__ = "0.1.0"
