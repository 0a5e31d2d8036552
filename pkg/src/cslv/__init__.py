"""Concurrent separation logic: parser, semantics, proof checker and bounded model checker."""

__version__ = "0.1.0"
