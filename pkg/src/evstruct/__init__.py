"""Induction of event, entity, role, and event-relation type
classifications from decompositional annotations on document graphs."""

__version__ = "0.1.0"
