"""Graph-embedding toolkit for bot detection on social graphs."""
