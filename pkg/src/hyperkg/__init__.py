"""Knowledge-hypergraph link prediction with positional-interaction encoders."""
__version__ = "0.1.0"
