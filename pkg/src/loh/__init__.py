"""Logic of Hypotheses: learnable choice operators over Gödel fuzzy logic."""
__version__ = "0.1.0"
