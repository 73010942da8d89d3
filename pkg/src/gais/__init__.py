"""Instance selection with a graph attention network.

Training rows are split into overlapping chunks, each chunk becomes a
similarity graph, and a two-layer attention model trained across the chunks
scores every row by its confidence.  Rows whose confidence reaches a threshold
form the reduced training set.
"""

__version__ = "0.1.0"
