"""Compositional set queries over embedded knowledge bases.

Weighted entity sets are represented as a dense centroid plus a count-min
sketch; set and relational operators act on that pair via inner-product
retrieval over embedded triples.
"""

from .kernels import BACKEND

__all__ = ["BACKEND"]
__version__ = "0.1.0"
