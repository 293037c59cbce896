"""Structure-aware retrieval for SVG data visualizations.

The pipeline turns each chart into three comparable signatures: a graph
embedding of its element structure, a learned embedding of its rendered
bitmap, and a gradient-histogram baseline descriptor.  Retrieval is exact
cosine search over any one of them or over the fused structural+visual
vector.
"""

__version__ = "0.1.0"
