"""treepot: potential theory of tree and ultrametric matrices.

Core objects: rooted (possibly lazily generated) trees, strictly increasing
level weights, the tree matrix u(x,y) = w_{|x∧y|} and its q-matrix generator,
certified absorption/hitting/exit-measure computations, the boundary jump
process with its exact kernel and cascade simulator, and minimal tree
extensions of ultrametric matrices.
"""

__version__ = "0.1.0"
