"""
High-order LDG solver for the p-Laplace equation on triangular meshes.
"""
