"""Sparse-complementary convolution fusion.

Deterministic checkerboard kernel masks, a zero-skipping direct convolution
engine with exact multiply-accumulate accounting, the fusion module that
combines the paired sparse branches, an analytic cost model, and a small
reverse-mode trainer that preserves the structural sparsity.

Submodules are imported explicitly (``from scfusion import conv, fusion, ...``);
the package root stays import-light so the CLI can cap BLAS threads before
numpy loads.
"""

__version__ = "0.1.0"
