"""GNN-driven cache prefetching toolchain."""

__version__ = "0.1.0"
