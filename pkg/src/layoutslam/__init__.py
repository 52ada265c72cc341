"""Manhattan-world layout SLAM posed as sparse convex model selection."""

__version__ = "0.1.0"
