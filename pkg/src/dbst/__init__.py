"""Self-training with MC-dropout pseudo-labels, and cross-domain centroid adaptation."""

__version__ = "0.1.0"
