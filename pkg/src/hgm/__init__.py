"""Three-level hierarchical control stack on a planar surrogate robot."""

__version__ = "0.1.0"
