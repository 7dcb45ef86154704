"""Body-brain co-optimisation of 2D voxel soft robots with Darwinian or Lamarckian inheritance."""

__version__ = "0.1.0"
