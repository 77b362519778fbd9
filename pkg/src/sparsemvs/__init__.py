"""Sparse multi-view stereo: coarse-to-fine volumetric reconstruction with
occlusion-aware view-pair selection, plus the sparse-MVS evaluation protocol."""

__version__ = "0.1.0"
