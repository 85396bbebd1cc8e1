"""Few-photon scattering off a two-level emitter in a one-sided cavity."""
__version__ = "0.1.0"
