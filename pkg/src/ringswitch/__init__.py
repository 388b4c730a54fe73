"""Four-dimensional modulation formats: geometry, information rates, transmitter impairments and fiber simulation."""
__version__ = "0.1.0"
