"""conclab: numerical laboratory for uniform Hanson-Wright type concentration bounds."""
__version__ = "0.1.0"
