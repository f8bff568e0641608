"""Physical-reasoning problem sets: simulation, hidden-property inference and program execution."""
__version__ = "0.1.0"
