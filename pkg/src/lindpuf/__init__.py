"""Random Lindbladian ensembles, linear-response checks and Lindbladian-PUF protocols."""

__version__ = "0.1.0"
