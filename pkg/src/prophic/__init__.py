"""prophic: array-program model checking with counterexample-guided prophecy."""

__version__ = "0.1.0"
