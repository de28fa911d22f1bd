"""Reference external scorer for the DTWCERT line protocol."""

__version__ = "0.1.0"
