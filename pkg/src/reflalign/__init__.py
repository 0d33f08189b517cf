"""Entity alignment with relational reflection graph networks."""

__version__ = "0.1.0"
