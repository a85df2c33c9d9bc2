"""corsim: deterministic corridor testbed for trajectory-driven adaptive
signal control under limited sensing range."""

__version__ = "0.1.0"
