"""Mobile health monitoring: body sensor, personal gateway, cloud medical server."""

__version__ = "0.1.0"
