"""Forward models and inverse analysis for SPA/TPA/ETPA fluorescence Z-scans."""

__version__ = "0.1.0"
