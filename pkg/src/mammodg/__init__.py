"""Cross-domain mass-detection evaluation and image harmonization toolkit."""

__version__ = "0.1.0"
