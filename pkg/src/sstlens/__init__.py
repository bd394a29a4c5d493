"""Toolkit for detecting server-side Google Analytics from crawl artifacts."""

__version__ = "0.1.0"
