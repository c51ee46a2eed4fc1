"""
Command-line entry point
"""

from src.cli.app import main

__all__ = ['main']
