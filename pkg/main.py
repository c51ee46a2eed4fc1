#!/usr/bin/env python3
"""
spectro-adv - adversarial examples for spectrogram signal detectors

Main entry point for the command line.
"""

import sys

from src.cli.app import main


if __name__ == "__main__":
    sys.exit(main())
