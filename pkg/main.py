#!/usr/bin/env python3
"""
Command-line entry point.

Usage:
    python main.py run --config configs/harmonic_set1.yaml
    python main.py --help
"""

from langevin_mlmc.cli import main

if __name__ == "__main__":
    main()
