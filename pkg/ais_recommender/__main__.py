#!/usr/bin/env python3
"""
Entry point for running ais_recommender as a module
"""

from .cli import cli_main

if __name__ == "__main__":
    cli_main()
