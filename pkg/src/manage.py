#!/usr/bin/env python
"""Command-line entry point of the angiodit pipeline."""

import os
import sys


def main():
    """Run pipeline commands (synth, train_vae, generate, ...)."""
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "settings")
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Install requirements.txt into the active "
            "environment before running pipeline commands."
        ) from exc
    execute_from_command_line(sys.argv)


if __name__ == "__main__":
    main()
