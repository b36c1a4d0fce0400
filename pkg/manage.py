#!/usr/bin/env python
"""trm-lab's command-line utility: run, ablate, sweep-ratio, sweep, sharpness, diagnose."""
import os
import sys


def main():
    """Run lab commands."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'trmlab.settings')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Are you sure it's installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    argv = list(sys.argv)
    # Command modules use underscores; the documented flags use hyphens.
    if len(argv) > 1 and not argv[1].startswith('-'):
        argv[1] = argv[1].replace('-', '_')
    execute_from_command_line(argv)


if __name__ == '__main__':
    main()
