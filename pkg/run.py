#!/usr/bin/env python3
"""Development entry point: loads .env and forwards to the cdlab CLI."""
import sys

from dotenv import load_dotenv

from cdlab.cli import main

# Load environment variables from .env file if it exists
load_dotenv()

if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
