"""
Command-line entrypoint for the vehicle analysis toolkit.
"""
import sys

from dotenv import load_dotenv

from cli.commands import main

# Load environment variables from .env file
load_dotenv()

if __name__ == "__main__":
    sys.exit(main())
