"""
Branching McKean-Vlasov Toolkit - Main Entry Point
"""

import sys
import os

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from src.harness.cli import cli
from src.utils.logger import app_logger


def main():
    """Main application entry point."""
    app_logger.debug(f"Invoked with arguments: {sys.argv[1:]}")
    cli(prog_name="bmkv")


if __name__ == "__main__":
    main()
