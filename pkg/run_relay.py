#!/usr/bin/env python3
"""
Standalone runner for RelaySim
Simulates scenarios, analyzes and plots runs and runs the verification suite
"""
from __future__ import annotations

import signal
import sys
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent))

from relaysim.cli import cli


def signal_handler(signum, frame):
    """Handle shutdown signals gracefully"""
    print("\n\nReceived shutdown signal. Stopping...")
    sys.exit(130)


def main():
    """Main entry point"""
    signal.signal(signal.SIGINT, signal_handler)
    signal.signal(signal.SIGTERM, signal_handler)
    return cli(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
