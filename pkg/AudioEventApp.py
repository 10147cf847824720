"""
Audio Event Recognition Main Code

This script is the entry point of the audio event recognition toolkit. It hands
the command line to `cli.main`, which runs one of the commands (synth, manifest,
stats, preprocess, train, eval, compare, runs) and returns its exit code:
0 on success, 2 for usage or configuration errors, 3 for numeric failures
(diverging training, non-finite activations) and 1 for everything else.

Dependencies:
- sys
- cli

Usage:
    python AudioEventApp.py --help
    python AudioEventApp.py synth --classes 4 --clips 40 --seconds 1 --seed 7 --out corpus/
    python AudioEventApp.py compare --manifest corpus/manifest.csv --seeds 5
"""
import sys

from cli import main

if __name__ == "__main__":
    sys.exit(main())
