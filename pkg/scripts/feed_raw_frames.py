#!/usr/bin/env python3
"""Feed synthetic RGB frames down the raw byte protocol.

Writes to stdout by default, so it can drive a pipe-source stream:

    python3 scripts/feed_raw_frames.py --frames 100 > frames.raw
    # or live:  ... | multiform run --config pipe_config.yaml

Each frame shows a bright rectangle drifting across a gray background,
a stand-in for a walking person when exercising network backends.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from multiform.sources import write_raw_frame


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--frames", type=int, default=50)
    parser.add_argument("--width", type=int, default=640)
    parser.add_argument("--height", type=int, default=480)
    parser.add_argument("--out", default="-", help="output file, '-' for stdout")
    args = parser.parse_args()

    out = sys.stdout.buffer if args.out == "-" else open(args.out, "wb")
    for i in range(args.frames):
        frame = np.full((args.height, args.width, 3), 96, dtype=np.uint8)
        x = int((i / max(args.frames - 1, 1)) * (args.width - 80))
        y = args.height // 4
        frame[y : y + args.height // 2, x : x + 80] = (220, 180, 140)
        write_raw_frame(out, frame, i)
    if out is not sys.stdout.buffer:
        out.close()
        print(f"wrote {args.frames} frames to {args.out}", file=sys.stderr)


if __name__ == "__main__":
    main()
