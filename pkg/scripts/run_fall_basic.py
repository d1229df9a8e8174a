#!/usr/bin/env python3
"""Run the shipped fall_basic scenario and show what comes out.

The scenario scripts five fall-positive samples followed by three
negatives through a one-camera pipeline: the vote window raises a fall
event at the fifth sample and clears it once the window mode flips.
"""

import json
import shutil
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from multiform.config import load_config
from multiform.engine import Engine


def main():
    scenario = Path(__file__).resolve().parent.parent / "scenarios" / "fall_basic"
    workdir = Path(tempfile.mkdtemp(prefix="fall_basic_")) / "fall_basic"
    shutil.copytree(scenario, workdir)

    cfg = load_config(workdir / "config.yaml")
    report = Engine(cfg, fixed_clock=True, collect_events=True).run()

    stats = report.streams["cam0"]
    print(f"processed {stats.frames} frames, sampled {stats.sampled}")
    for event in report.events:
        print(
            f"  {event.state:>7} {event.action} over frames "
            f"{event.window_start}..{event.window_end} "
            f"({event.vote_count}/{event.window_size} votes)"
        )
    print(f"\nevent log ({workdir / 'events.jsonl'}):")
    for line in (workdir / "events.jsonl").read_text().splitlines():
        entry = json.loads(line)
        print(f"  {json.dumps(entry, sort_keys=True)[:120]}...")


if __name__ == "__main__":
    main()
