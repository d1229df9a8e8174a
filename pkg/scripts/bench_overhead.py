#!/usr/bin/env python3
"""Sweep sampling periods over a scripted pipeline and report throughput.

Shows how much headroom the orchestration leaves for real inference:
with zero-cost scripted backends the per-frame overhead is what the
engine itself spends on routing, cropping bookkeeping and voting.
"""

import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from multiform.config import load_config
from multiform.engine import bench, render_bench

FRAMES = 5000

CONFIG = """
streams:
  - {{id: cam0, source: {{kind: synthetic, frames: {frames}}}}}
detector:
  backend: {{kind: scripted, fixture: det.txt}}
registry:
  - {{action: fall, forms: [whole], handler: classifier fall}}
  - {{action: sleep, forms: [whole, upper], handler: classifier sleep}}
  - {{action: on_duty, forms: [whole, upper, part], handler: counter}}
classifiers:
  fall:
    labels: [fall, sit_on_furniture, other]
    positive: [fall]
    backend: {{kind: scripted, fixture: cls.txt}}
  sleep:
    labels: [sleep, sit, nosleep]
    positive: [sleep]
    backend: {{kind: scripted, fixture: sleep.txt}}
sampler: {{period: {period}, window: 5}}
"""


def main():
    workdir = Path(tempfile.mkdtemp(prefix="bench_"))
    (workdir / "det.txt").write_text(
        "".join(
            f"{i} whole 560 180 160 400 0.9\n{i} upper 570 180 140 160 0.8\n"
            for i in range(FRAMES)
        )
    )
    (workdir / "cls.txt").write_text(
        "labels: fall, sit_on_furniture, other\ndefault: 0.1 0.2 0.7\n"
    )
    (workdir / "sleep.txt").write_text("labels: sleep, sit, nosleep\ndefault: 0.1 0.2 0.7\n")

    for period in (1, 5, 25):
        (workdir / "cfg.yaml").write_text(CONFIG.format(frames=FRAMES, period=period))
        rows = bench(load_config(workdir / "cfg.yaml"))
        print(f"=== period {period} ===")
        sys.stdout.write(render_bench(rows))
        print()


if __name__ == "__main__":
    main()
