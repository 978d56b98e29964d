"""Regenerate the 10-pair analyze fixture and its golden outputs.

Run from the repository root::

    python3 tests/data/make_analyze_fixture.py

The PNGs are 8-bit, so the fixture is exactly reproducible from the files
alone; the golden CSV/JSON are written by the CLI itself and then checked
against an independent regression in the tests.
"""

from pathlib import Path

import numpy as np

from palign import cli, tensor

ROOT = Path(__file__).parent / "analyze"


def main():
    rng = np.random.default_rng(7)
    for sub in ("input", "gt", "golden"):
        (ROOT / sub).mkdir(parents=True, exist_ok=True)
    for k in range(10):
        base = rng.uniform(0.15, 0.6, size=3)[:, None, None]
        img = np.clip(base + 0.1 * rng.standard_normal((3, 12, 12)), 0, 1)
        gain = rng.uniform(0.7, 1.4, size=3)[:, None, None]
        bias = rng.uniform(-0.05, 0.05, size=3)[:, None, None]
        gt = np.clip(gain * img + bias, 0, 1)
        tensor.save_png(tensor.ImageRGB(img), ROOT / "input" / f"pair_{k:02d}.png")
        tensor.save_png(tensor.ImageRGB(gt), ROOT / "gt" / f"pair_{k:02d}.png")
    cli.main(["analyze", str(ROOT / "input"), str(ROOT / "gt"), "-o", str(ROOT / "golden")])


if __name__ == "__main__":
    main()
