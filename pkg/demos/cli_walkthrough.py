"""Drive the command line end to end in a scratch directory.

Creates a tiny dataset, degrades it, trains a miniature model for a few
steps, restores an image with the trained checkpoint, and scores the result.
Every stage shells out to `python3 -m bjdd ...` exactly as a user would,
and the script prints each command before running it.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np
from scipy import ndimage

from bjdd.fileio import save_png


def run(*args):
    cmd = [sys.executable, "-m", "bjdd", *map(str, args)]
    print("$", " ".join(cmd[2:]))
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.stdout:
        print(proc.stdout, end="")
    if proc.returncode != 0:
        print(proc.stderr, end="")
        raise SystemExit(f"command failed with exit code {proc.returncode}")


def main():
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        data = root / "data"
        data.mkdir()
        rng = np.random.default_rng(0)
        for i in range(4):
            coarse = rng.random((3, 4, 4))
            img = np.clip(ndimage.zoom(coarse, (1, 4, 4), order=3), 0, 1)
            save_png(data / f"img{i}.png", img.astype(np.float32))
        print(f"wrote 4 training images of 16x16 to {data}\n")

        run("degrade", "--input", data, "--output", root / "degraded",
            "--sigma", "10", "--seed", "1")
        print()

        cfg = root / "run.json"
        cfg.write_text(json.dumps({
            "steps": 40, "batch_size": 4, "lr": 1e-3,
            "res_blocks": 2, "trunk_width": 16,
            "sigma_range": [0.0, 10.0], "seed": 0,
        }, indent=2))
        run("train", "--config", cfg, "--data", data, "--out", root / "run")
        print()

        run("infer", "--model", root / "run" / "ckpt_final.bjdd",
            "--input", data / "img0.png", "--output", root / "restored")
        print()

        run("eval", "--model", root / "run" / "ckpt_final.bjdd",
            "--data", data, "--sigma", "10", "--seed", "2",
            "--report", root / "report.csv")
        print()
        print("evaluation report:")
        print((root / "report.csv").read_text())


if __name__ == "__main__":
    main()
