"""Smoke test for the Python extension.

Builds the `fringe-py` crate (unless FRINGE_PY_LIB points at a built library),
imports it and exercises simulation, phase retrieval and a pipeline run.
"""

import importlib.machinery
import importlib.util
import json
import math
import os
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def locate_library():
    env = os.environ.get("FRINGE_PY_LIB")
    if env:
        return Path(env)
    subprocess.run(
        ["cargo", "build", "--release", "-p", "fringe-py"], cwd=ROOT, check=True
    )
    target = Path(os.environ.get("CARGO_TARGET_DIR", ROOT / "target")) / "release"
    for name in ("libfringe.so", "libfringe.dylib", "fringe.dll"):
        if (target / name).exists():
            return target / name
    sys.exit("built library not found in " + str(target))


def load(path):
    loader = importlib.machinery.ExtensionFileLoader("fringe", str(path))
    spec = importlib.util.spec_from_loader("fringe", loader)
    module = importlib.util.module_from_spec(spec)
    loader.exec_module(module)
    return module


def main():
    fringe = load(locate_library())
    print("fringe", fringe.__version__)

    cams = fringe.simulate("tilted_plane", steps=3, periods=12, seed=0)
    assert len(cams) >= 2, "expected a multi-camera rig"
    cam = cams[0]
    w, h = cam["width"], cam["height"]
    assert len(cam["frames"]) == 3 and len(cam["frames"][0]) == w * h

    phi, _, mask = fringe.wrapped_phase(cam["frames"], w, h)
    errs = [
        math.remainder(p - t, 2 * math.pi)
        for p, t, m, tm in zip(phi, cam["wrapped"], mask, cam["mask"])
        if m and tm
    ]
    assert errs, "no valid pixels"
    rmse = math.sqrt(sum(e * e for e in errs) / len(errs))
    print(f"wrapped phase rmse {rmse:.2e} over {len(errs)} pixels")
    assert rmse < 1e-6

    try:
        fringe.wrapped_phase([[0.0]], 2, 2)
    except ValueError:
        pass
    else:
        raise AssertionError("bad frame size accepted")

    with tempfile.TemporaryDirectory() as tmp:
        config = json.dumps({"output": os.path.join(tmp, "run"), "seed": 1})
        report = json.loads(fringe.pipeline(config))
        print("pipeline order errors", report["orders"])
        assert report["orders"]["wrong"] == 0
        assert len(fringe.config_hash(config)) == 64

    print("smoke test passed")


if __name__ == "__main__":
    main()
