import os
import shutil

import pytest


@pytest.fixture(scope="session")
def cli():
    path = os.environ.get("GAMMASENSE_CLI") or shutil.which("gammasense")
    if not path:
        pytest.skip("gammasense executable not found (set GAMMASENSE_CLI)")
    return path


SMALL_RIG = ["--width", "128", "--height", "96", "--focal", "140"]
TINY_NET = ["--target-size", "32", "--base-channels", "8", "--blocks", "1,1,1,1",
            "--ebn-expansion", "2", "--head-hidden", "32", "--batch-size", "4"]


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    import gammasense as gs

    root = tmp_path_factory.mktemp("data")
    spec = gs.default_scene_spec()
    spec["rig"].update(width=128, height=96, focal_px=140.0, alpha=140.0, beta=140.0, cx=63.5, cy=47.5)
    gs.generate_dataset(root, train=4, val=2, test=2, seed=5, spec=spec)
    return root
