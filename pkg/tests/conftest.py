"""
Shared fixtures: camera, bundled bank, seeded generators.
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# Add the project root to Python path
ROOT = Path(__file__).parent.parent
sys.path.append(str(ROOT))

from geometry.camera import CameraIntrinsics  # noqa: E402
from models.shape_bank import load_bank  # noqa: E402

BANK_PATH = ROOT / "data" / "shape_bank.json"
KITTI_LABEL = ROOT / "data" / "kitti" / "label_2" / "000000.txt"
KITTI_CALIB = ROOT / "data" / "kitti" / "calib" / "000000.txt"


@pytest.fixture(scope="session")
def bank():
    return load_bank(BANK_PATH)


@pytest.fixture
def camera():
    return CameraIntrinsics(fx=700.0, fy=700.0, cx=600.0, cy=180.0, img_w=1242, img_h=375)


@pytest.fixture
def kitti_camera():
    return CameraIntrinsics(fx=721.5377, fy=721.5377, cx=609.5593, cy=172.854, img_w=1242, img_h=375)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
