"""
Regenerate the bundled synthetic shape bank (data/shape_bank.json).
"""
import argparse
import logging
import sys
from pathlib import Path

# Add parent directory to sys.path to allow importing from other modules
sys.path.append(str(Path(__file__).parent.parent))
from models.synthetic import MESH_GRID, build_synthetic_bank

# Set up logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


def build_shape_bank(out_path="data/shape_bank.json", grid=MESH_GRID):
    """
    Build the synthetic bank and write it as canonical JSON.

    Args:
        out_path: Destination relative to the project root
        grid: Mesh subdivisions per box face
    """
    project_root = Path(__file__).parent.parent
    target = project_root / out_path
    bank = build_synthetic_bank(grid=grid)
    bank.save(target)
    stats = bank.get_bank_stats()
    logger.info(f"Bank stats: {stats['n_models']} models, {stats['n_parts']} parts, faces {stats['n_mesh_faces']}")
    return target


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Build the synthetic shape bank")
    parser.add_argument("--out", default="data/shape_bank.json")
    parser.add_argument("--grid", type=int, default=MESH_GRID)
    args = parser.parse_args()
    build_shape_bank(args.out, args.grid)
