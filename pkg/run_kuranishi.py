#!/usr/bin/env python3
"""
Kuranishi runner

Samples the low-mode ball at a flat base, solves the Kuranishi equation over
each sample and dumps the balancing map chi. At Theta with the default cutoff
the low modes are the constant pairs (xi, eta) and the zero set of chi is the
commuting cone.

Usage:
    python run_kuranishi.py --base 0,0 --radius 0.1 --samples 1000 --seed 3
"""

import sys
from pathlib import Path
from typing import Dict, Optional

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from config.settings import AppConfig
from src.core.gaugefield import FlatBase
from src.processors import kuranishi
from src.utils.experiment_manager import ExperimentConfig
from src.utils.io import output_path, write_results
from src.utils.logger import setup_logger

logger = setup_logger(__name__)


def run_kuranishi(config: ExperimentConfig, max_workers: Optional[int] = None) -> Dict:
    """
    Evaluate the balancing map on seeded samples of the low-mode ball.

    Raises:
        NoConvergence: a Kuranishi solve failed to reach its tolerance
    """
    max_workers = max_workers or AppConfig.THREADS
    base = FlatBase(*config.base)
    space = kuranishi.LowModeSpace(base, config.grid, mu=config.mu)

    print("\n" + "=" * 80)
    print(f"🧮 KURANISHI (base ({base.alpha:.6g}, {base.beta:.6g}), low-mode dimension {space.dimension}, "
          f"{config.samples} samples)")
    print("=" * 80)

    rng = np.random.default_rng(config.seed)
    samples = kuranishi.sample_ball(space, config.radius, config.samples, rng)
    table = kuranishi.balancing_table(samples, space, tol=config.tol, max_workers=max_workers)

    coords = table[[f"coord_{i}" for i in range(space.dimension)]].to_numpy()
    chi = table[[f"chi_{i}" for i in range(space.dimension)]].to_numpy()
    table["chi_norm"] = np.linalg.norm(chi, axis=1)
    table["pairing"] = np.einsum("ij,ij->i", coords, chi)

    summary = {
        "dimension": space.dimension,
        "mu": space.mu,
        "radius": config.radius,
        "samples": int(len(table)),
        "max_residual": float(table["residual"].max()) if len(table) else None,
        "max_chi_norm": float(table["chi_norm"].max()) if len(table) else None,
        "min_pairing": float(table["pairing"].min()) if len(table) else None,
        "config": config.to_dict(),
    }

    csv_path = output_path(config.out, config.name or "balancing")
    write_results(table, summary, csv_path)

    print(f"   Cutoff mu: {space.mu:.6g}")
    if summary["max_residual"] is not None:
        print(f"   Max Kuranishi residual: {summary['max_residual']:.3e}")
        print(f"   Max |chi|: {summary['max_chi_norm']:.3e}")
    print(f"\n✅ Output: {csv_path}")
    print("=" * 80)
    return summary


if __name__ == "__main__":
    from main import dispatch
    sys.exit(dispatch(["kuranishi"] + sys.argv[1:]))
