#!/usr/bin/env python3
"""
Retraction runner

Flows near-flat initial data to flat connections and reads off the limiting
pillowcase points. A batch draws seeded random perturbations (seed, seed+1, ...)
and retracts them in parallel; with --refine each draw is repeated at twice the
grid size to check that the limit point is resolution independent.

Usage:
    python run_retraction.py --grid 16 --init random:0.05 --batch 50 --seed 1 --refine
"""

import sys
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import pandas as pd

sys.path.insert(0, str(Path(__file__).parent))

from config.settings import AppConfig
from src.core.gaugefield import FlatBase, curvature
from src.core.lattice import get_workspace, l2_norm
from src.exceptions import YMLabError
from src.processors import flow, moduli
from src.utils.experiment_manager import ExperimentConfig
from src.utils.initial_data import parse_init
from src.utils.io import output_path, write_csv, write_results
from src.utils.logger import setup_logger

from run_flow import build_flow_config

logger = setup_logger(__name__)

RETRACTION_COLUMNS = ["seed", "alpha", "beta", "stratum", "curvature_initial", "curvature_final",
                      "commutator_norm", "t_final", "steps"]

# Thread-safe console output
print_lock = threading.Lock()


def _retract_one(config: ExperimentConfig, seed: int, grid: int) -> Dict:
    initial = parse_init(config.init, grid, FlatBase(*config.base), seed)
    ws = get_workspace(grid)
    f0 = l2_norm(curvature(initial, ws))
    flow_config = build_flow_config(config, initial)
    point, trajectory = flow.retract(initial, flow_config, workspace=ws)
    rho = moduli.holonomy(trajectory.terminal, ws)
    return {
        "seed": seed,
        "alpha": point.alpha,
        "beta": point.beta,
        "stratum": moduli.classify(point).label,
        "curvature_initial": f0,
        "curvature_final": l2_norm(curvature(trajectory.terminal, ws)),
        "commutator_norm": rho.commutator_norm,
        "t_final": float(trajectory.times[-1]),
        "steps": trajectory.n_steps,
        "trajectory": trajectory,
    }


def _process_seed(config: ExperimentConfig, seed: int) -> Dict:
    row = _retract_one(config, seed, config.grid)
    if config.refine:
        fine = _retract_one(config, seed, 2 * config.grid)
        row["alpha_refined"] = fine["alpha"]
        row["beta_refined"] = fine["beta"]
        row["refine_shift"] = moduli.pillowcase_dist(moduli.PillowcasePoint(row["alpha"], row["beta"]),
                                                     moduli.PillowcasePoint(fine["alpha"], fine["beta"]))
    return row


def run_retraction(config: ExperimentConfig, max_workers: Optional[int] = None) -> Dict:
    """
    Retract a batch of initial data and write one row per seed.

    Returns:
        JSON summary of the batch

    Raises:
        YMLabError: the first failing seed, after the successful rows have been written
    """
    max_workers = max_workers or AppConfig.THREADS
    seeds = [config.seed + i for i in range(config.batch)]

    print("\n" + "=" * 80)
    print(f"🧲 RETRACTION ({len(seeds)} initial data, grid {config.grid}, workers: {max_workers})")
    print("=" * 80)

    rows: List[Dict] = []
    failures: List[Tuple[int, YMLabError]] = []
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        future_to_seed = {executor.submit(_process_seed, config, seed): seed for seed in seeds}
        for future in as_completed(future_to_seed):
            seed = future_to_seed[future]
            try:
                row = future.result()
                rows.append(row)
                with print_lock:
                    print(f"  ✓ seed {seed}: ({row['alpha']:.6f}, {row['beta']:.6f}) {row['stratum']}, "
                          f"||F|| {row['curvature_initial']:.2e} -> {row['curvature_final']:.2e}")
            except YMLabError as e:
                failures.append((seed, e))
                logger.error(f"Retraction failed for seed {seed}: {str(e)}")
                with print_lock:
                    print(f"  ✗ seed {seed}: {type(e).__name__}: {str(e)}")

    rows.sort(key=lambda r: r["seed"])
    columns = list(RETRACTION_COLUMNS)
    if config.refine:
        columns += ["alpha_refined", "beta_refined", "refine_shift"]
    table = pd.DataFrame([{k: r[k] for k in columns} for r in rows], columns=columns)

    summary = {
        "requested": len(seeds),
        "retracted": len(rows),
        "failed": len(failures),
        "max_curvature_final": float(table["curvature_final"].max()) if len(table) else None,
        "max_commutator_norm": float(table["commutator_norm"].max()) if len(table) else None,
        "config": config.to_dict(),
    }
    if config.refine and len(table):
        summary["max_refine_shift"] = float(table["refine_shift"].max())

    csv_path = output_path(config.out, config.name or "retraction")
    write_results(table, summary, csv_path)

    if len(rows) == 1:
        # single run: also keep the homotopy path s = 1 - exp(-t) with holonomy readings
        path_table = rows[0]["trajectory"].to_frame(extended=True)
        write_csv(path_table, csv_path.with_name(f"{csv_path.stem}_path.csv"))

    print(f"\n✅ Retracted {len(rows)}/{len(seeds)} initial data → {csv_path}")
    if summary["max_curvature_final"] is not None:
        print(f"   Max terminal ||F||: {summary['max_curvature_final']:.3e}")
    print("=" * 80)

    if failures:
        raise min(failures, key=lambda f: f[0])[1]
    return summary


if __name__ == "__main__":
    from main import dispatch
    sys.exit(dispatch(["retract"] + sys.argv[1:]))
