#!/usr/bin/env python3
"""
Lambda-scan runner

Scans a named ray of connections, measures ||F||_{L^p} and the W^{1,p} distance
to the nearest flat connection at each parameter, and fits the exponent lambda in
dist ~ C ||F||^lambda. One CSV (plus JSON summary) per Sobolev exponent.

Usage:
    python run_lambda_scan.py --ray product --t-grid logspace:-3:-1:20 --p 2,3,4
    python run_lambda_scan.py --ray morse_bott --grid 16
"""

import sys
from pathlib import Path
from typing import Dict, List, Optional

sys.path.insert(0, str(Path(__file__).parent))

from config.settings import AppConfig
from src.processors import moduli
from src.utils.experiment_manager import ExperimentConfig
from src.utils.initial_data import get_ray
from src.utils.io import output_path, write_results
from src.utils.logger import setup_logger

logger = setup_logger(__name__)


def _p_label(p: float) -> str:
    return "inf" if p == float("inf") else f"{p:g}"


def scan_output_path(config: ExperimentConfig, p: float) -> Path:
    """Configured path, suffixed with _p<p> when several exponents are scanned"""
    csv_path = output_path(config.out, config.name or f"lambda_{config.ray}")
    if len(config.p) == 1:
        return csv_path
    return csv_path.with_name(f"{csv_path.stem}_p{_p_label(p)}{csv_path.suffix}")


def run_lambda_scan(config: ExperimentConfig, max_workers: Optional[int] = None) -> Dict:
    """
    Run the lambda scan for every configured exponent.

    Returns:
        Per-exponent fit summaries keyed by p
    """
    max_workers = max_workers or AppConfig.THREADS
    ray = get_ray(config.ray, config.grid)

    print("\n" + "=" * 80)
    print(f"📐 LAMBDA SCAN (ray: {config.ray}, {len(config.t_grid)} points, grid {config.grid})")
    print("=" * 80)

    results: Dict[str, Dict] = {}
    written: List[Path] = []
    for p in config.p:
        result = moduli.lambda_scan(ray, config.t_grid, p=p, max_workers=max_workers)
        summary = result.summary()
        summary["ray"] = config.ray
        summary["config"] = config.to_dict()

        csv_path = scan_output_path(config, p)
        write_results(result.table, summary, csv_path)
        written.append(csv_path)
        results[_p_label(p)] = summary

        print(f"  ✓ p = {_p_label(p)}: lambda = {result.lam:.6f}, C = {result.C:.6g}, R² = {result.r2:.8f}")

    print(f"\n✅ Scanned {len(config.p)} exponent(s)")
    for csv_path in written:
        print(f"   Output: {csv_path}")
    print("=" * 80)
    return results


if __name__ == "__main__":
    from main import dispatch
    sys.exit(dispatch(["scan-lambda"] + sys.argv[1:]))
