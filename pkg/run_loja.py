#!/usr/bin/env python3
"""
Lojasiewicz toolkit runner

Runs the finite-dimensional corpus: gradient flows, arc-length flows, the
energy identity and decay regimes (one row per function), plus fits of the
distance inequality E >= C dist^alpha on seeded samples near each center.

Usage:
    python run_loja.py
    python run_loja.py --functions quadratic,quartic --samples 500 --sample-radius 0.1
"""

import sys
from pathlib import Path
from typing import Dict, List

import numpy as np
import pandas as pd

sys.path.insert(0, str(Path(__file__).parent))

from src.exceptions import ExperimentConfigError
from src.processors import lojasiewicz
from src.utils.experiment_manager import ExperimentConfig
from src.utils.io import output_path, write_csv, write_results
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

# Crit strictly contains Zero for these; the inequality is checked against Zero
ZERO_TARGET = ("double_well", "double_well_squared")


def run_loja(config: ExperimentConfig) -> Dict:
    """Corpus report and distance-inequality fits; returns the JSON summary"""
    names: List[str] = list(config.functions) or list(lojasiewicz.CORPUS)
    unknown = [name for name in names if name not in lojasiewicz.CORPUS]
    if unknown:
        raise ExperimentConfigError(f"unknown test functions {unknown}; available: "
                                    f"{sorted(lojasiewicz.CORPUS)}", key="functions")

    print("\n" + "=" * 80)
    print(f"📉 LOJASIEWICZ TOOLKIT ({len(names)} test functions)")
    print("=" * 80)

    report = lojasiewicz.corpus_report(names=names)

    rng = np.random.default_rng(config.seed)
    fits = []
    for name in names:
        f = lojasiewicz.get_test_function(name)
        radius = min(config.sample_radius, f.sigma) if f.sigma is not None else config.sample_radius
        target = "zero" if name in ZERO_TARGET else "critical"
        fit = lojasiewicz.verify_distance_inequality(f, radius, config.samples, rng=rng, target=target)
        fits.append({"function": name, "sample_radius": radius, **fit.to_dict()})
        print(f"  ✓ {name}: regime {report.loc[report['function'] == name, 'regime'].iloc[0]}, "
              f"alpha = {fit.alpha:.4f}, violations {fit.violations}/{fit.n_samples}")
    fit_table = pd.DataFrame(fits)

    summary = {
        "functions": names,
        "identity_passed": bool(report["identity_passed"].all()),
        "distance_fits": fits,
        "config": config.to_dict(),
    }

    csv_path = output_path(config.out, config.name or "lojasiewicz")
    write_results(report, summary, csv_path)
    fit_path = csv_path.with_name(f"{csv_path.stem}_distance.csv")
    write_csv(fit_table, fit_path)

    print(f"\n✅ Energy identity: {'all passed' if summary['identity_passed'] else 'FAILED'}")
    print(f"   Output: {csv_path}")
    print(f"   Distance fits: {fit_path}")
    print("=" * 80)
    return summary


if __name__ == "__main__":
    from main import dispatch
    sys.exit(dispatch(["loja"] + sys.argv[1:]))
