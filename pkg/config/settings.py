import os
from pathlib import Path
from dotenv import load_dotenv

load_dotenv()

BASE_DIR = Path(__file__).parent.parent
EXPERIMENTS_DIR = BASE_DIR / "experiments"

# Log and result folders can live outside the checkout (configured via .env)
LOGS_DIR_OVERRIDE = os.getenv("YM_LOGS_DIR")

if LOGS_DIR_OVERRIDE:
    LOGS_DIR = Path(LOGS_DIR_OVERRIDE)
else:
    LOGS_DIR = BASE_DIR / "logs"

RESULTS_DIR_OVERRIDE = os.getenv("YM_RESULTS_DIR")

if RESULTS_DIR_OVERRIDE:
    RESULTS_DIR = Path(RESULTS_DIR_OVERRIDE)
else:
    RESULTS_DIR = BASE_DIR / "results"

# Create required directories
LOGS_DIR.mkdir(parents=True, exist_ok=True)


class LatticeConfig:
    DEFAULT_GRID = int(os.getenv("YM_GRID", "16"))
    MIN_GRID = 4


class GaugeConfig:
    # Kernel threshold relative to the largest resolved mode eigenvalue
    KERNEL_THRESHOLD = float(os.getenv("YM_KERNEL_THRESHOLD", "1e-10"))
    AMBIGUITY_FACTOR = 10.0

    GAUGE_FIX_TOL = float(os.getenv("YM_GAUGE_FIX_TOL", "1e-12"))
    GAUGE_FIX_RADIUS = float(os.getenv("YM_GAUGE_FIX_RADIUS", "1.0"))
    GAUGE_FIX_MAX_ITER = int(os.getenv("YM_GAUGE_FIX_MAX_ITER", "60"))
    GAUGE_FIX_DAMPING = (1.0, 0.5, 0.25)


class FlowConfigDefaults:
    T_MAX = float(os.getenv("YM_FLOW_T_MAX", "50.0"))
    GRAD_TOL = float(os.getenv("YM_FLOW_GRAD_TOL", "1e-9"))
    RTOL = float(os.getenv("YM_FLOW_RTOL", "1e-6"))
    ATOL = float(os.getenv("YM_FLOW_ATOL", "1e-14"))
    DT0 = float(os.getenv("YM_FLOW_DT0", "1e-3"))
    DT_MIN = 1e-12
    DT_MAX = float(os.getenv("YM_FLOW_DT_MAX", "1e6"))
    RECORD_STRIDE = int(os.getenv("YM_FLOW_RECORD_STRIDE", "1"))
    MAX_STEPS = int(os.getenv("YM_FLOW_MAX_STEPS", "200000"))

    # Energy monotonicity guard: E_new <= E_old * (1 + ENERGY_RTOL) + ENERGY_ATOL
    ENERGY_RTOL = 1e-12
    ENERGY_ATOL = 1e-20

    # Step-size controller
    SAFETY = 0.9
    MIN_FACTOR = 0.2
    MAX_FACTOR = 2.0

    CONTOUR_POINTS = 32
    RK4_STABILITY = 2.5

    CURVATURE_TOL = float(os.getenv("YM_CURVATURE_TOL", "1e-6"))
    RETRACT_CURVATURE_EPS = float(os.getenv("YM_RETRACT_EPS", "0.1"))
    ENERGY_IDENTITY_RTOL = 1e-6


class DecayConfig:
    MIN_SAMPLES = 20
    REGIME_R2 = 0.98
    MAX_TERMINAL_RATIO = 0.1


class ModuliConfig:
    HOLONOMY_TOL = float(os.getenv("YM_HOLONOMY_TOL", "1e-4"))
    SEED_HOLONOMY_TOL = 5e-2
    SEED_RADIUS = 0.25
    NEAREST_FLAT_TOL = 1e-10
    NEAREST_FLAT_MAX_ITER = 50
    CENTRAL_TOL = 1e-9
    EDGE_TOL = 1e-12
    DEGENERATE_DISTANCE = 1e-12


class KuranishiConfig:
    RADIUS = float(os.getenv("YM_KURANISHI_RADIUS", "0.3"))
    TOL = float(os.getenv("YM_KURANISHI_TOL", "1e-12"))
    MAX_ITER = int(os.getenv("YM_KURANISHI_MAX_ITER", "200"))
    USE_NEWTON = os.getenv("YM_KURANISHI_NEWTON", "false").lower() == "true"


class LojasiewiczConfig:
    RTOL = 1e-12
    ATOL = 1e-14
    METHOD = "DOP853"
    ARC_LENGTH_TOL = 1e-20
    ARC_LENGTH_T_MAX = 1e16
    ARC_LENGTH_POINTS = 2001
    VIOLATION_MARGIN = 0.01
    IDENTITY_POINTS = 4001


class AppConfig:
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
    LOG_TO_FILE = os.getenv("YM_LOG_TO_FILE", "true").lower() == "true"
    THREADS = int(os.getenv("YM_THREADS", str(min(4, os.cpu_count() or 1))))
