"""
Decay-regime classification for time series that tend to zero.

Fits log v = log C - r t (exponential) and log v = log C - q log t (power) on the
tail half of a series and keeps the model with the larger R^2. The fitted
exponent is converted into the Lojasiewicz exponent theta and the derived
distance-inequality constants alpha = 1/(1 - theta), lambda = 2/alpha.
"""

from dataclasses import dataclass, asdict
from typing import Dict, Literal

import numpy as np
from numpy.typing import ArrayLike
from scipy import stats

from config.settings import DecayConfig
from src.exceptions import InsufficientDecay
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

Quantity = Literal["distance", "energy"]

_THETA_CEILING = np.nextafter(1.0, 0.0)


@dataclass
class DecayFit:
    """Result of a decay-regime fit"""
    regime: str  # 'exponential', 'power' or 'undecided'
    quantity: str
    rate: float  # exponential rate r
    power: float  # power-law exponent q
    theta: float
    r2: float
    r2_exponential: float
    r2_power: float
    n_samples: int

    @property
    def alpha(self) -> float:
        return 1.0 / (1.0 - self.theta)

    @property
    def lam(self) -> float:
        return 2.0 / self.alpha

    def to_dict(self) -> Dict:
        out = asdict(self)
        out.update(alpha=self.alpha, lam=self.lam)
        return out


def theta_from_power(q: float, quantity: Quantity = "distance") -> float:
    """
    Lojasiewicz exponent from a power-law decay exponent.

    distance ~ t^-q   gives theta = (1 + q)/(1 + 2q)
    energy   ~ t^-q   gives theta = (1 + q)/(2q)
    """
    if q <= 0:
        return _THETA_CEILING
    if quantity == "energy":
        theta = (1.0 + q) / (2.0 * q)
    else:
        theta = (1.0 + q) / (1.0 + 2.0 * q)
    return float(np.clip(theta, 0.5, _THETA_CEILING))


def power_from_theta(theta: float) -> float:
    """Distance decay exponent (1 - theta)/(2 theta - 1) for theta > 1/2"""
    return (1.0 - theta) / (2.0 * theta - 1.0)


def fit_decay_series(times: ArrayLike, values: ArrayLike, quantity: Quantity = "distance",
                     min_samples: int = DecayConfig.MIN_SAMPLES,
                     regime_r2: float = DecayConfig.REGIME_R2) -> DecayFit:
    """
    Classify the decay of a positive series.

    Args:
        times: sample times (increasing)
        values: positive values
        quantity: 'distance' or 'energy', selects the theta inversion

    Returns:
        DecayFit on the tail half of the samples

    Raises:
        InsufficientDecay: too few samples, or terminal/initial ratio above the limit
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = np.isfinite(v) & (v > 0)
    t, v = t[keep], v[keep]

    if len(v) < min_samples:
        raise InsufficientDecay(f"Need at least {min_samples} positive samples, got {len(v)}")
    ratio = v[-1] / v[0]
    if ratio > DecayConfig.MAX_TERMINAL_RATIO:
        raise InsufficientDecay(
            f"Terminal/initial ratio {ratio:.3e} exceeds {DecayConfig.MAX_TERMINAL_RATIO}"
        )

    tail = slice(len(v) // 2, None)
    t_tail, log_v = t[tail], np.log(v[tail])

    exp_fit = stats.linregress(t_tail, log_v)
    r2_exp = float(exp_fit.rvalue ** 2)

    positive = t_tail > 0
    if positive.sum() >= 3:
        pow_fit = stats.linregress(np.log(t_tail[positive]), log_v[positive])
        r2_pow = float(pow_fit.rvalue ** 2)
        q = float(-pow_fit.slope)
    else:
        r2_pow, q = 0.0, float("nan")

    rate = float(-exp_fit.slope)
    if max(r2_exp, r2_pow) < regime_r2:
        regime, theta = "undecided", 0.5
    elif r2_exp >= r2_pow:
        regime, theta = "exponential", 0.5
    else:
        regime, theta = "power", theta_from_power(q, quantity)

    fit = DecayFit(regime=regime, quantity=quantity, rate=rate, power=q, theta=theta,
                   r2=max(r2_exp, r2_pow), r2_exponential=r2_exp, r2_power=r2_pow,
                   n_samples=int(len(v)))
    logger.debug(f"Decay fit ({quantity}): regime={regime}, rate={rate:.4g}, q={q:.4g}, "
                 f"R2 exp/pow = {r2_exp:.6f}/{r2_pow:.6f}")
    return fit
