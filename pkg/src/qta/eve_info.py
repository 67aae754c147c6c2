"""Eve's optimal information per qubit from back-reflected probe light.

Two closed forms are provided. Without phase randomization Eve holds one of
the coherent states |a,0> or |0,a> and the Helstrom measurement gives
1 - H(p) bits. With phase randomization she holds diagonal Fock mixtures and
learns the setting exactly when she counts at least one photon.
"""

from __future__ import annotations

import math
from typing import Iterable

from ._io import csv_text
from .errors import InvalidParameter

LN2 = math.log(2.0)


def _check_mu(mu: float) -> float:
    mu = float(mu)
    if not math.isfinite(mu) or mu < 0:
        raise InvalidParameter(f"mean photon number must be finite and >= 0, got {mu}")
    return mu


def binary_entropy(p: float) -> float:
    """H(p) in bits, with 0 log 0 = 0."""
    p = float(p)
    if not (0.0 <= p <= 1.0):
        raise InvalidParameter(f"probability must lie in [0, 1], got {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -(p * math.log2(p) + (1.0 - p) * math.log2(1.0 - p))


def _overlap_gap(mu: float) -> float:
    # sqrt(1 - exp(-2 mu)) without cancellation near mu = 0
    return math.sqrt(-math.expm1(-2.0 * mu))


def discrimination_p(mu: float) -> float:
    """Optimal probability of telling |a,0> from |0,a>, |a|^2 = mu."""
    mu = _check_mu(mu)
    return 0.5 * (1.0 + _overlap_gap(mu))


def trojan_info(mu: float) -> float:
    """1 - H(p) for the coherent-state pair, in bits.

    Evaluated as [(1+x) ln(1+x) + (1-x) ln(1-x)] / (2 ln 2) with x = 2p - 1,
    which stays accurate where H(p) is within rounding of 1.
    """
    mu = _check_mu(mu)
    x = _overlap_gap(mu)
    if x >= 1.0:
        return 1.0
    val = ((1.0 + x) * math.log1p(x) + (1.0 - x) * math.log1p(-x)) / (2.0 * LN2)
    return min(1.0, max(0.0, val))


def trojan_info_small_mu(mu: float) -> float:
    """Leading term mu / ln 2, clamped to one bit."""
    return min(1.0, _check_mu(mu) / LN2)


def non_empty_prob(mu: float) -> float:
    return -math.expm1(-_check_mu(mu))


def reduced_info(mu: float) -> float:
    """Information with phase randomization: 1 - exp(-mu) bits."""
    return non_empty_prob(mu)


def randomization_gain_ratio(mu: float) -> float:
    """How many times more Eve learns without phase randomization."""
    mu = _check_mu(mu)
    if mu == 0:
        raise InvalidParameter("ratio is undefined at mu = 0")
    return trojan_info(mu) / reduced_info(mu)


def info_sweep_rows(mu_grid: Iterable[float]) -> list[tuple[float, float, float, float]]:
    rows = []
    for mu in mu_grid:
        mu = _check_mu(mu)
        ratio = randomization_gain_ratio(mu) if mu > 0 else math.nan
        rows.append((mu, trojan_info(mu), reduced_info(mu), ratio))
    return rows


def info_sweep_csv(mu_grid: Iterable[float]) -> str:
    """CSV with columns mu, trojan_bits, reduced_bits, ratio (ratio is nan at mu = 0)."""
    return csv_text(("mu", "trojan_bits", "reduced_bits", "ratio"), info_sweep_rows(mu_grid))
