"""Photon-number distributions and the transforms applied to a probe beam.

Everything here works on the diagonal of the density matrix in the Fock
basis: phase randomization discards coherences, and a lossy element of power
transmission ``t`` thins each photon independently (binomial thinning).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammainc, gammaln

from ._io import csv_text
from .errors import InvalidParameter, NotNormalized, TailTooHeavy, FormatError

NORM_TOL = 1e-9
TAIL_TOL = 1e-12
DEFAULT_N_CAP = 4096
MC_SHARD_SIZE = 1 << 16


@dataclass(frozen=True, eq=False)
class PhotonNumberDistribution:
    """Normalized probabilities P(n) for n = 0..n_max."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float).ravel()
        if p.size == 0:
            raise InvalidParameter("distribution needs at least one entry (n_max >= 0)")
        if not np.all(np.isfinite(p)):
            raise InvalidParameter("probabilities must be finite")
        if np.any(p < 0):
            raise InvalidParameter("probabilities must be non-negative")
        total = math.fsum(p)
        if abs(total - 1.0) > NORM_TOL:
            raise NotNormalized(f"probabilities sum to {total!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    def __len__(self) -> int:
        return self.probs.size

    def __getitem__(self, n: int) -> float:
        if 0 <= n <= self.n_max:
            return float(self.probs[n])
        return 0.0

    def mean(self) -> float:
        return float(np.dot(np.arange(self.probs.size), self.probs))

    def to_dict(self) -> dict:
        return {"n_max": self.n_max, "probs": [float(x) for x in self.probs]}

    @classmethod
    def from_dict(cls, obj: dict) -> "PhotonNumberDistribution":
        try:
            probs = obj["probs"]
            n_max = int(obj["n_max"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"expected {{'n_max': int, 'probs': [real]}} ({exc})") from None
        if len(probs) != n_max + 1:
            raise FormatError(f"n_max={n_max} but {len(probs)} probabilities given", "probs")
        return cls(np.asarray(probs, dtype=float))

    def to_csv(self) -> str:
        return csv_text(("n", "prob"), ((str(n), p) for n, p in enumerate(self.probs)))


def _check_mu(mu: float) -> float:
    mu = float(mu)
    if not math.isfinite(mu) or mu < 0:
        raise InvalidParameter(f"mean photon number must be finite and >= 0, got {mu}")
    return mu


def _check_t(t: float) -> float:
    t = float(t)
    if not (0.0 < t <= 1.0):
        raise InvalidParameter(f"transmission must lie in (0, 1], got {t}")
    return t


def vacuum() -> PhotonNumberDistribution:
    return PhotonNumberDistribution(np.array([1.0]))


def fock(n: int) -> PhotonNumberDistribution:
    if n < 0:
        raise InvalidParameter("photon number must be >= 0")
    p = np.zeros(n + 1)
    p[n] = 1.0
    return PhotonNumberDistribution(p)


def poisson_tail(mu: float, n_max: int) -> float:
    """Probability mass above ``n_max`` for Poisson(mu)."""
    if mu == 0:
        return 0.0
    return float(gammainc(n_max + 1, mu))


def min_poisson_cutoff(mu: float, tol: float = TAIL_TOL, cap: int = DEFAULT_N_CAP) -> int:
    """Smallest n_max whose discarded Poisson tail is below ``tol``.

    The cutoff also keeps the dropped part of E[n(n-1)] (which equals
    mu^2 * P(n >= n_max - 1)) under 1e-14, so second moments stay exact.
    """
    mu = _check_mu(mu)
    if mu == 0:
        return 0

    def ok(n: int) -> bool:
        return poisson_tail(mu, n) < tol and mu * mu * poisson_tail(mu, max(n - 2, 0)) < 1e-14

    if not ok(cap):
        raise TailTooHeavy(f"Poisson({mu}) needs more than {cap} photon-number levels")
    lo, hi = 0, cap
    while lo < hi:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid + 1
    return lo


def poisson_distribution(mu: float, n_max: int | None = None, *,
                         cap: int = DEFAULT_N_CAP) -> PhotonNumberDistribution:
    """Poisson(mu) truncated at ``n_max`` (chosen automatically when omitted).

    Entries are not renormalized; the truncated tail must be below 1e-12.
    """
    mu = _check_mu(mu)
    if n_max is None:
        n_max = min_poisson_cutoff(mu, cap=cap)
    if n_max < 0:
        raise InvalidParameter("n_max must be >= 0")
    tail = poisson_tail(mu, n_max)
    if tail >= TAIL_TOL:
        raise TailTooHeavy(f"Poisson({mu}) truncated at n_max={n_max} drops mass {tail:.3g}")
    if mu == 0:
        p = np.zeros(n_max + 1)
        p[0] = 1.0
        return PhotonNumberDistribution(p)
    n = np.arange(n_max + 1)
    p = np.exp(n * math.log(mu) - mu - gammaln(n + 1))
    return PhotonNumberDistribution(p)


def phase_randomize(amplitudes: Sequence[complex]) -> PhotonNumberDistribution:
    """Diagonal Fock mixture left after averaging over a uniform global phase."""
    c = np.asarray(amplitudes, dtype=complex).ravel()
    probs = np.abs(c) ** 2
    total = math.fsum(probs)
    if abs(total - 1.0) > NORM_TOL:
        raise NotNormalized(f"sum |c_n|^2 = {total!r}")
    return PhotonNumberDistribution(probs)


def coherent_amplitudes(mu: float, n_max: int | None = None, phase: float = 0.0) -> np.ndarray:
    """Fock amplitudes of the coherent state with mean photon number ``mu``."""
    d = poisson_distribution(mu, n_max)
    n = np.arange(d.probs.size)
    return np.sqrt(d.probs) * np.exp(1j * phase * n)


def _binomial_row(n: int, t: float) -> np.ndarray:
    """Binomial(n, t) pmf over m = 0..n by term ratios from the mode.

    Starting at the mode keeps every partial product <= 1, so nothing
    overflows; terms far in the tails underflow to zero harmlessly.
    """
    row = np.zeros(n + 1)
    if n == 0:
        row[0] = 1.0
        return row
    if t == 1.0:
        row[n] = 1.0
        return row
    odds = t / (1.0 - t)
    k = min(int((n + 1) * t), n)
    row[k] = 1.0
    if k < n:
        m = np.arange(k, n)
        row[k + 1:] = np.cumprod((n - m) / (m + 1.0) * odds)
    if k > 0:
        m = np.arange(k, 0, -1)
        row[k - 1::-1] = np.cumprod(m / (n - m + 1.0) / odds)
    return row / math.fsum(row)


def attenuate(d: PhotonNumberDistribution, t: float) -> PhotonNumberDistribution:
    """Photon-number distribution after a loss of power transmission ``t``.

    q_m = sum_{n>=m} C(n, m) t^m (1-t)^(n-m) P(n)
    """
    t = _check_t(t)
    if t == 1.0:
        return d
    out = np.zeros(d.probs.size)
    for n, pn in enumerate(d.probs):
        if pn:
            out[: n + 1] += pn * _binomial_row(n, t)
    return PhotonNumberDistribution(out)


def attenuate_coherent(mu: float, t: float, cap: int = DEFAULT_N_CAP) -> PhotonNumberDistribution:
    """Attenuated coherent input via the closed form Poisson(mu*t).

    Used for bright inputs whose own photon-number support would exceed ``cap``.
    """
    return poisson_distribution(_check_mu(mu) * _check_t(t), cap=cap)


def factorial_moment(d: PhotonNumberDistribution, k: int) -> float:
    """E[n (n-1) ... (n-k+1)]."""
    if k < 1:
        raise InvalidParameter("factorial moment order must be >= 1")
    n = np.arange(d.probs.size, dtype=float)
    falling = np.ones_like(n)
    for j in range(k):
        falling *= n - j
    return float(np.dot(falling, d.probs))


def multi_photon_prob_exact(d: PhotonNumberDistribution, t: float) -> float:
    """Exact Prob(m >= 2) after attenuation.

    Summed over the m >= 2 entries instead of forming 1 - q0 - q1, which
    cancels catastrophically for small t.
    """
    q = attenuate(d, t).probs
    return math.fsum(q[2:])


def multi_photon_prob_leading(d: PhotonNumberDistribution, t: float) -> float:
    """Leading-order Prob(m >= 2) = E[n(n-1)] t^2 / 2.

    Also a rigorous upper bound on the exact value, since C(m, 2) >= 1 for m >= 2.
    """
    t = _check_t(t)
    return factorial_moment(d, 2) * t * t / 2.0


def tv_distance(a: PhotonNumberDistribution, b: PhotonNumberDistribution) -> float:
    size = max(a.probs.size, b.probs.size)
    pa = np.zeros(size)
    pb = np.zeros(size)
    pa[: a.probs.size] = a.probs
    pb[: b.probs.size] = b.probs
    return min(1.0, 0.5 * math.fsum(np.abs(pa - pb)))


def _thin_shard(n_in: int, t: float, shots: int, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(seed))
    counts = np.zeros(n_in + 1, dtype=np.int64)
    if n_in == 0:
        counts[0] = shots
        return counts
    survivors = np.zeros(shots, dtype=np.int64)
    for _ in range(n_in):
        survivors += rng.random(shots) < t
    counts += np.bincount(survivors, minlength=n_in + 1)
    return counts


def monte_carlo_thin(n_in: int, t: float, shots: int, seed: int = 0,
                     workers: int | None = None) -> PhotonNumberDistribution:
    """Empirical distribution of survivors when ``n_in`` photons each pass with prob ``t``.

    Shots are split into fixed shards of 65536; shard ``i`` draws from a
    Philox generator seeded with ``seed + i``. The result depends only on
    (n_in, t, shots, seed), never on ``workers``.
    """
    t = _check_t(t)
    if shots < 1:
        raise InvalidParameter("shots must be >= 1")
    if n_in < 0:
        raise InvalidParameter("n_in must be >= 0")
    sizes = [MC_SHARD_SIZE] * (shots // MC_SHARD_SIZE)
    if shots % MC_SHARD_SIZE:
        sizes.append(shots % MC_SHARD_SIZE)
    jobs = [(n_in, t, size, seed + i) for i, size in enumerate(sizes)]
    if workers is None:
        workers = 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _thin_shard(*a), jobs))
    else:
        parts = [_thin_shard(*a) for a in jobs]
    counts = np.sum(parts, axis=0)
    return PhotonNumberDistribution(counts / shots)


def seed_from_env(default: int = 0) -> int:
    raw = os.environ.get("QTA_SEED")
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw, 0)
    except ValueError:
        raise InvalidParameter(f"QTA_SEED must be an integer, got {raw!r}") from None
