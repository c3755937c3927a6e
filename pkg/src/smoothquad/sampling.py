"""Sobol sequences, inverse normal transform, and seeded random sampling.

The Sobol generator is the plain unscrambled construction from embedded
direction numbers (dimensions up to 64), generated in Gray-code order.
By default the all-zeros index is skipped so every coordinate lies
strictly inside (0, 1).

Pseudo-random sampling goes through counter-based Philox streams keyed
by (base_seed, stream_id), so runs are reproducible under any thread
scheduling: the same spec always yields the same draws.
"""

import functools
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr

from ._sobol_table import DIRECTION_DATA, SOBOL_MAX_DIM
from .errors import DimensionTooLarge, OutOfDomain

_BITS = 32
_SCALE = float(2.0**-_BITS)
_MASK64 = (1 << 64) - 1


@functools.lru_cache(maxsize=None)
def _direction_matrix(dim: int) -> np.ndarray:
    """Direction numbers as a (dim, 32) uint64 matrix of bit columns."""
    v = np.zeros((dim, _BITS), dtype=np.uint64)
    # first coordinate: van der Corput, m_k = 1 for every k
    for b in range(_BITS):
        v[0, b] = np.uint64(1 << (_BITS - 1 - b))
    for row in range(1, dim):
        s, a, m = DIRECTION_DATA[row - 1]
        for b in range(min(s, _BITS)):
            v[row, b] = np.uint64(m[b] << (_BITS - 1 - b))
        for b in range(s, _BITS):
            acc = int(v[row, b - s])
            acc ^= acc >> s
            for i in range(1, s):
                if (a >> (s - 1 - i)) & 1:
                    acc ^= int(v[row, b - i])
            v[row, b] = np.uint64(acc)
    v.setflags(write=False)
    return v


class SobolStream:
    """Sequential Sobol point source for one fixed dimension.

    Successive calls to :meth:`points` continue the sequence, so a long
    quasi-Monte Carlo run can be consumed in chunks without storing all
    points at once.
    """

    def __init__(self, dim: int, start: int = 1):
        if not 1 <= dim <= SOBOL_MAX_DIM:
            raise DimensionTooLarge(
                f"sobol dimension {dim} outside [1, {SOBOL_MAX_DIM}]"
            )
        if start < 0:
            raise ValueError(f"start index {start} is negative")
        self.dim = dim
        self.next_index = start
        self._v = _direction_matrix(dim)

    def points(self, n: int) -> np.ndarray:
        """Next ``n`` points as an (n, dim) array in [0, 1)^dim."""
        if n < 0:
            raise ValueError(f"point count {n} is negative")
        if self.next_index + n > 1 << _BITS:
            raise ValueError("sobol index space of 2^32 points exhausted")
        idx = np.arange(self.next_index, self.next_index + n, dtype=np.uint64)
        gray = idx ^ (idx >> np.uint64(1))
        out = np.zeros((n, self.dim), dtype=np.uint64)
        for b in range(_BITS):
            hit = (gray >> np.uint64(b)) & np.uint64(1) == 1
            if np.any(hit):
                out[hit] ^= self._v[:, b]
        self.next_index += n
        return out.astype(np.float64) * _SCALE


def sobol_points(dim: int, n: int, skip: int = 1) -> np.ndarray:
    """First ``n`` Sobol points of the given dimension.

    Parameters
    ----------
    dim : int
        Coordinate count, at most 64.
    n : int
        Number of points.
    skip : int
        Sequence indices to drop from the front.  The default of one
        drops the all-zeros point so coordinates are strictly positive;
        pass zero for the raw sequence (whose aligned 2^k blocks carry
        the dyadic stratification property).
    """
    return SobolStream(dim, start=skip).points(n)


# Rational approximation with central and tail branches, then one Newton
# polish against the erfc-based normal CDF.  The approximation alone is
# good to ~1e-9 relative; quadratic convergence takes the polished root
# far below the 1e-13 contract.
_CENTRAL_NUM = (
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
)
_CENTRAL_DEN = (
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
)
_TAIL_NUM = (
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
)
_TAIL_DEN = (
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
)
_TAIL_SPLIT = 0.02425
_INV_SQRT_2PI = 0.3989422804014327


def _polyval(coeffs, x):
    acc = np.full_like(x, coeffs[0])
    for c in coeffs[1:]:
        acc = acc * x + c
    return acc


def _inv_norm_lower(q):
    """Inverse CDF on the lower half, q in (0, 0.5]."""
    x = np.empty_like(q)
    tail = q < _TAIL_SPLIT
    if np.any(tail):
        u = np.sqrt(-2.0 * np.log(q[tail]))
        x[tail] = _polyval(_TAIL_NUM, u) / (_polyval(_TAIL_DEN, u) * u + 1.0)
    mid = ~tail
    if np.any(mid):
        qm = q[mid] - 0.5
        r = qm * qm
        x[mid] = (
            _polyval(_CENTRAL_NUM, r)
            * qm
            / (_polyval(_CENTRAL_DEN, r) * r + 1.0)
        )
    # Newton step on Phi(x) - q; erfc keeps the residual relatively
    # accurate all the way down the tail.  Skip where the density
    # underflows (the approximation is already absolutely tight there).
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    safe = pdf > 1e-300
    if np.any(safe):
        xs = x[safe]
        x[safe] = xs - (ndtr(xs) - q[safe]) / pdf[safe]
    return x


def inv_norm_cdf(p):
    """Quantile of the standard normal distribution.

    Accepts a scalar or an array with every entry in the open interval
    (0, 1); the return type matches.  Exploits the exact symmetry
    inv_norm_cdf(1 - p) == -inv_norm_cdf(p) so both tails are computed
    through the well-scaled lower branch.
    """
    arr = np.asarray(p, dtype=np.float64)
    if arr.size and not (np.all(arr > 0.0) and np.all(arr < 1.0)):
        raise OutOfDomain("inverse normal CDF needs probabilities in (0, 1)")
    upper = arr > 0.5
    q = np.where(upper, 1.0 - arr, arr)
    x = _inv_norm_lower(np.atleast_1d(q))
    x = np.where(np.atleast_1d(upper), -x, x)
    if np.isscalar(p) or arr.ndim == 0:
        return float(x[0])
    return x.reshape(arr.shape)


@dataclass(frozen=True)
class RngSpec:
    """Seed and stream pair identifying one reproducible random stream."""

    base_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if self.stream_id < 0:
            raise ValueError(f"stream_id {self.stream_id} is negative")

    def generator(self) -> np.random.Generator:
        """Fresh generator; equal specs always produce equal draws."""
        key = ((self.base_seed & _MASK64) << 64) | (self.stream_id & _MASK64)
        return np.random.Generator(np.random.Philox(key=key))

    def stream(self, stream_id: int) -> "RngSpec":
        """Same base seed, different stream."""
        return replace(self, stream_id=stream_id)


def normal_vector(rng: RngSpec, dim: int) -> np.ndarray:
    """``dim`` independent standard normal draws, fixed by the spec."""
    if dim < 0:
        raise ValueError(f"dimension {dim} is negative")
    return rng.generator().standard_normal(dim)


def gamma_sample(rng: RngSpec, shape: float, scale: float, n: int | None = None):
    """Gamma(shape, scale) draws with mean shape*scale.

    Returns a float when ``n`` is None, else a vector of ``n``
    independent samples.  Deterministic in the spec.
    """
    if not shape > 0.0:
        raise ValueError(f"gamma shape {shape} must be positive")
    if not scale > 0.0:
        raise ValueError(f"gamma scale {scale} must be positive")
    gen = rng.generator()
    if n is None:
        return float(gen.gamma(shape, scale))
    return gen.gamma(shape, scale, size=n)
