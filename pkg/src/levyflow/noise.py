"""Driving noise: Brownian increments, compensated small jumps, large jumps.

A path is sampled from a counter-based RNG stream keyed by
``(master_seed, path_index)`` (Philox), so paths are reproducible and
independent under any parallel schedule.  Small jumps below the truncation
level ``epsilon`` are dropped; their compensator drift uses the exact mass
``small_total(epsilon)`` and the neglected variance
``integral(|z|^2, |z| < epsilon)`` is reported per run.

The intensity-measure catalog covers a finite-activity uniform law on a
ball and an infinite-activity tempered power law; both expose totals,
moments, radial quadrature, and inverse-CDF samplers.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from .errors import ConfigurationError, UsageError

PATH_FORMAT_VERSION = 1


def path_rng(seed, path_index=0):
    """Counter-based generator for one path: Philox keyed by (seed, index)."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence((int(seed), int(path_index))))
    )


# -- intensity measures ----------------------------------------------------


class IntensityMeasure:
    """Radial intensity measure on marks in R^mark_dim.

    Subclasses provide ``_radial_density(r)`` (mass per unit radius, all
    directions folded in) and may override ``_radial_mass`` with closed
    forms.  ``density(z)`` is the Lebesgue density at a mark point.
    """

    mark_dim = 1

    def _radial_density(self, r):
        raise NotImplementedError

    def _radial_mass(self, a, b):
        if a >= b:
            return 0.0
        val, _ = integrate.quad(self._radial_density, a, b, limit=200)
        return val

    def _radial_moment(self, p, a, b):
        if a >= b:
            return 0.0
        val, _ = integrate.quad(
            lambda r: r**p * self._radial_density(r), a, b, limit=200
        )
        return val

    def density(self, z):
        raise NotImplementedError

    # -- totals and moments ------------------------------------------------

    def small_total(self, epsilon):
        """mu({epsilon <= |z| < 1})."""
        return self._radial_mass(epsilon, 1.0)

    @property
    def large_total(self):
        """mu({|z| >= 1})."""
        return self._radial_mass(1.0, self._radial_cutoff())

    def moment(self, p):
        """integral(|z|^p, |z| >= 1)."""
        return self._radial_moment(p, 1.0, self._radial_cutoff())

    def small_moment(self, p):
        """integral(|z|^p, |z| < 1); finite for p >= 2."""
        return self._radial_moment(p, 0.0, 1.0)

    def neglected_variance(self, epsilon):
        """integral(|z|^2, |z| < epsilon): variance lost to truncation."""
        return self._radial_moment(2, 0.0, epsilon)

    def _radial_cutoff(self):
        return np.inf

    # -- quadrature ---------------------------------------------------------

    def radial_quadrature(self, a, b, n_nodes=48):
        """Gauss-Legendre nodes/weights for integral(g(r) dmass(r), a<=r<b).

        Log-substituted, so steep near-origin densities are handled.  Exact
        enough for the radial integrands used by the forcing catalog.
        """
        if a >= b:
            return np.empty(0), np.empty(0)
        x, w = leggauss(n_nodes)
        la, lb = np.log(a), np.log(b)
        s = 0.5 * (lb - la) * x + 0.5 * (la + lb)
        r = np.exp(s)
        weights = 0.5 * (lb - la) * w * self._radial_density(r) * r
        return r, weights

    def small_quadrature(self, epsilon, n_nodes=48):
        """Mark-space quadrature for integral(g(z) mu(dz), eps <= |z| < 1).

        Marks are placed at +-r along the first axis with split weights;
        exact for integrands depending on the mark through |z| (the whole
        built-in forcing catalog) and for odd integrands by symmetry.
        """
        r, w = self.radial_quadrature(epsilon, 1.0, n_nodes)
        marks = np.zeros((2 * len(r), self.mark_dim))
        marks[: len(r), 0] = r
        marks[len(r):, 0] = -r
        weights = np.concatenate([w, w]) / 2.0
        return marks, weights

    def large_quadrature(self, n_nodes=48):
        """Same as :meth:`small_quadrature` on {|z| >= 1}."""
        r, w = self.radial_quadrature(1.0, self._radial_cutoff_finite(), n_nodes)
        marks = np.zeros((2 * len(r), self.mark_dim))
        marks[: len(r), 0] = r
        marks[len(r):, 0] = -r
        weights = np.concatenate([w, w]) / 2.0
        return marks, weights

    def _radial_cutoff_finite(self):
        c = self._radial_cutoff()
        return c if np.isfinite(c) else 80.0

    # -- sampling ------------------------------------------------------------

    def sample_radii(self, a, b, count, rng):
        """Inverse-CDF radius samples on [a, b)."""
        if count == 0:
            return np.empty(0)
        grid, cdf = self._cdf_table(a, b)
        u = rng.random(count)
        return np.interp(u, cdf, grid)

    def _cdf_table(self, a, b, n=4096):
        key = (round(float(a), 12), round(float(b), 12))
        table = self.__dict__.setdefault("_cdf_cache", {})
        if key not in table:
            bb = min(b, self._radial_cutoff_finite())
            s = np.linspace(np.log(a), np.log(bb), n)
            r = np.exp(s)
            dens = self._radial_density(r) * r  # log-substituted
            cdf = integrate.cumulative_trapezoid(dens, s, initial=0.0)
            if cdf[-1] <= 0:
                raise ConfigurationError(
                    f"intensity measure has no mass on [{a}, {b})"
                )
            table[key] = (r, cdf / cdf[-1])
        return table[key]

    def sample_directions(self, count, rng):
        if self.mark_dim == 1:
            return rng.choice([-1.0, 1.0], size=(count, 1))
        v = rng.standard_normal((count, self.mark_dim))
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    def sample_marks(self, a, b, count, rng):
        radii = self.sample_radii(a, b, count, rng)
        dirs = self.sample_directions(count, rng)
        return radii[:, None] * dirs


class ZeroMeasure(IntensityMeasure):
    """No jumps at all."""

    def __init__(self, mark_dim=1):
        self.mark_dim = mark_dim

    def _radial_density(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def _radial_mass(self, a, b):
        return 0.0

    def _radial_moment(self, p, a, b):
        return 0.0

    def density(self, z):
        return 0.0

    def sample_radii(self, a, b, count, rng):
        if count:
            raise UsageError("zero measure cannot produce marks")
        return np.empty(0)


class UniformBallMeasure(IntensityMeasure):
    """Finite activity: total rate ``rate``, marks uniform on |z| <= radius."""

    def __init__(self, rate=2.0, radius=2.0, mark_dim=1):
        if rate < 0 or radius <= 0:
            raise ConfigurationError("uniform_ball needs rate >= 0, radius > 0")
        self.rate = float(rate)
        self.radius = float(radius)
        self.mark_dim = int(mark_dim)

    def _ball_volume(self, r):
        m = self.mark_dim
        from math import gamma, pi

        return pi ** (m / 2.0) / gamma(m / 2.0 + 1.0) * r**m

    def density(self, z):
        z = np.asarray(z, dtype=float)
        r = np.linalg.norm(np.atleast_1d(z))
        if r > self.radius or self.rate == 0.0:
            return 0.0
        return self.rate / self._ball_volume(self.radius)

    def _radial_density(self, r):
        r = np.asarray(r, dtype=float)
        m = self.mark_dim
        inside = r <= self.radius
        return np.where(inside, self.rate * m * r ** (m - 1) / self.radius**m, 0.0)

    def _radial_mass(self, a, b):
        m = self.mark_dim
        a = min(max(a, 0.0), self.radius)
        b = min(b, self.radius)
        if a >= b:
            return 0.0
        return self.rate * (b**m - a**m) / self.radius**m

    def _radial_cutoff(self):
        return self.radius

    def sample_radii(self, a, b, count, rng):
        if count == 0:
            return np.empty(0)
        m = self.mark_dim
        b = min(b, self.radius)
        u = rng.random(count)
        return (a**m + u * (b**m - a**m)) ** (1.0 / m)


class TemperedPowerLawMeasure(IntensityMeasure):
    """Infinite activity on R: density c * |z|^(-1-alpha) * exp(-|z|).

    ``alpha`` in (0, 2) controls small-jump activity; the exponential
    tempering makes every tail moment finite.  Restricted to mark_dim = 1
    (the uniform-ball entry covers higher-dimensional mark spaces).
    """

    def __init__(self, c=0.05, alpha=0.8, mark_dim=1):
        if mark_dim != 1:
            raise ConfigurationError("tempered_power_law supports mark_dim=1 only")
        if not 0.0 < alpha < 2.0:
            raise ConfigurationError("tempered_power_law needs alpha in (0, 2)")
        if c <= 0:
            raise ConfigurationError("tempered_power_law needs c > 0")
        self.c = float(c)
        self.alpha = float(alpha)
        self.mark_dim = 1

    def density(self, z):
        r = abs(float(np.atleast_1d(np.asarray(z, dtype=float))[0]))
        if r == 0.0:
            return 0.0
        return self.c * r ** (-1.0 - self.alpha) * np.exp(-r)

    def _radial_density(self, r):
        r = np.asarray(r, dtype=float)
        return 2.0 * self.c * r ** (-1.0 - self.alpha) * np.exp(-r)


MEASURE_CATALOG = {
    "zero": ZeroMeasure,
    "uniform_ball": UniformBallMeasure,
    "tempered_power_law": TemperedPowerLawMeasure,
}


def make_measure(name, **params):
    if name not in MEASURE_CATALOG:
        raise ConfigurationError(
            f"unknown intensity measure {name!r}; available: "
            f"{', '.join(sorted(MEASURE_CATALOG))}"
        )
    return MEASURE_CATALOG[name](**params)


# -- jumps and paths -------------------------------------------------------

SMALL, LARGE = "small", "large"


@dataclass
class MarkedJump:
    time: float
    mark: np.ndarray
    size_class: str

    def __post_init__(self):
        self.mark = np.atleast_1d(np.asarray(self.mark, dtype=float))
        expected = SMALL if np.linalg.norm(self.mark) < 1.0 else LARGE
        if self.size_class != expected:
            raise UsageError(
                f"size_class {self.size_class!r} inconsistent with |z|="
                f"{np.linalg.norm(self.mark):.3g}"
            )


def sample_brownian(d, step_schedule, rng):
    """Independent Gaussian increments, componentwise variance dt."""
    dts = np.asarray(step_schedule, dtype=float)
    if dts.size and dts.min() <= 0:
        raise ConfigurationError("all Brownian step sizes must be positive")
    return rng.standard_normal((len(dts), d)) * np.sqrt(dts)[:, None]


def sample_jumps(mu, horizon, epsilon, rng):
    """Sample the jump part of one path over [0, horizon].

    Large jumps are a Poisson process with rate ``mu.large_total`` and marks
    from the normalized restriction of mu to {|z| >= 1}; small jumps
    likewise on {epsilon <= |z| < 1}.  Returns the merged, time-sorted
    ``MarkedJump`` list and the compensator mass ``mu.small_total(epsilon)``.

    Draw order (fixed for reproducibility): large count, large times, large
    radii, large directions, then the same four for small jumps.
    """
    if not 0.0 < epsilon < 1.0:
        raise ConfigurationError("epsilon must lie in (0, 1)")
    if horizon <= 0.0:
        raise ConfigurationError("horizon must be positive")
    lam_large = mu.large_total
    if not np.isfinite(lam_large):
        raise ConfigurationError("intensity measure is not integrable on |z|>=1")
    jumps = []
    for rate, lo, hi, size_class in (
        (lam_large, 1.0, np.inf, LARGE),
        (mu.small_total(epsilon), epsilon, 1.0, SMALL),
    ):
        count = int(rng.poisson(rate * horizon)) if rate > 0 else 0
        times = np.sort(rng.uniform(0.0, horizon, size=count))
        marks = mu.sample_marks(lo, hi, count, rng)
        for t, z in zip(times, marks):
            jumps.append(MarkedJump(float(t), z, size_class))
    jumps.sort(key=lambda j: j.time)
    # enforce strictly increasing times (collisions are measure-zero)
    for i in range(1, len(jumps)):
        if jumps[i].time <= jumps[i - 1].time:
            jumps[i].time = np.nextafter(jumps[i - 1].time, np.inf)
    return jumps, mu.small_total(epsilon)


def compensated_increment(jump_values, dt, compensator_integral):
    """Compensated small-jump increment over one slice.

    ``jump_values`` are the integrand evaluated at the slice's small-jump
    marks; ``compensator_integral`` is integral(integrand(z) mu(dz)) over
    {epsilon <= |z| < 1}, supplied by mark-space quadrature.
    """
    comp = np.asarray(compensator_integral, dtype=float)
    total = np.zeros_like(comp)
    for v in jump_values:
        total = total + np.asarray(v, dtype=float)
    return total - dt * comp


@dataclass
class NoiseSlice:
    """Noise data for one base step, refined at jump times.

    ``sub_dts[j]`` and ``sub_dw[j]`` cover the j-th sub-interval;
    ``jump_at_end[j]`` is a MarkedJump landing at its right endpoint, or
    None.
    """

    t0: float
    sub_dts: np.ndarray
    sub_dw: np.ndarray
    jump_at_end: list


@dataclass
class NoisePath:
    """One sampled realization of the driving noise on a base time grid."""

    seed: int
    path_index: int
    epsilon: float
    base_times: np.ndarray
    sub_times: np.ndarray
    sub_dw: np.ndarray
    jump_sub_index: np.ndarray  # jump j lands at sub_times[jump_sub_index[j]]
    jump_marks: np.ndarray
    jump_small: np.ndarray
    compensator_mass: float
    brownian_dim: int
    _base_ptr: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self._base_ptr is None:
            self._base_ptr = np.searchsorted(self.sub_times, self.base_times)

    @property
    def n_base_steps(self):
        return len(self.base_times) - 1

    @property
    def n_jumps(self):
        return len(self.jump_marks)

    def schedule_hash(self):
        return hashlib.sha256(np.ascontiguousarray(self.base_times).tobytes()).hexdigest()

    def jumps(self):
        out = []
        for j in range(self.n_jumps):
            out.append(
                MarkedJump(
                    float(self.sub_times[self.jump_sub_index[j]]),
                    self.jump_marks[j],
                    SMALL if self.jump_small[j] else LARGE,
                )
            )
        return out

    def slice(self, i):
        """Noise slice for base step i (interval (t_i, t_{i+1}])."""
        lo, hi = self._base_ptr[i], self._base_ptr[i + 1]
        n_sub = hi - lo
        jump_at_end = [None] * n_sub
        for j in range(self.n_jumps):
            s = self.jump_sub_index[j]
            if lo < s <= hi:
                jump_at_end[s - lo - 1] = MarkedJump(
                    float(self.sub_times[s]),
                    self.jump_marks[j],
                    SMALL if self.jump_small[j] else LARGE,
                )
        return NoiseSlice(
            t0=float(self.base_times[i]),
            sub_dts=np.diff(self.sub_times[lo : hi + 1]),
            sub_dw=self.sub_dw[lo:hi],
            jump_at_end=jump_at_end,
        )


def sample_noise_path(mu, base_times, epsilon, brownian_dim, seed, path_index):
    """Sample a full NoisePath: jumps first, then Brownian increments on the
    jump-refined grid, all from the (seed, path_index) stream."""
    base_times = np.asarray(base_times, dtype=float)
    horizon = float(base_times[-1])
    rng = path_rng(seed, path_index)
    jumps, comp_mass = sample_jumps(mu, horizon, epsilon, rng)

    jump_times = np.array([j.time for j in jumps])
    sub_times = np.union1d(base_times, jump_times)
    dts = np.diff(sub_times)
    dw = sample_brownian(brownian_dim, dts, rng) if len(dts) else np.zeros((0, brownian_dim))

    jump_sub_index = np.searchsorted(sub_times, jump_times)
    mark_dim = jumps[0].mark.shape[0] if jumps else mu.mark_dim
    return NoisePath(
        seed=seed,
        path_index=path_index,
        epsilon=epsilon,
        base_times=base_times,
        sub_times=sub_times,
        sub_dw=dw,
        jump_sub_index=jump_sub_index,
        jump_marks=np.array([j.mark for j in jumps]).reshape(len(jumps), mark_dim),
        jump_small=np.array([j.size_class == SMALL for j in jumps], dtype=bool),
        compensator_mass=comp_mass,
        brownian_dim=brownian_dim,
    )


def save_noise_path(path_obj, file_path):
    """Persist a NoisePath to a versioned binary file for exact replay."""
    np.savez(
        file_path,
        format_version=np.int64(PATH_FORMAT_VERSION),
        seed=np.int64(path_obj.seed),
        path_index=np.int64(path_obj.path_index),
        epsilon=np.float64(path_obj.epsilon),
        schedule_hash=np.frombuffer(
            path_obj.schedule_hash().encode(), dtype=np.uint8
        ),
        base_times=path_obj.base_times,
        sub_times=path_obj.sub_times,
        sub_dw=path_obj.sub_dw,
        jump_sub_index=path_obj.jump_sub_index,
        jump_marks=path_obj.jump_marks,
        jump_small=path_obj.jump_small,
        compensator_mass=np.float64(path_obj.compensator_mass),
        brownian_dim=np.int64(path_obj.brownian_dim),
    )


def load_noise_path(file_path):
    with np.load(file_path) as data:
        if int(data["format_version"]) != PATH_FORMAT_VERSION:
            raise ConfigurationError(
                f"noise path file has format version {int(data['format_version'])},"
                f" expected {PATH_FORMAT_VERSION}"
            )
        obj = NoisePath(
            seed=int(data["seed"]),
            path_index=int(data["path_index"]),
            epsilon=float(data["epsilon"]),
            base_times=data["base_times"],
            sub_times=data["sub_times"],
            sub_dw=data["sub_dw"],
            jump_sub_index=data["jump_sub_index"],
            jump_marks=data["jump_marks"],
            jump_small=data["jump_small"],
            compensator_mass=float(data["compensator_mass"]),
            brownian_dim=int(data["brownian_dim"]),
        )
        stored = bytes(data["schedule_hash"]).decode()
        if stored != obj.schedule_hash():
            raise ConfigurationError("noise path schedule hash mismatch")
        return obj
