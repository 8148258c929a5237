"""Forcing catalog with machine-checkable Lipschitz/growth contracts.

Each catalog entry supplies the four maps driving the momentum equation:
deterministic ``f(t, u)``, Brownian ``g(t, u)`` (one field per Brownian
component), small-jump ``F(u, z)`` and large-jump ``G(u, z)``.  Every entry
declares the constants of its contracts:

* ``declared_lipschitz`` / ``declared_growth`` for f and g (the g tuple is
  measured in the product norm, i.e. sqrt of the sum of component norms
  squared);
* ``declared_jump_lipschitz`` for the mark-integrated squared-Lipschitz
  bound on F and G;
* ``declared_jump_moment[p]`` for the mark-integrated p-th moment growth
  bound, p in {2, 4, 8}.

``verify_contract`` samples random field pairs and falsifies the declared
constants; it cannot prove them.  Jump maps factor as
``radial(|z|) * shape(u)``, which the stepper exploits to evaluate
mark-space compensator integrals with a single projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .noise import ZeroMeasure

MOMENT_PS = (2, 4, 8)


def _l2_norm(weights, values):
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        return float(np.sqrt(np.dot(weights, v * v)))
    return float(np.sqrt(np.einsum("x,cx->", weights, v * v)))


@dataclass
class ForcingSpec:
    """Forcing maps plus their declared contract constants."""

    name: str
    brownian_dim: int
    f: callable
    g: callable  # (t, U) -> list of brownian_dim fields
    F: callable  # (U, z) -> field
    G: callable  # (U, z) -> field
    F_radial: callable  # r -> scalar factor; F(u, z) = F_radial(|z|) * F_shape(u)
    F_shape: callable
    G_radial: callable
    G_shape: callable
    declared_lipschitz: float
    declared_growth: float
    declared_jump_lipschitz: float
    declared_jump_moment: dict
    measure: object
    params: dict = field(default_factory=dict)


@dataclass
class ContractReport:
    """Outcome of sampled contract verification."""

    name: str
    samples: int
    lipschitz_ratio: float
    growth_ratio: float
    jump_lipschitz_ratio: float
    moment_ratios: dict
    declared_lipschitz: float
    declared_growth: float
    declared_jump_lipschitz: float
    declared_jump_moment: dict
    passed: bool

    def summary(self):
        lines = [
            f"forcing contract report: {self.name} ({self.samples} samples)",
            f"  lipschitz      {self.lipschitz_ratio:.6g} <= {self.declared_lipschitz:.6g}",
            f"  growth         {self.growth_ratio:.6g} <= {self.declared_growth:.6g}",
            f"  jump lipschitz {self.jump_lipschitz_ratio:.6g} <= {self.declared_jump_lipschitz:.6g}",
        ]
        for p in sorted(self.moment_ratios):
            lines.append(
                f"  jump moment p={p}  {self.moment_ratios[p]:.6g} <= "
                f"{self.declared_jump_moment[p]:.6g}"
            )
        lines.append(f"  passed: {self.passed}")
        return "\n".join(lines)


def _norm_of(weights):
    def norm(u):
        return _l2_norm(weights, u)

    return norm


def _ball_clip(norm, radius):
    # metric projection onto the L2 ball: 1-Lipschitz
    def shape(u):
        n = norm(u)
        if n <= radius or n == 0.0:
            return np.array(u, copy=True)
        return u * (radius / n)

    return shape


def _norm_saturation(norm):
    # u / (1 + |u|): 2-Lipschitz, bounded by 1
    def shape(u):
        return u / (1.0 + norm(u))

    return shape


def _tanh_saturation(amp):
    # pointwise amp*tanh(u/amp): 1-Lipschitz, sup norm <= amp
    def shape(u):
        return amp * np.tanh(u / amp)

    return shape


def _zero_map_t(t, u):
    return np.zeros_like(u)


def _make_spec(name, measure, grid, brownian_dim, *, f, g, F_radial, F_shape,
               F_shape_lip, G_radial, G_shape, G_shape_lip, lipschitz, growth,
               params):
    """Assemble a ForcingSpec and compute its mark-integrated constants.

    All catalog shapes satisfy ||shape(u)|| <= ||u||, so the p-th moment
    constant is just the radial integral of the mark factor to the p-th
    power.
    """
    from scipy import integrate

    def radial_int(fn, lo, hi):
        if measure is None or isinstance(measure, ZeroMeasure):
            return 0.0
        val, _ = integrate.quad(
            lambda r: fn(r) * measure._radial_density(r), lo, hi, limit=200
        )
        return val

    hi = measure._radial_cutoff_finite() if measure is not None else 1.0
    jump_lip = (
        F_shape_lip**2 * radial_int(lambda r: F_radial(r) ** 2, 0.0, 1.0)
        + G_shape_lip**2 * radial_int(lambda r: G_radial(r) ** 2, 1.0, hi)
    )
    jump_moment = {}
    for p in MOMENT_PS:
        jump_moment[p] = radial_int(lambda r: F_radial(r) ** p, 0.0, 1.0) + radial_int(
            lambda r: G_radial(r) ** p, 1.0, hi
        )

    def F_map(u, z):
        return F_radial(float(np.linalg.norm(np.atleast_1d(z)))) * F_shape(u)

    def G_map(u, z):
        return G_radial(float(np.linalg.norm(np.atleast_1d(z)))) * G_shape(u)

    return ForcingSpec(
        name=name,
        brownian_dim=brownian_dim,
        f=f,
        g=g,
        F=F_map,
        G=G_map,
        F_radial=F_radial,
        F_shape=F_shape,
        G_radial=G_radial,
        G_shape=G_shape,
        declared_lipschitz=lipschitz,
        declared_growth=growth,
        declared_jump_lipschitz=jump_lip,
        declared_jump_moment=jump_moment,
        measure=measure if measure is not None else ZeroMeasure(),
        params=params,
    )


def builtin(name, measure=None, grid=None, brownian_dim=1, **params):
    """Instantiate a catalog entry.

    ``measure`` (IntensityMeasure) fixes the mark-integrated constants;
    ``grid`` supplies the quadrature weights the saturation maps need for
    L2 norms.  Catalog: zero, linear_damping, bounded_saturation,
    jump_scaled.
    """
    if name == "zero":
        zero_g = lambda t, u: [np.zeros_like(u) for _ in range(brownian_dim)]
        zero_j = lambda u, z: np.zeros_like(u)
        return ForcingSpec(
            name="zero",
            brownian_dim=brownian_dim,
            f=_zero_map_t,
            g=zero_g,
            F=zero_j,
            G=zero_j,
            F_radial=lambda r: 0.0,
            F_shape=lambda u: np.zeros_like(u),
            G_radial=lambda r: 0.0,
            G_shape=lambda u: np.zeros_like(u),
            declared_lipschitz=0.0,
            declared_growth=0.0,
            declared_jump_lipschitz=0.0,
            declared_jump_moment={p: 0.0 for p in MOMENT_PS},
            measure=measure if measure is not None else ZeroMeasure(),
            params=params,
        )

    if grid is None:
        raise UsageError(f"catalog entry {name!r} needs a quadrature grid")
    norm = _norm_of(grid.weights)
    root_d = np.sqrt(brownian_dim)

    if name == "linear_damping":
        kappa = params.setdefault("kappa", 0.5)
        sigma = params.setdefault("sigma", 0.2)
        a_scale = params.setdefault("a_scale", 0.1)
        b_scale = params.setdefault("b_scale", 0.1)
        clip_radius = params.setdefault("clip_radius", 8.0)

        def f(t, u):
            return -kappa * u

        def g(t, u):
            return [sigma * u / root_d for _ in range(brownian_dim)]

        return _make_spec(
            name, measure, grid, brownian_dim,
            f=f, g=g,
            F_radial=lambda r: a_scale * r,
            F_shape=_ball_clip(norm, clip_radius),
            F_shape_lip=1.0,
            G_radial=lambda r: b_scale * r,
            G_shape=_norm_saturation(norm),
            G_shape_lip=2.0,
            lipschitz=max(kappa, sigma),
            growth=max(kappa, sigma),
            params=params,
        )

    if name == "bounded_saturation":
        amp = params.setdefault("amp", 0.5)
        a_scale = params.setdefault("a_scale", 0.2)
        b_scale = params.setdefault("b_scale", 0.2)
        tanh_shape = _tanh_saturation(amp)

        def f(t, u):
            return tanh_shape(u)

        def g(t, u):
            return [tanh_shape(u) / root_d for _ in range(brownian_dim)]

        def m(r):
            return r / (1.0 + r)

        return _make_spec(
            name, measure, grid, brownian_dim,
            f=f, g=g,
            F_radial=lambda r: a_scale * m(r),
            F_shape=tanh_shape,
            F_shape_lip=1.0,
            G_radial=lambda r: b_scale * m(r),
            G_shape=tanh_shape,
            G_shape_lip=1.0,
            lipschitz=1.0,
            growth=min(amp, 1.0),
            params=params,
        )

    if name == "jump_scaled":
        a1 = params.setdefault("a1", 0.15)
        b0 = params.setdefault("b0", 0.1)
        b1 = params.setdefault("b1", 0.05)
        nsat = _norm_saturation(norm)
        zero_g = lambda t, u: [np.zeros_like(u) for _ in range(brownian_dim)]

        return _make_spec(
            name, measure, grid, brownian_dim,
            f=_zero_map_t, g=zero_g,
            F_radial=lambda r: a1 * r,
            F_shape=nsat,
            F_shape_lip=2.0,
            G_radial=lambda r: b0 + b1 * r,
            G_shape=nsat,
            G_shape_lip=2.0,
            lipschitz=0.0,
            growth=0.0,
            params=params,
        )

    raise UsageError(
        f"unknown forcing catalog entry {name!r}; available: "
        "zero, linear_damping, bounded_saturation, jump_scaled"
    )


def _tuple_norm(weights, fields):
    return float(np.sqrt(sum(_l2_norm(weights, h) ** 2 for h in fields)))


def verify_contract(spec, basis, samples=1000, rng=None, quad_nodes=64):
    """Sample random field pairs and report worst-case contract ratios.

    Pass iff every observed ratio is at most the declared constant times
    1.0001.  A failing report is an outcome, not an exception.
    """
    if samples < 1:
        raise UsageError("samples must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    w = basis.grid.weights
    n = basis.n_modes

    small_marks, small_w = spec.measure.small_quadrature(1e-8, quad_nodes)
    large_marks, large_w = spec.measure.large_quadrature(quad_nodes)

    lip = growth = jlip = 0.0
    moments = {p: 0.0 for p in MOMENT_PS}
    t = 0.0
    for _ in range(samples):
        scale = 10.0 ** rng.uniform(-1.0, 1.0)
        u = basis.eval_velocity(scale * rng.standard_normal(n)).values
        v = basis.eval_velocity(scale * rng.standard_normal(n)).values
        nu_, nv, duv = _l2_norm(w, u), _l2_norm(w, v), _l2_norm(w, u - v)

        df = _l2_norm(w, spec.f(t, u) - spec.f(t, v))
        dg = _tuple_norm(w, [a - b for a, b in zip(spec.g(t, u), spec.g(t, v))])
        if duv > 0:
            lip = max(lip, df / duv, dg / duv)
        growth = max(
            growth,
            _l2_norm(w, spec.f(t, u)) / (1.0 + nu_),
            _tuple_norm(w, spec.g(t, u)) / (1.0 + nu_),
        )

        jl = 0.0
        mom = {p: 0.0 for p in MOMENT_PS}
        for marks, mw, which in ((small_marks, small_w, "F"),
                                 (large_marks, large_w, "G")):
            radial = spec.F_radial if which == "F" else spec.G_radial
            shape = spec.F_shape if which == "F" else spec.G_shape
            if radial is not None and shape is not None:
                # separable fast path: one shape evaluation per pair
                r = np.linalg.norm(marks, axis=1)
                fac = np.asarray(radial(r), dtype=float)
                if fac.shape != r.shape:
                    fac = np.array([radial(ri) for ri in r])
                dshape = _l2_norm(w, shape(u) - shape(v))
                nshape = _l2_norm(w, shape(u))
                jl += float(np.dot(mw, fac**2)) * dshape**2
                for p in MOMENT_PS:
                    mom[p] += float(np.dot(mw, np.abs(fac) ** p)) * nshape**p
            else:
                jmap = spec.F if which == "F" else spec.G
                for z, qw in zip(marks, mw):
                    dj = _l2_norm(w, jmap(u, z) - jmap(v, z))
                    nj = _l2_norm(w, jmap(u, z))
                    jl += qw * dj**2
                    for p in MOMENT_PS:
                        mom[p] += qw * nj**p
        if duv > 0:
            jlip = max(jlip, jl / duv**2)
        for p in MOMENT_PS:
            moments[p] = max(moments[p], mom[p] / (1.0 + nu_**p))

    slack = 1.0001
    passed = (
        lip <= spec.declared_lipschitz * slack + 1e-12
        and growth <= spec.declared_growth * slack + 1e-12
        and jlip <= spec.declared_jump_lipschitz * slack + 1e-12
        and all(moments[p] <= spec.declared_jump_moment[p] * slack + 1e-12
                for p in MOMENT_PS)
    )
    return ContractReport(
        name=spec.name,
        samples=samples,
        lipschitz_ratio=lip,
        growth_ratio=growth,
        jump_lipschitz_ratio=jlip,
        moment_ratios=moments,
        declared_lipschitz=spec.declared_lipschitz,
        declared_growth=spec.declared_growth,
        declared_jump_lipschitz=spec.declared_jump_lipschitz,
        declared_jump_moment=spec.declared_jump_moment,
        passed=passed,
    )
