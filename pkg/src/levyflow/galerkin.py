"""Density-weighted Galerkin system and the jump-adapted stepper.

The velocity expansion coefficients solve a finite-dimensional jump SDE:
the density-weighted mass matrix multiplies the coefficient increment,
the viscous term is treated implicitly, convection and forcing explicitly,
Brownian increments enter per sub-interval, and every sampled jump is
applied at its exact time to the pre-jump state (jump-adapted grid).
Small-jump compensation enters the continuous part as a drift computed by
mark-space quadrature.  After the coefficient update the density is
advanced by the transport module over the same slice with the slice-frozen
velocity (Lie splitting).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .basis import BasisSet, CoefficientVector
from .errors import BlowUpError, DensityBoundError, UsageError
from .noise import SMALL
from .transport import DensityField, advance_density


@dataclass
class MassMatrix:
    """Density-weighted Gram matrix with a cached Cholesky factorization."""

    matrix: np.ndarray
    _cho: tuple = field(default=None, repr=False)

    def __post_init__(self):
        if self._cho is None:
            try:
                self._cho = sla.cho_factor(self.matrix)
            except sla.LinAlgError as exc:
                raise DensityBoundError(
                    "mass matrix factorization failed: density bounds violated"
                ) from exc

    def solve(self, rhs):
        return sla.cho_solve(self._cho, rhs)

    def apply(self, vec):
        return self.matrix @ vec

    def energy(self, phi):
        """Weighted energy ||sqrt(rho) u||^2 = phi' M phi."""
        return float(phi @ (self.matrix @ phi))


def assemble_mass(rho, basis):
    """Quadrature mass matrix M_kl = integral(rho w_k . w_l)."""
    w = basis.grid.weights * rho.values
    flat = basis._flat_modes  # (n, d*N)
    weighted = flat.reshape(basis.n_modes, basis.d_space, -1) * w[None, None, :]
    mat = flat @ weighted.reshape(basis.n_modes, -1).T
    return MassMatrix(0.5 * (mat + mat.T))


def convection_rhs(rho, phi, basis):
    """Vector b_l = integral(rho (u.grad)u . w_l), quadratic in phi."""
    u = basis.eval_velocity(phi).values  # (d, N)
    gu = basis.eval_gradient(phi)  # (a, c, N)
    conv = np.einsum("ax,acx->cx", u, gu)
    return basis.project(conv, weight=rho)


def project_force(field_map, rho, phi, basis, t_or_mark):
    """Project a forcing field onto the basis: integral(rho field . w_l).

    ``field_map`` is called as ``field_map(t_or_mark, u_values)``; wrap
    mark-indexed maps accordingly (``lambda z, u: F(u, z)``).
    """
    u = basis.eval_velocity(phi).values
    return basis.project(field_map(t_or_mark, u), weight=rho)


@dataclass
class GalerkinSystem:
    """Per-run assembly context: stiffness, compensator quadrature, spec."""

    basis: BasisSet
    nu: float
    stiffness: np.ndarray  # diagonal entries nu * lambda_k
    spec: object
    comp_marks: np.ndarray
    comp_weights: np.ndarray
    comp_scale_F: float
    mass_reuse_steps: int = 1
    _mass: MassMatrix = field(default=None, repr=False)
    _mass_age: int = field(default=0, repr=False)
    _mass_rho_id: int = field(default=None, repr=False)

    @property
    def n(self):
        return self.basis.n_modes

    @classmethod
    def build(cls, basis, nu, spec, measure, epsilon, mass_reuse_steps=1,
              quad_nodes=32):
        if nu <= 0:
            raise UsageError("viscosity nu must be positive")
        marks, weights = measure.small_quadrature(epsilon, quad_nodes)
        scale = 0.0
        if spec.F_radial is not None and len(marks):
            r = np.linalg.norm(marks, axis=1)
            fac = np.asarray(spec.F_radial(r), dtype=float)
            if fac.shape != r.shape:
                fac = np.array([spec.F_radial(ri) for ri in r])
            scale = float(np.dot(weights, fac))
        return cls(
            basis=basis,
            nu=nu,
            stiffness=nu * basis.eigenvalues,
            spec=spec,
            comp_marks=marks,
            comp_weights=weights,
            comp_scale_F=scale,
        )

    def mass_for(self, rho):
        """Mass matrix for rho; exact when the cached density matches, a
        stale matrix only under the explicit reuse-k performance knob."""
        if self._mass is not None:
            if self._mass_rho_id == id(rho):
                return self._mass
            if self._mass_age < self.mass_reuse_steps - 1:
                self._mass_age += 1
                return self._mass
        self._mass = assemble_mass(rho, self.basis)
        self._mass_rho_id = id(rho)
        self._mass_age = 0
        return self._mass

    @property
    def mass(self):
        return self._mass.matrix if self._mass is not None else None

    def compensator_projection(self, rho, u_values):
        """Drift vector integral(P_F(u, z) mu(dz), eps <= |z| < 1)."""
        spec = self.spec
        if len(self.comp_marks) == 0:
            return np.zeros(self.n)
        if spec.F_radial is not None and spec.F_shape is not None:
            if self.comp_scale_F == 0.0:
                return np.zeros(self.n)
            return self.comp_scale_F * self.basis.project(
                spec.F_shape(u_values), weight=rho
            )
        drift = np.zeros(self.n)
        for z, qw in zip(self.comp_marks, self.comp_weights):
            drift += qw * self.basis.project(spec.F(u_values, z), weight=rho)
        return drift


@dataclass
class SimulationState:
    """One path's state: time, density, coefficients, optional ledger."""

    t: float
    rho: DensityField
    phi: CoefficientVector
    ledger: object = None
    stopped: bool = False
    stopped_at: float = None


@dataclass
class StepRecord:
    """Bookkeeping for one accepted base step."""

    t: float
    energy: float
    grad_norm: float
    jump_count: int
    rho_min: float
    rho_max: float
    jump_increments: list = field(default_factory=list)
    max_substep_increment: float = 0.0
    gw_projection: np.ndarray = None  # <rho*g_i, w_.> rows for Ito probes
    sub_dw: np.ndarray = None

    def as_json_dict(self):
        return {
            "t": self.t,
            "energy": self.energy,
            "grad_norm": self.grad_norm,
            "jump_count": self.jump_count,
            "rho_min": self.rho_min,
            "rho_max": self.rho_max,
        }


def step(state, system, noise_slice, spec=None, dt=None, stopping=None):
    """Advance one base step of length dt covering (t, t + dt].

    Pure function of (state, noise_slice, dt): returns a new state plus a
    StepRecord.  ``stopping`` is an optional (threshold, enforce) pair; in
    enforce mode the path freezes once ||sqrt(rho) u|| reaches the
    threshold, and jumps are never applied to an already-crossed state.
    """
    spec = spec if spec is not None else system.spec
    if dt is None:
        dt = float(np.sum(noise_slice.sub_dts))
    if dt <= 0:
        raise UsageError("dt must be positive")
    basis = system.basis
    rho = state.rho
    phi = np.array(_phi_of(state), copy=True)
    t = state.t

    M = system.mass_for(rho)
    u0 = basis.eval_velocity(phi)
    point_eval = None
    if basis.provider == "torus_fourier":
        phi0 = phi.copy()
        point_eval = lambda pts: basis.eval_at_points(phi0, pts)

    threshold, enforce = (None, False)
    if stopping is not None:
        threshold, enforce = stopping

    stopped = state.stopped
    stopped_at = state.stopped_at
    jump_increments = []
    max_inc = 0.0
    n_jumps = 0
    gw_rows = []

    def crossed(p):
        return threshold is not None and np.sqrt(max(M.energy(p), 0.0)) >= threshold

    for j, h in enumerate(noise_slice.sub_dts):
        if stopped and enforce:
            break
        u_vals = basis.eval_velocity(phi).values
        conv = convection_rhs(rho, phi, basis)
        p_f = basis.project(spec.f(t, u_vals), weight=rho)
        p_g = [basis.project(gi, weight=rho) for gi in spec.g(t, u_vals)]
        drift = system.compensator_projection(rho, u_vals)

        rhs = M.apply(phi) + h * (-conv + p_f - drift)
        dw = noise_slice.sub_dw[j]
        for i, pg in enumerate(p_g):
            rhs = rhs + pg * dw[i]
        gw_rows.append((np.array([pg for pg in p_g]), dw, h))

        try:
            lhs = M.matrix + h * np.diag(system.stiffness)
            phi_new = sla.cho_solve(sla.cho_factor(lhs), rhs)
        except sla.LinAlgError as exc:
            raise DensityBoundError(
                "implicit solve failed: density bounds violated"
            ) from exc
        if not np.all(np.isfinite(phi_new)):
            raise BlowUpError(t + h)

        pre_norm = np.sqrt(max(M.energy(phi), 0.0))
        new_norm = np.sqrt(max(M.energy(phi_new), 0.0))
        max_inc = max(max_inc, abs(new_norm - pre_norm))
        phi = phi_new
        t = t + h

        if not stopped and crossed(phi):
            stopped, stopped_at = True, t
            if enforce:
                break

        jump = noise_slice.jump_at_end[j]
        if jump is not None:
            n_jumps += 1
            u_pre = basis.eval_velocity(phi).values  # u(t-) for the jump map
            if jump.size_class == SMALL:
                fld = spec.F(u_pre, jump.mark)
            else:
                fld = spec.G(u_pre, jump.mark)
            proj = basis.project(fld, weight=rho)
            pre_norm = np.sqrt(max(M.energy(phi), 0.0))
            phi = phi + M.solve(proj)
            if not np.all(np.isfinite(phi)):
                raise BlowUpError(t)
            new_norm = np.sqrt(max(M.energy(phi), 0.0))
            jump_increments.append(new_norm - pre_norm)
            max_inc = max(max_inc, abs(new_norm - pre_norm))
            if not stopped and crossed(phi):
                stopped, stopped_at = True, t
                if enforce:
                    break

    t_end = state.t + dt
    if stopped and enforce:
        rho_new = DensityField(
            rho.values.copy(), rho.bounds, rho.grid, mass0=rho.mass0
        )
    else:
        rho_new = advance_density(rho, u0, dt, point_eval=point_eval)

    new_state = SimulationState(
        t=t_end,
        rho=rho_new,
        phi=CoefficientVector(phi),
        ledger=state.ledger,
        stopped=stopped,
        stopped_at=stopped_at,
    )
    m_end = system.mass_for(rho_new) if system.mass_reuse_steps == 1 else M
    record = StepRecord(
        t=t_end,
        energy=m_end.energy(phi),
        grad_norm=basis.grad_sq_norm(phi),
        jump_count=n_jumps,
        rho_min=rho_new.min(),
        rho_max=rho_new.max(),
        jump_increments=jump_increments,
        max_substep_increment=max_inc,
        gw_projection=gw_rows,
        sub_dw=noise_slice.sub_dw,
    )
    return new_state, record


def _phi_of(state):
    phi = state.phi
    return phi.phi if isinstance(phi, CoefficientVector) else np.asarray(phi, float)


# -- weak-form residual diagnostic ------------------------------------------


@dataclass
class PathHistory:
    """Recorded discrete path: states at base times plus the noise path."""

    times: np.ndarray
    phis: np.ndarray  # (n_steps+1, n)
    rhos: list  # DensityField per base time
    noise_path: object


def weak_form_residual(history, spec, system, mode_index):
    """Difference of the two sides of the time-integrated weak identity
    along the recorded path, tested against mode ``mode_index``.

    Time integrals use the left-point rule on the base grid; jump terms are
    exact sums at the recorded marks with the integrand at the pre-jump
    recorded state.  Expected O(dt) deterministic, O(sqrt(dt)) RMS over
    stochastic paths.
    """
    basis = system.basis
    ell = mode_index
    mode = basis.modes[ell]
    times = history.times
    path = history.noise_path
    lam = basis.eigenvalues[ell]

    rho_T, phi_T = history.rhos[-1], history.phis[-1]
    rho_0, phi_0 = history.rhos[0], history.phis[0]
    u_T = basis.eval_velocity(phi_T).values
    u_0 = basis.eval_velocity(phi_0).values
    lhs = basis.weighted_inner(u_T, mode, weight=rho_T) - basis.weighted_inner(
        u_0, mode, weight=rho_0
    )

    conv_int = 0.0
    visc_int = 0.0
    f_int = 0.0
    g_int = 0.0
    comp_int = 0.0
    jump_sum = 0.0

    grad_mode = basis.mode_grads[ell]  # (a, c, N)
    w_quad = basis.grid.weights

    for i in range(len(times) - 1):
        dt = times[i + 1] - times[i]
        t = times[i]
        rho_i = history.rhos[i]
        phi_i = history.phis[i]
        u_i = basis.eval_velocity(phi_i).values
        # integral(rho u_a u_c d_a psi_c)
        conv_int += dt * float(
            np.einsum("x,ax,cx,acx->", w_quad * rho_i.values, u_i, u_i, grad_mode)
        )
        visc_int += dt * system.nu * lam * phi_i[ell]
        f_int += dt * basis.weighted_inner(spec.f(t, u_i), mode, weight=rho_i)
        dw = np.sum(
            path.sub_dw[path._base_ptr[i] : path._base_ptr[i + 1]], axis=0
        )
        for c, g_c in enumerate(spec.g(t, u_i)):
            g_int += basis.weighted_inner(g_c, mode, weight=rho_i) * dw[c]
        # compensator drift of the truncated small-jump integral
        drift = system.compensator_projection(rho_i, u_i)
        comp_int += dt * drift[ell]

    # jump sums at exact times with pre-jump recorded state (left of step)
    for j, jump in enumerate(path.jumps()):
        i = int(np.searchsorted(times, jump.time, side="right") - 1)
        i = min(max(i, 0), len(times) - 2)
        rho_i = history.rhos[i]
        u_i = basis.eval_velocity(history.phis[i]).values
        fld = spec.F(u_i, jump.mark) if jump.size_class == SMALL else spec.G(
            u_i, jump.mark
        )
        jump_sum += basis.weighted_inner(fld, mode, weight=rho_i)

    rhs = f_int + g_int + jump_sum - comp_int
    return lhs - (conv_int - visc_int) - rhs
