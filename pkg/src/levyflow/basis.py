"""Divergence-free spectral bases on the unit box/torus.

Two providers:

* ``torus_fourier`` -- analytic trigonometric modes on the periodic unit
  torus.  Each mode is ``sqrt(2) * e * trig(2*pi*k.x)`` with polarization
  ``e`` orthogonal to the integer wave vector ``k``, so the field is
  solenoidal by construction and the Laplacian eigenvalue is
  ``4*pi^2*|k|^2``.
* ``dirichlet_stokes`` -- numerically computed eigenfunctions of the
  discrete Stokes operator on the unit box with no-slip boundary: the
  five/seven-point vector Dirichlet Laplacian restricted to the null space
  of the centered-difference divergence.

Modes are sampled on a uniform tensor quadrature grid and orthonormal in
the discrete L2 inner product.  The stiffness pairing of eigenmodes is
diagonal, so H1-seminorm computations reduce to ``sum(lam_k * phi_k**2)``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .errors import ConfigurationError, EigenSolveError, UsageError

CACHE_FORMAT_VERSION = 1

PROVIDERS = ("torus_fourier", "dirichlet_stokes")


@dataclass(frozen=True)
class Grid:
    """Uniform tensor quadrature grid on the unit box/torus.

    ``coords`` has shape (N, d); ``weights`` (N,) sums to the domain
    volume (= 1).  ``shape`` is the per-axis node count; ``spacing`` the
    node distance.  Periodic grids omit the duplicate endpoint.
    """

    coords: np.ndarray
    weights: np.ndarray
    shape: tuple
    spacing: float
    periodic: bool

    @property
    def n_nodes(self):
        return self.coords.shape[0]

    @property
    def d(self):
        return self.coords.shape[1]

    def quad(self, values):
        """Quadrature of scalar node samples."""
        return float(np.dot(self.weights, values))


@dataclass
class GridField:
    """Scalar (N,) or vector (c, N) samples attached to a grid."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape[-1] != self.grid.n_nodes:
            raise UsageError(
                f"field has {self.values.shape[-1]} samples for a grid of "
                f"{self.grid.n_nodes} nodes"
            )


@dataclass
class CoefficientVector:
    """Galerkin coefficients of a velocity field in a given basis."""

    phi: np.ndarray

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=np.float64).ravel()

    def __len__(self):
        return len(self.phi)


def _as_coeffs(phi, n_modes):
    arr = phi.phi if isinstance(phi, CoefficientVector) else np.asarray(phi, float)
    arr = arr.ravel()
    if arr.shape[0] != n_modes:
        raise UsageError(f"expected {n_modes} coefficients, got {arr.shape[0]}")
    return arr


@dataclass
class BasisSet:
    """Ordered divergence-free modes with eigenvalues and quadrature grid.

    ``modes`` is (n, d, N) node samples, ``mode_grads`` (n, d, d, N) with
    entry [k, a, c] holding the a-derivative of component c of mode k.
    For the torus provider the trig tables (``wavevectors`` etc.) allow
    exact evaluation at arbitrary points.
    """

    provider: str
    d_space: int
    resolution: int
    grid: Grid
    modes: np.ndarray
    mode_grads: np.ndarray
    eigenvalues: np.ndarray
    wavevectors: np.ndarray | None = None
    polarizations: np.ndarray | None = None
    is_sin: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_modes(self):
        return self.modes.shape[0]

    @property
    def _flat_modes(self):
        """(n, d*N) view of the modes for BLAS-backed pairings."""
        cached = self.meta.get("_flat_modes")
        if cached is None:
            cached = np.ascontiguousarray(self.modes.reshape(self.n_modes, -1))
            self.meta["_flat_modes"] = cached
        return cached

    @property
    def _flat_grads(self):
        cached = self.meta.get("_flat_grads")
        if cached is None:
            cached = np.ascontiguousarray(self.mode_grads.reshape(self.n_modes, -1))
            self.meta["_flat_grads"] = cached
        return cached

    # -- expansions -------------------------------------------------------

    def eval_velocity(self, phi):
        """Velocity field sum(phi_k * w_k) as a vector GridField."""
        c = _as_coeffs(phi, self.n_modes)
        vals = (c @ self._flat_modes).reshape(self.d_space, -1)
        return GridField(vals, self.grid)

    def eval_gradient(self, phi):
        """Gradient samples (d, d, N): entry [a, c] is d_a u_c."""
        c = _as_coeffs(phi, self.n_modes)
        return (c @ self._flat_grads).reshape(
            self.d_space, self.d_space, -1
        )

    def eval_at_points(self, phi, points):
        """Velocity at arbitrary points (torus provider only)."""
        if self.provider != "torus_fourier":
            raise UsageError("point evaluation is exact only on the torus")
        c = _as_coeffs(phi, self.n_modes)
        pts = np.ascontiguousarray(np.asarray(points, float))
        return _kernels.trig_velocity_eval(
            pts, self.wavevectors, self.polarizations, self.is_sin, c
        )

    # -- pairings ---------------------------------------------------------

    def weighted_inner(self, a, b, weight=None):
        """Quadrature of integral(weight * a . b); weight defaults to 1."""
        av, bv = _field_values(a, self), _field_values(b, self)
        w = self.grid.weights
        if weight is not None:
            w = w * _weight_values(weight, self)
        if av.ndim == 1:
            return float(np.einsum("x,x,x->", w, av, bv))
        return float(np.einsum("x,cx,cx->", w, av, bv))

    def project(self, values, weight=None, n_modes=None):
        """Vector of pairings integral(weight * values . w_l) for l < n."""
        w = self.grid.weights
        if weight is not None:
            w = w * _weight_values(weight, self)
        flat = self._flat_modes if n_modes is None else self._flat_modes[:n_modes]
        weighted = (np.asarray(values, float) * w[None, :]).ravel()
        return flat @ weighted

    def grad_sq_norm(self, phi):
        """Squared H1 seminorm sum(lam_k * phi_k^2) of the expansion."""
        c = _as_coeffs(phi, self.n_modes)
        return float(np.dot(self.eigenvalues, c * c))

    def gram(self):
        return np.einsum("x,kcx,lcx->kl", self.grid.weights, self.modes, self.modes)

    def divergence_residuals(self):
        """Relative discrete-divergence L2 norm per mode.

        Uses the provider-consistent derivative (analytic trig derivatives
        on the torus, centered differences on the box).  On the box the
        divergence constraint acts at interior nodes, so boundary nodes
        (where only extrapolated one-sided derivatives exist) are excluded.
        Normalized by the mode's H1 norm.
        """
        if self.grid.periodic:
            mask = np.ones(self.grid.n_nodes, dtype=bool)
        else:
            interior = np.zeros(self.grid.shape, dtype=bool)
            interior[tuple(slice(1, -1) for _ in range(self.d_space))] = True
            mask = interior.ravel()
        w = self.grid.weights[mask]
        res = np.empty(self.n_modes)
        for k in range(self.n_modes):
            div = sum(self.mode_grads[k, c, c] for c in range(self.d_space))[mask]
            h1 = np.sqrt(1.0 + self.eigenvalues[k])
            res[k] = np.sqrt(max(float(np.dot(w, div * div)), 0.0)) / h1
        return res

    def boundary_values(self):
        """Max |mode| over boundary nodes (0 for periodic grids)."""
        if self.grid.periodic:
            return np.zeros(self.n_modes)
        mask = np.zeros(self.grid.shape, dtype=bool)
        for axis in range(self.d_space):
            mask[tuple(0 if a == axis else slice(None) for a in range(self.d_space))] = True
            mask[tuple(-1 if a == axis else slice(None) for a in range(self.d_space))] = True
        return np.abs(self.modes[:, :, mask.ravel()]).max(axis=(1, 2))

    # -- cache ------------------------------------------------------------

    def cache_key(self):
        return dict(
            provider=self.provider,
            n_modes=int(self.n_modes),
            resolution=int(self.resolution),
            d_space=int(self.d_space),
        )

    def save(self, path):
        """Write the basis to a versioned npz cache file."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = dict(
            format_version=np.int64(CACHE_FORMAT_VERSION),
            key=np.frombuffer(
                json.dumps(self.cache_key(), sort_keys=True).encode(), dtype=np.uint8
            ),
            modes=self.modes,
            mode_grads=self.mode_grads,
            eigenvalues=self.eigenvalues,
            coords=self.grid.coords,
            weights=self.grid.weights,
            shape=np.asarray(self.grid.shape, dtype=np.int64),
            spacing=np.float64(self.grid.spacing),
            periodic=np.int64(self.grid.periodic),
        )
        if self.wavevectors is not None:
            payload["wavevectors"] = self.wavevectors
            payload["polarizations"] = self.polarizations
            payload["is_sin"] = self.is_sin
        np.savez(path, **payload)

    @staticmethod
    def load(path):
        with np.load(path) as data:
            if int(data["format_version"]) != CACHE_FORMAT_VERSION:
                raise ConfigurationError(
                    f"basis cache {path} has format version "
                    f"{int(data['format_version'])}, expected {CACHE_FORMAT_VERSION}"
                )
            key = json.loads(bytes(data["key"]).decode())
            grid = Grid(
                coords=data["coords"],
                weights=data["weights"],
                shape=tuple(int(s) for s in data["shape"]),
                spacing=float(data["spacing"]),
                periodic=bool(data["periodic"]),
            )
            return BasisSet(
                provider=key["provider"],
                d_space=key["d_space"],
                resolution=key["resolution"],
                grid=grid,
                modes=data["modes"],
                mode_grads=data["mode_grads"],
                eigenvalues=data["eigenvalues"],
                wavevectors=data.get("wavevectors"),
                polarizations=data.get("polarizations"),
                is_sin=data.get("is_sin"),
            )


def _field_values(f, basis):
    if isinstance(f, GridField):
        if f.grid is not basis.grid and f.grid.shape != basis.grid.shape:
            raise UsageError("fields live on different grids")
        return f.values
    return np.asarray(f, dtype=np.float64)


def _weight_values(weight, basis):
    values = getattr(weight, "values", weight)
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (basis.grid.n_nodes,):
        raise UsageError("weight must be a scalar field on the basis grid")
    return values


# -- grids ----------------------------------------------------------------


def periodic_grid(resolution, d_space):
    axes = [np.arange(resolution) / resolution for _ in range(d_space)]
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=1)
    weights = np.full(coords.shape[0], resolution ** (-d_space))
    return Grid(coords, weights, (resolution,) * d_space, 1.0 / resolution, True)


def box_grid(resolution, d_space):
    h = 1.0 / (resolution - 1)
    axes = [np.linspace(0.0, 1.0, resolution) for _ in range(d_space)]
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=1)
    w1 = np.full(resolution, h)
    w1[0] = w1[-1] = h / 2.0  # trapezoid ends
    weights = w1
    for _ in range(d_space - 1):
        weights = np.multiply.outer(weights, w1)
    return Grid(coords, weights.ravel(), (resolution,) * d_space, h, False)


# -- torus provider -------------------------------------------------------


def _canonical_wavevectors(d_space, count_needed):
    """Integer wave vectors with positive leading nonzero entry, sorted by
    (|k|^2, lexicographic), enough to supply ``count_needed`` modes.

    Only vectors inside the ball |k|^2 <= kmax^2 are kept, so enlarging the
    enumeration box can never change the returned prefix.
    """
    per_vec = 2 * (d_space - 1)  # cos+sin per polarization
    n_vecs = -(-count_needed // per_vec)
    kmax = 0
    while True:
        kmax += 1
        vecs = []
        for idx in np.ndindex(*(2 * kmax + 1,) * d_space):
            k = tuple(i - kmax for i in idx)
            if all(c == 0 for c in k):
                continue
            if next(c for c in k if c != 0) < 0:
                continue
            if sum(c * c for c in k) <= kmax * kmax:
                vecs.append(k)
        if len(vecs) >= n_vecs:
            vecs.sort(key=lambda k: (sum(c * c for c in k), k))
            return vecs


def _polarizations(k):
    """Orthonormal vectors perpendicular to integer vector k."""
    k = np.asarray(k, dtype=np.float64)
    d = len(k)
    if d == 2:
        e = np.array([-k[1], k[0]]) / np.linalg.norm(k)
        return [e]
    # 3D: Gram-Schmidt of the two coordinate axes least aligned with k
    axes = np.eye(3)[np.argsort(np.abs(k))[:2]]
    out = []
    basis_so_far = [k / np.linalg.norm(k)]
    for a in axes:
        v = a - sum(np.dot(a, b) * b for b in basis_so_far)
        v /= np.linalg.norm(v)
        basis_so_far.append(v)
        out.append(v)
    return out


def _build_torus(n_modes, resolution, d_space):
    vecs = _canonical_wavevectors(d_space, n_modes)
    entries = []  # (eigenvalue, wavevec, polarization, is_sin)
    for k in vecs:
        lam = 4.0 * np.pi**2 * sum(c * c for c in k)
        for e in _polarizations(k):
            entries.append((lam, k, e, 0))
            entries.append((lam, k, e, 1))
        if len(entries) >= n_modes:
            break
    entries = entries[:n_modes]

    kmax = max(max(abs(c) for c in k) for _, k, _, _ in entries)
    if resolution < 4 * kmax:
        raise ConfigurationError(
            f"resolution {resolution} cannot resolve wavenumber {kmax}: "
            f"need at least 4 nodes per wavelength ({4 * kmax})"
        )

    grid = periodic_grid(resolution, d_space)
    n = len(entries)
    N = grid.n_nodes
    modes = np.empty((n, d_space, N))
    grads = np.empty((n, d_space, d_space, N))
    eigenvalues = np.empty(n)
    wavevectors = np.empty((n, d_space))
    polarizations = np.empty((n, d_space))
    is_sin = np.empty(n, dtype=np.uint8)

    for i, (lam, k, e, sin_flag) in enumerate(entries):
        kv = 2.0 * np.pi * np.asarray(k, dtype=np.float64)
        phase = grid.coords @ kv
        amp = np.sqrt(2.0) * np.asarray(e)
        if sin_flag:
            trig, dtrig = np.sin(phase), np.cos(phase)
        else:
            trig, dtrig = np.cos(phase), -np.sin(phase)
        modes[i] = amp[:, None] * trig[None, :]
        grads[i] = kv[:, None, None] * amp[None, :, None] * dtrig[None, None, :]
        eigenvalues[i] = lam
        wavevectors[i] = kv
        polarizations[i] = amp
        is_sin[i] = sin_flag

    return BasisSet(
        provider="torus_fourier",
        d_space=d_space,
        resolution=resolution,
        grid=grid,
        modes=modes,
        mode_grads=grads,
        eigenvalues=eigenvalues,
        wavevectors=wavevectors,
        polarizations=polarizations,
        is_sin=is_sin,
    )


# -- Dirichlet-Stokes provider --------------------------------------------


def _laplacian_1d(m, h):
    main = np.full(m, 2.0 / h**2)
    off = np.full(m - 1, -1.0 / h**2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def _interior_laplacian(m, h, d_space):
    eye = sp.identity(m, format="csr")
    l1 = _laplacian_1d(m, h)
    terms = []
    for axis in range(d_space):
        factors = [l1 if a == axis else eye for a in range(d_space)]
        op = factors[0]
        for f in factors[1:]:
            op = sp.kron(op, f, format="csr")
        terms.append(op)
    return sum(terms)


def _divergence_matrix(m, h, d_space):
    """Centered-difference divergence, interior nodes, zero boundary."""
    main = sp.diags(
        [np.full(m - 1, -0.5 / h), np.full(m - 1, 0.5 / h)], [-1, 1], format="csr"
    )
    eye = sp.identity(m, format="csr")
    blocks = []
    for axis in range(d_space):
        factors = [main if a == axis else eye for a in range(d_space)]
        op = factors[0]
        for f in factors[1:]:
            op = sp.kron(op, f, format="csr")
        blocks.append(op)
    return sp.hstack(blocks, format="csr")


def stokes_reduced_operator(resolution, d_space):
    """Discrete Stokes operator: the vector Dirichlet Laplacian restricted
    to the null space of the discrete divergence.

    Returns (H, V) where H is the dense symmetric reduced operator and V
    the orthonormal null-space basis (columns) in interior-DOF coordinates.
    """
    m = resolution - 2
    h = 1.0 / (resolution - 1)
    div = _divergence_matrix(m, h, d_space)
    from scipy.linalg import null_space

    V = null_space(div.toarray())
    lap = _interior_laplacian(m, h, d_space)
    lap_block = sp.block_diag([lap] * d_space, format="csr")
    H = V.T @ (lap_block @ V)
    H = 0.5 * (H + H.T)
    return H, V


def _build_dirichlet_stokes(n_modes, resolution, d_space):
    m = resolution - 2
    if m < 3:
        raise ConfigurationError(f"resolution {resolution} too coarse for no-slip box")
    H, V = stokes_reduced_operator(resolution, d_space)
    if H.shape[0] < n_modes:
        raise ConfigurationError(
            f"only {H.shape[0]} divergence-free DOFs at resolution "
            f"{resolution}; cannot supply {n_modes} modes"
        )
    try:
        vals, vecs = spla.eigsh(H, k=n_modes, sigma=0.0, which="LM")
    except spla.ArpackNoConvergence as exc:
        raise EigenSolveError(
            "Stokes eigen-solve did not converge",
            residuals=getattr(exc, "eigenvalues", None),
        ) from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    residual = np.linalg.norm(H @ vecs - vecs * vals[None, :], axis=0)
    if np.any(residual > 1e-7 * (1.0 + np.abs(vals))):
        raise EigenSolveError("Stokes eigenpairs exceed residual tolerance",
                              residuals=residual)

    grid = box_grid(resolution, d_space)
    h = grid.spacing
    N = grid.n_nodes
    modes = np.zeros((n_modes, d_space, N))
    interior = tuple(slice(1, -1) for _ in range(d_space))
    scale = h ** (-d_space / 2.0)  # discrete-L2 normalization
    for k in range(n_modes):
        comps = (V @ vecs[:, k]).reshape(d_space, -1)
        for c in range(d_space):
            full = np.zeros(grid.shape)
            full[interior] = comps[c].reshape((m,) * d_space) * scale
            modes[k, c] = full.ravel()

    grads = np.empty((n_modes, d_space, d_space, N))
    for k in range(n_modes):
        for c in range(d_space):
            comp = modes[k, c].reshape(grid.shape)
            g = np.gradient(comp, h, edge_order=2)
            g = (g,) if d_space == 1 else g
            for a in range(d_space):
                grads[k, a, c] = g[a].ravel()

    return BasisSet(
        provider="dirichlet_stokes",
        d_space=d_space,
        resolution=resolution,
        grid=grid,
        modes=modes,
        mode_grads=grads,
        eigenvalues=vals,
        meta={"eig_residuals": residual},
    )


# -- public operations ----------------------------------------------------


def build_basis(provider, n_modes, resolution, d_space=2, cache_dir=None):
    """Construct (or load from cache) a divergence-free basis.

    The cache is keyed by (provider, n_modes, resolution, d_space) so the
    Dirichlet-Stokes eigen-solve runs once per configuration.
    """
    if provider not in PROVIDERS:
        raise ConfigurationError(
            f"unknown basis provider {provider!r}; available: {', '.join(PROVIDERS)}"
        )
    if n_modes < 1:
        raise ConfigurationError("n_modes must be >= 1")
    if d_space not in (2, 3):
        raise ConfigurationError("d_space must be 2 or 3")

    cache_path = None
    if cache_dir is not None:
        key = json.dumps(
            dict(provider=provider, n_modes=n_modes, resolution=resolution,
                 d_space=d_space),
            sort_keys=True,
        )
        digest = hashlib.sha256(key.encode()).hexdigest()[:16]
        cache_path = Path(cache_dir) / f"basis_{provider}_{digest}.npz"
        if cache_path.exists():
            return BasisSet.load(cache_path)

    if provider == "torus_fourier":
        basis = _build_torus(n_modes, resolution, d_space)
    else:
        basis = _build_dirichlet_stokes(n_modes, resolution, d_space)

    if cache_path is not None:
        basis.save(cache_path)
    return basis


def eval_velocity(phi, basis):
    return basis.eval_velocity(phi)


def weighted_inner(a, b, weight=None, *, basis=None):
    if basis is None:
        grid = a.grid if isinstance(a, GridField) else b.grid
        av = a.values if isinstance(a, GridField) else np.asarray(a, float)
        bv = b.values if isinstance(b, GridField) else np.asarray(b, float)
        if isinstance(a, GridField) and isinstance(b, GridField):
            if a.grid.shape != b.grid.shape:
                raise UsageError("fields live on different grids")
        w = grid.weights
        if weight is not None:
            wv = np.asarray(getattr(weight, "values", weight), float)
            w = w * wv
        if av.ndim == 1:
            return float(np.einsum("x,x,x->", w, av, bv))
        return float(np.einsum("x,cx,cx->", w, av, bv))
    return basis.weighted_inner(a, b, weight)


def grad_sq_norm(phi, basis):
    return basis.grad_sq_norm(phi)
