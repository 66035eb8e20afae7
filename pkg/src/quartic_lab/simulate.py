"""Exact Gaussian path sampling via dense Cholesky factorization.

Paths are drawn jointly exact: values at grid times t_1 .. t_N come from
L @ z with L the Cholesky factor of the covariance matrix and z a vector
of per-replicate stream normals; the deterministic zero at t_0 is then
reattached.  There is no approximation beyond float64 linear algebra.

Coupled sampling draws an independent standard Brownian motion for each
replicate from a disjoint stream role, for use as the driving noise of
the corrected change-of-variable formula.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from . import rng
from .errors import DomainError, NotPositiveDefinite
from .kernels import CovKernel, Grid, build_cov_matrix

# Pivots below JITTER_REL * max(diag) trigger one diagonal jitter retry.
JITTER_REL = 1e-12

# Counts calls that actually run the factorization; lets tests assert the
# "factor once, sample many" contract.
FACTORIZATION_COUNT = 0

_BIN_MAGIC = b"QLABENS1"
_BIN_VERSION = 1


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor with provenance.

    matrix_l:    L with L @ L.T equal to the source matrix.
    fingerprint: blake2b hex digest of the source matrix bytes.
    jittered:    True when the single diagonal jitter retry was used.
    grid, kernel_id: optional provenance carried to sampled ensembles.
    """

    matrix_l: np.ndarray
    fingerprint: str
    jittered: bool = False
    grid: Grid | None = None
    kernel_id: str = ""

    @property
    def dim(self):
        return self.matrix_l.shape[0]


@dataclass(frozen=True)
class PathEnsemble:
    """M sampled paths over a grid, values[m, j] = X_m(t_j).

    values[:, 0] is exactly 0 for centered kernels.  replicate_keys holds
    the derived 128-bit stream key of each row, for audit.
    """

    grid: Grid
    values: np.ndarray
    kernel_id: str
    seed: int
    replicate_keys: tuple[int, ...]

    @property
    def m(self):
        return self.values.shape[0]


def _fingerprint(matrix):
    h = hashlib.blake2b(digest_size=16)
    h.update(np.ascontiguousarray(matrix, dtype=np.float64).tobytes())
    return h.hexdigest()


def factorize(matrix, grid=None, kernel_id=""):
    """Cholesky-factor a PSD matrix with a single jitter retry.

    A pivot below 1e-12 * max(diag) (LAPACK failure included) triggers one
    retry with that same jitter added to the whole diagonal; a second
    failure raises NotPositiveDefinite naming the pivot index.  An exactly
    zero matrix factors to zero.
    """
    global FACTORIZATION_COUNT
    matrix = np.ascontiguousarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise DomainError("factorize expects a square matrix")
    FACTORIZATION_COUNT += 1
    fingerprint = _fingerprint(matrix)

    max_diag = float(np.max(np.diag(matrix))) if matrix.size else 0.0
    if max_diag < 0:
        raise NotPositiveDefinite("negative diagonal entry", pivot_index=int(np.argmin(np.diag(matrix))))
    if max_diag == 0.0:
        if np.any(matrix != 0.0):
            raise NotPositiveDefinite("zero diagonal with nonzero off-diagonal entries")
        ell = np.zeros_like(matrix)
        return CholeskyFactor(ell, fingerprint, False, grid, kernel_id)

    threshold = JITTER_REL * max_diag

    def attempt(mat):
        try:
            ell = scipy.linalg.cholesky(mat, lower=True, check_finite=False)
        except scipy.linalg.LinAlgError as exc:
            # LAPACK reports the 1-based order of the failing leading minor.
            info = getattr(exc, "args", ("",))[0]
            pivot = None
            for token in str(info).split():
                if token.rstrip("-thsnrd").isdigit():
                    pivot = int(token.rstrip("-thsnrd")) - 1
                    break
            return None, pivot
        pivots = np.diag(ell) ** 2
        bad = np.nonzero(pivots < threshold)[0]
        if bad.size:
            return None, int(bad[0])
        return ell, None

    ell, pivot = attempt(matrix)
    if ell is not None:
        return CholeskyFactor(ell, fingerprint, False, grid, kernel_id)

    jittered = matrix + threshold * np.eye(matrix.shape[0])
    ell, pivot2 = attempt(jittered)
    if ell is not None:
        return CholeskyFactor(ell, fingerprint, True, grid, kernel_id)
    index = pivot2 if pivot2 is not None else pivot
    raise NotPositiveDefinite(
        f"matrix is not positive definite near pivot {index} even after jitter",
        pivot_index=index,
    )


_FACTOR_CACHE: dict[tuple[str, int, float], CholeskyFactor] = {}


def cached_factor(kernel, grid):
    """Factor for (kernel, grid), computed once per process.

    Large experiments share the 4096-point factors through this cache, so
    a pipeline factors each kernel exactly once no matter how many
    ensembles it draws.
    """
    key = (kernel.canonical_id(), grid.n, grid.horizon)
    factor = _FACTOR_CACHE.get(key)
    if factor is None:
        cov = build_cov_matrix(kernel, grid)
        factor = factorize(cov, grid=grid, kernel_id=kernel.canonical_id())
        _FACTOR_CACHE[key] = factor
    return factor


def clear_factor_cache():
    _FACTOR_CACHE.clear()


def _draw_normal_matrix(grid, m, seed, role):
    """(N, M) matrix whose column m comes from the replicate-m stream."""
    nsteps = grid.nsteps
    z = np.empty((nsteps, m), dtype=np.float64)
    keys = []
    for rep in range(m):
        key = rng.derive_key(seed, rep, role)
        keys.append(key)
        z[:, rep] = rng.normals(key, nsteps)
    return z, tuple(keys)


def sample_paths(factor, m, seed, grid=None, kernel_id=None):
    """Draw M exact paths from a factored covariance.

    The per-replicate normal columns are assembled first and multiplied by
    L in one BLAS call, so results do not depend on any worker pool.
    """
    grid = grid if grid is not None else factor.grid
    if grid is None:
        raise DomainError("sample_paths needs a grid (on the factor or passed in)")
    if factor.dim != grid.nsteps:
        raise DomainError(
            f"factor of dim {factor.dim} does not match grid with {grid.nsteps} steps"
        )
    if m < 1:
        raise DomainError("need at least one replicate")
    kernel_id = kernel_id if kernel_id is not None else factor.kernel_id
    z, keys = _draw_normal_matrix(grid, m, seed, rng.ROLE_PATH)
    body = factor.matrix_l @ z
    values = np.empty((m, grid.nsteps + 1), dtype=np.float64)
    values[:, 0] = 0.0
    values[:, 1:] = body.T
    return PathEnsemble(grid, values, kernel_id, int(seed), keys)


def sample_brownian(grid, m, seed):
    """M standard Brownian motion paths from the ROLE_BM streams."""
    z, keys = _draw_normal_matrix(grid, m, seed, rng.ROLE_BM)
    steps = z.T * math.sqrt(grid.dt)
    values = np.empty((m, grid.nsteps + 1), dtype=np.float64)
    values[:, 0] = 0.0
    np.cumsum(steps, axis=1, out=values[:, 1:])
    return PathEnsemble(grid, values, "bm", int(seed), keys)


def sample_coupled(factor, grid, m, seed, kernel_id=None):
    """(paths, brownian) with disjoint stream roles per replicate.

    The Brownian ensemble is independent of the path ensemble yet fully
    reproducible from the same master seed.
    """
    paths = sample_paths(factor, m, seed, grid=grid, kernel_id=kernel_id)
    brownian = sample_brownian(grid, m, seed)
    return paths, brownian


def add_deterministic_drift(ensemble, drift):
    """New ensemble with drift(t) added to every path.

    drift maps an array of grid times to an array of the same shape.
    """
    shift = np.asarray(drift(ensemble.grid.times()), dtype=np.float64)
    if shift.shape != (ensemble.grid.nsteps + 1,):
        raise DomainError("drift must return one value per grid time")
    values = ensemble.values + shift[None, :]
    kernel_id = ensemble.kernel_id + "|drift"
    return replace(ensemble, values=values, kernel_id=kernel_id)


def save_ensemble(ensemble, path):
    """Write the flat binary layout: fixed header, then row-major float64."""
    kernel_bytes = ensemble.kernel_id.encode("utf-8")
    header = _BIN_MAGIC + struct.pack(
        "<IQdQQI",
        _BIN_VERSION,
        ensemble.grid.n,
        ensemble.grid.horizon,
        ensemble.m,
        ensemble.seed,
        len(kernel_bytes),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(kernel_bytes)
        fh.write(np.ascontiguousarray(ensemble.values).tobytes())


def load_ensemble(path):
    """Read an ensemble written by save_ensemble; rederives stream keys."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _BIN_MAGIC:
            raise DomainError(f"not an ensemble file (magic {magic!r})")
        head = fh.read(struct.calcsize("<IQdQQI"))
        version, n, horizon, m, seed, kernel_len = struct.unpack("<IQdQQI", head)
        if version != _BIN_VERSION:
            raise DomainError(f"unsupported ensemble format version {version}")
        kernel_id = fh.read(kernel_len).decode("utf-8")
        grid = Grid(int(n), float(horizon))
        body = np.frombuffer(fh.read(), dtype=np.float64)
    values = body.reshape(int(m), grid.nsteps + 1).copy()
    keys = tuple(rng.derive_key(int(seed), rep, rng.ROLE_PATH) for rep in range(int(m)))
    return PathEnsemble(grid, values, kernel_id, int(seed), keys)


def write_ensemble_csv(ensemble, path):
    """Debug CSV with columns replicate, j, t, value (17 significant digits)."""
    times = ensemble.grid.times()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("replicate,j,t,value\n")
        for rep in range(ensemble.m):
            row = ensemble.values[rep]
            for j in range(times.size):
                fh.write(f"{rep},{j},{times[j]:.17g},{row[j]:.17g}\n")
