"""Structured linear algebra: factorizations, whitening maps, Gaussian draws.

A :class:`GaussianSpec` describes the untruncated Gaussian either through its
precision matrix ``M`` (with linear term ``r``, so the mean is ``M^-1 r``) or
through its covariance ``S`` (with the mean given directly). Factorizing a
spec yields a whitening map ``W`` with ``W cov W^T = I``; samples map back to
the original frame as ``x = W^-1 y + mean``. Dense, banded, and Toeplitz
structure each get a factor class that exploits it:

* dense: LAPACK Cholesky, O(d^2) applies;
* banded: banded Cholesky, O(d k) applies (bidiagonal factor for tridiagonal
  input);
* Toeplitz covariance: circulant-embedding FFT draws in O(N log N), Levinson
  solves for precision applies; the dense factor is built lazily only if a
  whitening map is explicitly requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import (
    cho_solve,
    cholesky,
    cholesky_banded,
    get_lapack_funcs,
    matmul_toeplitz,
    solve_banded,
    solve_triangular,
    toeplitz,
)

from .errors import DimensionMismatch, NotPositiveDefinite

STRUCTURES = ("dense", "banded", "toeplitz")
FORMS = ("precision", "covariance")

_SYM_RTOL = 1e-12
_EIG_CLAMP = -1e-10


def _as_vector(x, dim, what="vector"):
    arr = np.asarray(x, dtype=float)
    if arr.shape != (dim,):
        raise DimensionMismatch(f"{what} has shape {arr.shape}, expected ({dim},)")
    return arr


def _check_symmetric(matrix):
    scale = max(np.max(np.abs(matrix)), 1.0)
    if np.max(np.abs(matrix - matrix.T)) > _SYM_RTOL * scale:
        raise ValueError("matrix is not symmetric")


def _potrf_upper(matrix):
    """Upper Cholesky with the failing pivot index surfaced."""
    potrf = get_lapack_funcs(("potrf",), (matrix,))[0]
    factor, info = potrf(matrix, lower=False, overwrite_a=False, clean=True)
    if info > 0:
        raise NotPositiveDefinite(info)
    if info < 0:
        raise ValueError(f"illegal potrf argument {-info}")
    return factor


class GaussianSpec:
    """Mean/precision (or covariance) of the untruncated Gaussian.

    Parameters
    ----------
    matrix : array
        The d x d symmetric positive-definite matrix, or just its first row
        for ``structure="toeplitz"``.
    form : {"precision", "covariance"}
        Whether ``matrix`` is the precision M or the covariance.
    linear_term : array, optional
        For precision form, the linear coefficient r of the log-density
        (mean is M^-1 r); for covariance form, the mean itself. Defaults to
        zeros.
    structure : {"dense", "banded", "toeplitz"}
    bandwidth : int, required for banded structure
        Entries beyond the bandwidth must be exactly zero.
    """

    def __init__(self, matrix, *, form="precision", linear_term=None,
                 structure="dense", bandwidth=None):
        if form not in FORMS:
            raise ValueError(f"unknown form {form!r}")
        if structure not in STRUCTURES:
            raise ValueError(f"unknown structure {structure!r}")
        self.form = form
        self.structure = structure
        self.bandwidth = None

        matrix = np.asarray(matrix, dtype=float)
        if structure == "toeplitz":
            if matrix.ndim == 2:
                _check_symmetric(matrix)
                first_row = matrix[0].copy()
                if np.max(np.abs(toeplitz(first_row) - matrix)) > 1e-12 * max(
                    np.max(np.abs(matrix)), 1.0
                ):
                    raise ValueError("matrix is not Toeplitz")
            elif matrix.ndim == 1:
                first_row = matrix.copy()
            else:
                raise ValueError("toeplitz structure expects a matrix or first row")
            if first_row.size < 1:
                raise ValueError("empty Toeplitz row")
            self.first_row = first_row
            self.dim = first_row.size
            self._matrix = None
        else:
            if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
                raise ValueError("matrix must be square")
            _check_symmetric(matrix)
            self.dim = matrix.shape[0]
            self._matrix = matrix.copy()
            self.first_row = None
            if structure == "banded":
                if bandwidth is None or bandwidth < 0:
                    raise ValueError("banded structure requires a bandwidth >= 0")
                self.bandwidth = int(bandwidth)
                mask = np.abs(
                    np.subtract.outer(np.arange(self.dim), np.arange(self.dim))
                ) > self.bandwidth
                if np.any(self._matrix[mask] != 0.0):
                    raise ValueError("entries beyond the stated bandwidth are nonzero")

        if linear_term is None:
            linear_term = np.zeros(self.dim)
        self.linear_term = _as_vector(linear_term, self.dim, "linear_term")

        # positive definiteness is a constructor invariant
        self._factor = factorize(self)

    @property
    def matrix(self):
        """The dense matrix (materialized on demand for Toeplitz specs)."""
        if self._matrix is None:
            self._matrix = toeplitz(self.first_row)
        return self._matrix

    @property
    def mean(self):
        return self._factor.mean

    @classmethod
    def standard(cls, dim):
        """Zero-mean unit-covariance Gaussian."""
        return cls(np.eye(dim), form="covariance")

    def __repr__(self):
        return (
            f"GaussianSpec(dim={self.dim}, form={self.form!r}, "
            f"structure={self.structure!r})"
        )


class CholeskyFactor:
    """Whitening map for a Gaussian spec.

    Concrete factors implement the raw matrix actions; the mean is carried
    along so :func:`whiten`/:func:`unwhiten` can map full points. Writing
    the precision as M = R^T R (equivalently the covariance as Z^T Z with
    Z = R^-T), the operations are:

    * ``whiten_apply(x)``    -> R x
    * ``unwhiten_apply(y)``  -> R^-1 y  (= Z^T y)
    * ``normal_transform(f)``-> R^-T f  (maps constraint normals to the
      whitened frame; accepts a matrix of column vectors)
    * ``draw(rng)``          -> zero-mean sample with the spec covariance
    * ``cov_apply(v)``       -> M^-1 v
    * ``prec_apply(v)``      -> M v
    """

    structure = "dense"

    def __init__(self, dim, mean):
        self.dim = dim
        self.mean = np.asarray(mean, dtype=float)

    def whiten_apply(self, x):
        raise NotImplementedError

    def unwhiten_apply(self, y):
        raise NotImplementedError

    def normal_transform(self, f):
        raise NotImplementedError

    def cov_apply(self, v):
        raise NotImplementedError

    def prec_apply(self, v):
        raise NotImplementedError

    def draw(self, rng):
        return self.unwhiten_apply(rng.standard_normal(self.dim))

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.dim:
            raise DimensionMismatch(
                f"operand has leading dimension {x.shape[0]}, expected {self.dim}"
            )
        return x


class DensePrecisionFactor(CholeskyFactor):
    """Dense M = R^T R with R upper triangular."""

    def __init__(self, matrix, linear_term):
        self.r_factor = _potrf_upper(matrix)
        self._prec = matrix
        mean = cho_solve((self.r_factor, False), linear_term)
        super().__init__(matrix.shape[0], mean)

    def whiten_apply(self, x):
        return self.r_factor @ self._check(x)

    def unwhiten_apply(self, y):
        return solve_triangular(self.r_factor, self._check(y), lower=False)

    def normal_transform(self, f):
        return solve_triangular(self.r_factor, self._check(f), lower=False, trans="T")

    def cov_apply(self, v):
        return cho_solve((self.r_factor, False), self._check(v))

    def prec_apply(self, v):
        return self._prec @ self._check(v)


class DenseCovarianceFactor(CholeskyFactor):
    """Dense covariance S = L L^T; the whitening map is L^-1."""

    def __init__(self, matrix, mean):
        upper = _potrf_upper(matrix)  # pivot reporting; L is its transpose
        self.l_factor = upper.T.copy()
        self._cov = matrix
        super().__init__(matrix.shape[0], mean)

    def whiten_apply(self, x):
        return solve_triangular(self.l_factor, self._check(x), lower=True)

    def unwhiten_apply(self, y):
        return self.l_factor @ self._check(y)

    def normal_transform(self, f):
        return self.l_factor.T @ self._check(f)

    def cov_apply(self, v):
        return self._cov @ self._check(v)

    def prec_apply(self, v):
        return cho_solve((self.l_factor, True), self._check(v))


def _band_upper(matrix, k):
    """Upper band storage ub[k + i - j, j] = a[i, j] (scipy convention)."""
    d = matrix.shape[0]
    ub = np.zeros((k + 1, d))
    for delta in range(k + 1):
        ub[k - delta, delta:] = np.diagonal(matrix, offset=delta)
    return ub


def _band_matvec_upper(ub, x):
    """R x for upper-triangular banded R."""
    k = ub.shape[0] - 1
    d = x.shape[0]
    y = np.zeros_like(x)
    for delta in range(k + 1):
        y[: d - delta] += ub[k - delta, delta:] * x[delta:]
    return y


def _band_matvec_lower(ub, x):
    """R^T x for upper-triangular banded R."""
    k = ub.shape[0] - 1
    d = x.shape[0]
    y = np.zeros_like(x)
    for delta in range(k + 1):
        y[delta:] += ub[k - delta, delta:] * x[: d - delta]
    return y


def _band_transpose(ub):
    """Lower band storage of R^T given upper band storage of R."""
    k = ub.shape[0] - 1
    d = ub.shape[1]
    lb = np.zeros_like(ub)
    for delta in range(k + 1):
        lb[delta, : d - delta] = ub[k - delta, delta:]
    return lb


def _band_sym_matvec(matrix_bands, x):
    """A x for symmetric banded A given in upper band storage."""
    k = matrix_bands.shape[0] - 1
    d = x.shape[0]
    y = matrix_bands[k] * x
    for delta in range(1, k + 1):
        diag = matrix_bands[k - delta, delta:]
        y[: d - delta] += diag * x[delta:]
        y[delta:] += diag * x[: d - delta]
    return y


class BandedFactor(CholeskyFactor):
    """Banded Cholesky; O(d k^2) factorization, O(d k) applies."""

    structure = "banded"

    def __init__(self, matrix, bandwidth, form, linear_term):
        self.bandwidth = bandwidth
        self.form = form
        bands = _band_upper(matrix, bandwidth)
        pbtrf = get_lapack_funcs(("pbtrf",), (bands,))[0]
        factor, info = pbtrf(bands, lower=False)
        if info > 0:
            raise NotPositiveDefinite(info)
        if info < 0:
            raise ValueError(f"illegal pbtrf argument {-info}")
        self._matrix_bands = bands
        # upper factor U with A = U^T U, in upper band storage
        self.u_bands = factor
        self._u_bands_t = _band_transpose(factor)
        if form == "precision":
            mean = self._solve_u(self._solve_ut(linear_term))
        else:
            mean = linear_term
        super().__init__(matrix.shape[0], mean)

    def _solve_u(self, x):
        return solve_banded((0, self.bandwidth), self.u_bands, x)

    def _solve_ut(self, x):
        return solve_banded((self.bandwidth, 0), self._u_bands_t, x)

    # For precision form M = U^T U the whitening map is W = U.
    # For covariance form S = U^T U it is W = U^-T (draws are U^T eps).
    def whiten_apply(self, x):
        x = self._check(x)
        if self.form == "precision":
            return _band_matvec_upper(self.u_bands, x)
        return self._solve_ut(x)

    def unwhiten_apply(self, y):
        y = self._check(y)
        if self.form == "precision":
            return self._solve_u(y)
        return _band_matvec_lower(self.u_bands, y)

    def normal_transform(self, f):
        f = self._check(f)
        if self.form == "precision":
            return self._solve_ut(f)
        return _band_matvec_upper(self.u_bands, f)

    def cov_apply(self, v):
        v = self._check(v)
        if self.form == "precision":
            return self._solve_u(self._solve_ut(v))
        return _band_sym_matvec(self._matrix_bands, v)

    def prec_apply(self, v):
        v = self._check(v)
        if self.form == "precision":
            return _band_sym_matvec(self._matrix_bands, v)
        return self._solve_u(self._solve_ut(v))


@dataclass(frozen=True)
class CirculantEmbedding:
    """Circulant extension of a symmetric Toeplitz matrix.

    ``eigenvalues`` is the (real) FFT of the embedded first row, length
    ``size = 2 N - 2``. Tiny negative eigenvalues are clamped to zero at
    construction; anything below the clamp threshold is an error.
    """

    size: int
    eigenvalues: np.ndarray

    @classmethod
    def from_first_row(cls, first_row):
        row = np.asarray(first_row, dtype=float)
        n = row.size
        if n < 2:
            raise ValueError("circulant embedding needs at least 2 points")
        embedded = np.concatenate([row, row[-2:0:-1]])
        eig = np.fft.fft(embedded).real
        worst = float(eig.min())
        if worst < _EIG_CLAMP * max(1.0, float(np.max(np.abs(eig)))):
            raise NotPositiveDefinite(
                int(np.argmin(eig)),
                f"circulant embedding has negative eigenvalue {worst:.3e}",
            )
        eig = np.maximum(eig, 0.0)
        return cls(size=2 * n - 2, eigenvalues=eig)

    @property
    def n_points(self):
        return self.size // 2 + 1


def circulant_draw(embedding, rng):
    """One N(0, Toeplitz) draw via the FFT of the embedded circulant.

    Computes the real symmetric square root of the circulant applied to a
    standard normal vector and returns its first N coordinates; O(N log N).
    """
    size = embedding.size
    half = embedding.eigenvalues[: size // 2 + 1]
    eps = rng.standard_normal(size)
    spectrum = np.fft.rfft(eps) * np.sqrt(half)
    full = np.fft.irfft(spectrum, n=size)
    return full[: embedding.n_points]


class ToeplitzFactor(CholeskyFactor):
    """Toeplitz covariance: FFT draws, Levinson solves.

    Whitening applies fall back to a lazily built dense factor; the fast
    paths (velocity draws, covariance/precision applies) never need it.
    """

    structure = "toeplitz"

    def __init__(self, first_row, mean):
        self.first_row = np.asarray(first_row, dtype=float)
        self.embedding = CirculantEmbedding.from_first_row(self.first_row)
        super().__init__(self.first_row.size, mean)

    @cached_property
    def _dense(self):
        return DenseCovarianceFactor(toeplitz(self.first_row), self.mean)

    def whiten_apply(self, x):
        return self._dense.whiten_apply(x)

    def unwhiten_apply(self, y):
        return self._dense.unwhiten_apply(y)

    def normal_transform(self, f):
        return self._dense.normal_transform(f)

    def cov_apply(self, v):
        return matmul_toeplitz(self.first_row, self._check(v))

    def prec_apply(self, v):
        # Levinson would avoid the dense factor but its per-call overhead
        # dominates at chain scale; the cached factor amortizes better
        return self._dense.prec_apply(v)

    def draw(self, rng):
        return circulant_draw(self.embedding, rng)


def factorize(spec):
    """Cholesky-style factor for a :class:`GaussianSpec`.

    Dense input costs O(d^3); banded input O(d k^2) with a bidiagonal factor
    for tridiagonal matrices; Toeplitz covariance input only builds the
    circulant embedding.
    """
    if getattr(spec, "_factor", None) is not None:
        return spec._factor
    if spec.structure == "banded":
        return BandedFactor(spec.matrix, spec.bandwidth, spec.form, spec.linear_term)
    if spec.structure == "toeplitz":
        if spec.form == "covariance":
            return ToeplitzFactor(spec.first_row, spec.linear_term)
        # Toeplitz precision has no FFT sampling shortcut; use the dense path
        return DensePrecisionFactor(spec.matrix, spec.linear_term)
    if spec.form == "precision":
        return DensePrecisionFactor(spec.matrix, spec.linear_term)
    return DenseCovarianceFactor(spec.matrix, spec.linear_term)


def whiten(factor, x):
    """Map a point of the original frame to the canonical (whitened) frame."""
    return factor.whiten_apply(np.asarray(x, dtype=float) - factor.mean)


def unwhiten(factor, y):
    """Inverse of :func:`whiten`: ``x = W^-1 y + mean``."""
    return factor.unwhiten_apply(y) + factor.mean


def sample_gaussian(spec, rng):
    """One draw from the Gaussian described by ``spec``."""
    factor = factorize(spec)
    return factor.mean + factor.draw(rng)
