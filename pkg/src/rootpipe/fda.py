"""Functional principal component analysis of per-plant metric curves.

Curves are represented in a finite basis ``B`` (``m`` grid points by ``p``
basis functions) with inner-product matrix ``W`` on the normalised domain
``[0, 1]``. Two bases share the same decomposition:

* ``monomial``: ``1, u, ..., u**degree`` fitted by least squares, with
  ``W[j, k] = 1 / (j + k + 1)``;
* ``grid``: the identity on the resampled grid, with trapezoid weights.

Component functions are orthonormal under the L² inner product on ``[0, 1]``
and scores are L² projections of the centred curves onto them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, eigh, solve_triangular
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .metrics import MetricSeries


@dataclass(frozen=True)
class SmoothedCollection:
    grid_hours: np.ndarray
    grid: np.ndarray  # normalised to [0, 1]
    values: np.ndarray  # (n, m) curves resampled on the grid
    coefficients: np.ndarray  # (n, p) basis coefficients
    basis: np.ndarray  # (m, p)
    gram: np.ndarray  # (p, p)


def common_window(series: list[MetricSeries]) -> tuple[float, float]:
    if not series:
        raise ValueError("empty collection")
    start = max(float(s.times[0]) for s in series)
    stop = min(float(s.times[-1]) for s in series)
    if stop <= start:
        raise ValueError("series share no common observation window")
    return start, stop


def resample(series: list[MetricSeries], grid_size: int, window=None) -> tuple[np.ndarray, np.ndarray]:
    """Linear interpolation of every series onto ``grid_size`` uniform times over the common window."""
    start, stop = common_window(series) if window is None else window
    grid_hours = np.linspace(start, stop, grid_size)
    values = np.vstack([np.interp(grid_hours, s.times, s.values) for s in series])
    return grid_hours, values


def monomial_basis(grid: np.ndarray, degree: int) -> np.ndarray:
    return np.vander(np.asarray(grid, dtype=float), degree + 1, increasing=True)


def monomial_gram(degree: int) -> np.ndarray:
    j = np.arange(degree + 1)
    return 1.0 / (j[:, None] + j[None, :] + 1.0)


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    w = np.zeros(len(g))
    d = np.diff(g)
    w[:-1] += d / 2
    w[1:] += d / 2
    return w


def smooth(
    series: list[MetricSeries],
    degree: int = 5,
    grid_size: int = 100,
    basis: str = "monomial",
    window=None,
) -> SmoothedCollection:
    """Resample each series on a shared uniform grid and express it in the chosen basis."""
    if not series:
        raise ValueError("empty collection")
    if basis == "monomial":
        short = [s.plant_id for s in series if len(s) < degree + 1]
        if short:
            raise ValueError(f"series too short for degree {degree}: {', '.join(short)}")
    grid_hours, values = resample(series, grid_size, window)
    return smooth_values(grid_hours, values, degree, basis)


def smooth_values(grid_hours, values, degree: int = 5, basis: str = "monomial") -> SmoothedCollection:
    grid_hours = np.asarray(grid_hours, dtype=float)
    values = np.atleast_2d(np.asarray(values, dtype=float))
    span = grid_hours[-1] - grid_hours[0]
    grid = (grid_hours - grid_hours[0]) / span if span > 0 else np.zeros_like(grid_hours)
    if basis == "monomial":
        b = monomial_basis(grid, degree)
        coef = np.linalg.lstsq(b, values.T, rcond=None)[0].T
        gram = monomial_gram(degree)
    elif basis == "grid":
        b = np.eye(len(grid))
        coef = values.copy()
        gram = np.diag(trapezoid_weights(grid))
    else:
        raise ValueError(f"unknown basis {basis!r}")
    return SmoothedCollection(grid_hours, grid, values, coef, b, gram)


@dataclass(frozen=True)
class FunctionalDecomposition:
    grid: np.ndarray
    grid_hours: np.ndarray
    mean_fn: np.ndarray
    components: np.ndarray  # (r, m) component functions on the grid
    component_coefficients: np.ndarray  # (r, p)
    explained_variance: np.ndarray  # (r,) ratios of total variance
    eigenvalues: np.ndarray
    scores: np.ndarray  # (n, r)
    basis_degree: int | None
    mean_coefficients: np.ndarray
    basis: np.ndarray
    gram: np.ndarray

    @property
    def n_components(self) -> int:
        return len(self.explained_variance)

    def project(self, coefficients) -> np.ndarray:
        centred = np.atleast_2d(coefficients) - self.mean_coefficients
        return centred @ self.gram @ self.component_coefficients.T

    def reconstruct(self, scores) -> np.ndarray:
        scores = np.atleast_2d(scores)
        return self.mean_fn + scores @ self.components


def decompose(
    coefficients,
    gram,
    basis,
    grid,
    grid_hours=None,
    basis_degree: int | None = None,
    variance_target: float = 0.99,
    max_components: int = 10,
) -> FunctionalDecomposition:
    """Eigen-decomposition of the Gram-weighted coefficient covariance.

    With ``W = L Lᵀ`` the covariance ``Σ`` is diagonalised as ``Lᵀ Σ L``, which
    has the same spectrum as ``W^{1/2} Σ W^{1/2}``; eigenvectors map back
    through ``L⁻ᵀ`` so components are orthonormal under ``W``. A single or
    constant collection yields no components.
    """
    c = np.atleast_2d(np.asarray(coefficients, dtype=float))
    gram = np.asarray(gram, dtype=float)
    basis = np.asarray(basis, dtype=float)
    grid = np.asarray(grid, dtype=float)
    n, p = c.shape
    mean_c = c.mean(axis=0)
    mean_fn = basis @ mean_c
    centred = c - mean_c
    empty = FunctionalDecomposition(
        grid, grid if grid_hours is None else np.asarray(grid_hours, dtype=float), mean_fn,
        np.zeros((0, len(grid))), np.zeros((0, p)), np.zeros(0), np.zeros(0), np.zeros((n, 0)),
        basis_degree, mean_c, basis, gram,
    )
    if n < 2:
        return empty
    lower = cholesky(gram, lower=True)
    cov = centred.T @ centred / (n - 1)
    evals, evecs = eigh(lower.T @ cov @ lower)
    order = np.argsort(evals)[::-1]
    evals, evecs = np.clip(evals[order], 0.0, None), evecs[:, order]
    total = evals.sum()
    if total <= 1e-12 * max(1.0, float(np.abs(c).max()) ** 2):
        return empty
    ratios = evals / total
    keep = 0
    cumulative = 0.0
    while keep < min(max_components, p) and evals[keep] > 1e-12 * evals[0]:
        cumulative += ratios[keep]
        keep += 1
        if cumulative >= variance_target:
            break
    comp_coef = solve_triangular(lower, evecs[:, :keep], trans="T", lower=True).T
    comps = comp_coef @ basis.T
    # sign convention: the largest-magnitude grid value of each component is positive
    for k in range(keep):
        if comps[k, int(np.argmax(np.abs(comps[k])))] < 0:
            comps[k] *= -1
            comp_coef[k] *= -1
    scores = centred @ gram @ comp_coef.T
    return FunctionalDecomposition(
        grid, empty.grid_hours, mean_fn, comps, comp_coef, ratios[:keep], evals[:keep], scores,
        basis_degree, mean_c, basis, gram,
    )


def quantile_reconstructions(dec: FunctionalDecomposition, component: int, quantiles) -> np.ndarray:
    """Mean function plus the q-th score quantile times the chosen component, one row per quantile."""
    quantiles = np.asarray(quantiles, dtype=float)
    if dec.n_components == 0 and component == 0:
        return np.tile(dec.mean_fn, (len(quantiles), 1))
    if not 0 <= component < dec.n_components:
        raise IndexError(f"component {component} out of range for {dec.n_components} components")
    q = np.quantile(dec.scores[:, component], quantiles)
    return dec.mean_fn[None, :] + q[:, None] * dec.components[component][None, :]


class FunctionalPCA(TransformerMixin, BaseEstimator):
    """Functional PCA over curves sampled on a shared grid.

    Parameters
    ----------
    basis : {"monomial", "grid"}
    degree : int
        Monomial degree; ignored by the grid basis.
    grid_size : int
        Number of uniform points curves are resampled to.
    variance_target : float
        Components are retained until their cumulative explained variance
        reaches this fraction, up to ``max_components``.
    max_components : int

    Notes
    -----
    ``fit`` accepts either a list of :class:`MetricSeries` (resampled over
    their common window) or an ``(n, m)`` array already on a uniform grid,
    with ``times`` giving the grid in hours.
    """

    def __init__(self, basis="monomial", degree=5, grid_size=100, variance_target=0.99, max_components=10):
        self.basis = basis
        self.degree = degree
        self.grid_size = grid_size
        self.variance_target = variance_target
        self.max_components = max_components

    def _smooth(self, X, times=None, window=None) -> SmoothedCollection:
        if len(X) and isinstance(X[0], MetricSeries):
            return smooth(list(X), self.degree, self.grid_size, self.basis, window)
        values = np.atleast_2d(np.asarray(X, dtype=float))
        if times is None:
            times = np.linspace(0.0, 1.0, values.shape[1])
        return smooth_values(times, values, self.degree, self.basis)

    def fit(self, X, y=None, times=None):
        sm = self._smooth(X, times)
        self.decomposition_ = decompose(
            sm.coefficients, sm.gram, sm.basis, sm.grid, sm.grid_hours,
            self.degree if self.basis == "monomial" else None,
            self.variance_target, self.max_components,
        )
        self.window_ = (float(sm.grid_hours[0]), float(sm.grid_hours[-1]))
        self.grid_hours_ = sm.grid_hours
        self.mean_ = self.decomposition_.mean_fn
        self.components_ = self.decomposition_.components
        self.explained_variance_ratio_ = self.decomposition_.explained_variance
        self.n_components_ = self.decomposition_.n_components
        self.scores_ = self.decomposition_.scores
        return self

    def transform(self, X, times=None):
        check_is_fitted(self, "decomposition_")
        sm = self._smooth(X, times if times is not None else self.grid_hours_, self.window_)
        return self.decomposition_.project(sm.coefficients)

    def fit_transform(self, X, y=None, times=None):
        return self.fit(X, times=times).scores_

    def inverse_transform(self, scores):
        check_is_fitted(self, "decomposition_")
        return self.decomposition_.reconstruct(scores)
