"""Spectra of the normalized Laplacian, the Laplacian and the expected averaging matrix."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateGap, InvariantBreach, NotConverged
from .graphgen import KIND_REGULAR, ClusteredGraph

DEFAULT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class GraphSpectrum:
    n: int
    m: int
    m12: int
    lambdas: np.ndarray        # normalized Laplacian, ascending
    vectors: np.ndarray        # columns: normalized Laplacian eigenvectors
    lap_lambdas: np.ndarray    # Laplacian L = D - A, ascending
    lap_vectors: np.ndarray
    wbar_lambdas: np.ndarray   # 1 - lap/(2m), descending
    f: np.ndarray
    f_par: np.ndarray
    f_perp: np.ndarray
    par_block: int             # size of the second-eigenvalue block of Wbar
    eig_tolerance: float
    lambda3_complement: float  # smallest normalized-Laplacian eigenvalue off span{1, chi}

    @property
    def lambda2(self) -> float:
        return float(self.lambdas[1])

    @property
    def lambda3(self) -> float:
        return float(self.lambdas[2])

    @property
    def wbar_gap(self) -> float:
        """lambda-bar_2 - lambda-bar_3, taken from the Laplacian spectrum to avoid cancellation."""
        return float(self.lap_lambdas[2] - self.lap_lambdas[1]) / (2 * self.m)

    @property
    def f_perp_norm_sq(self) -> float:
        return float(self.f_perp @ self.f_perp)

    def to_dict(self) -> dict:
        return {
            "lambdas": self.lambdas.tolist(),
            "wbar_lambdas": self.wbar_lambdas.tolist(),
            "f_perp_norm_sq": self.f_perp_norm_sq,
            "m12": self.m12,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))


def _eigh(mat: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    try:
        w, q = np.linalg.eigh(mat)
    except np.linalg.LinAlgError as exc:
        raise NotConverged(str(exc)) from exc
    n = mat.shape[0]
    resid = np.linalg.norm(mat @ q - q * w)
    scale = max(1.0, float(np.abs(w).max(initial=0.0)))
    if not np.isfinite(resid) or resid > max(tol, 1e-12) * 1e4 * n * scale:
        raise NotConverged(f"eigen-residual {resid:.3e} too large")
    return w, q


def normalized_laplacian(g: ClusteredGraph) -> np.ndarray:
    a = g.adjacency()
    deg = a.sum(axis=1)
    if np.any(deg == 0):
        raise DegenerateGap("graph has isolated nodes; D is not invertible")
    s = 1.0 / np.sqrt(deg)
    return np.eye(g.n) - s[:, None] * a * s[None, :]


def complement_lambda3(lambdas: np.ndarray, g: ClusteredGraph) -> float:
    """Smallest eigenvalue once the 1 and chi directions are removed.

    On a clustered-regular graph both directions are eigenvectors (eigenvalues
    0 and 2b/d), so the restriction to their complement has the remaining
    eigenvalues. For other graphs this falls back to the third eigenvalue.
    """
    if g.kind != KIND_REGULAR:
        return float(lambdas[2])
    rest = list(np.asarray(lambdas, dtype=float))
    rest.pop(int(np.argmin(np.abs(np.asarray(rest)))))
    target = 2.0 * g.b / g.d
    rest.pop(int(np.argmin(np.abs(np.asarray(rest) - target))))
    return float(min(rest))


def compute_spectrum(g: ClusteredGraph, tol: float = DEFAULT_TOL) -> GraphSpectrum:
    nl = normalized_laplacian(g)
    lam, vec = _eigh(nl, tol)
    lap = g.laplacian()
    lam_l, vec_l = _eigh(lap, tol)
    m = g.m
    wbar = 1.0 - lam_l / (2.0 * m)

    n = g.n
    f = g.chi.astype(float) / np.sqrt(n)
    block_tol = tol * max(1.0, float(lam_l[-1]))
    idx = [i for i in range(1, n) if abs(lam_l[i] - lam_l[1]) <= block_tol]
    basis = vec_l[:, idx]
    f_par = basis @ (basis.T @ f)
    f_perp = f - f_par - (f.sum() / n) * np.ones(n)
    return GraphSpectrum(
        n=n,
        m=m,
        m12=g.cut_size(),
        lambdas=lam,
        vectors=vec,
        lap_lambdas=lam_l,
        lap_vectors=vec_l,
        wbar_lambdas=wbar,
        f=f,
        f_par=f_par,
        f_perp=f_perp,
        par_block=len(idx),
        eig_tolerance=tol,
        lambda3_complement=complement_lambda3(lam, g),
    )


def _require_gap(spec: GraphSpectrum) -> float:
    gap = spec.wbar_gap
    if gap <= spec.eig_tolerance:
        raise DegenerateGap(f"lambda-bar_2 - lambda-bar_3 = {gap:.3e} is not positive")
    return gap


def f_perp_bound_check(g: ClusteredGraph, spec: GraphSpectrum) -> tuple[float, float, bool]:
    gap = _require_gap(spec)
    lhs = spec.f_perp_norm_sq
    rhs = (2.0 / gap) * spec.m12 / (spec.n * spec.m)
    return lhs, rhs, bool(lhs <= rhs + spec.eig_tolerance)


def bad_node_set(spec: GraphSpectrum, eps: float) -> tuple[set[int], float]:
    """Nodes with |f_perp[u]| >= eps/sqrt(n), plus the counting bound they must respect."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    gap = _require_gap(spec)
    bad = set(np.flatnonzero(np.abs(spec.f_perp) >= eps / np.sqrt(spec.n)).tolist())
    bound = 2.0 * spec.m12 / (eps * eps * gap * spec.m)
    if len(bad) > bound + 1e-9:
        raise InvariantBreach(f"|B| = {len(bad)} exceeds bound {bound:.4g}")
    return bad, bound


@dataclass
class RelationsReport:
    transition_residual: float
    transition_ok: bool
    wbar_residual: float
    wbar_ok: bool
    degree_sandwich_slack: float
    degree_sandwich_ok: bool
    gamma: float
    gap_lower: float
    gap_upper: float
    gap: float
    gap_sandwich_ok: bool
    gap_precondition: bool     # lambda3 >= 3 lambda2, needed by the sandwich

    @property
    def ok(self) -> bool:
        return self.transition_ok and self.wbar_ok and self.degree_sandwich_ok and (
            self.gap_sandwich_ok or not self.gap_precondition
        )


def eigenvalue_relations_check(g: ClusteredGraph, spec: GraphSpectrum, tol: float = 1e-9) -> RelationsReport:
    a = g.adjacency()
    deg = a.sum(axis=1)
    p = a / deg[:, None]
    lam_p = np.sort(np.linalg.eigvals(p).real)[::-1]
    tr_res = float(np.max(np.abs(spec.lambdas - (1.0 - lam_p))))

    wbar_res = float(np.max(np.abs(spec.lap_lambdas - 2 * spec.m * (1.0 - spec.wbar_lambdas))))

    dmin, dmax = float(deg.min()), float(deg.max())
    scale = tol * max(1.0, dmax)
    lo = spec.lap_lambdas - dmin * spec.lambdas
    hi = dmax * spec.lambdas - spec.lap_lambdas
    slack = float(min(lo.min(), hi.min()))

    dbar = float(deg.mean())
    gamma = float(np.max(np.abs(deg - dbar)) / dbar)
    l2, l3 = spec.lambda2, spec.lambda3
    gap = spec.wbar_gap
    lower = dbar / (2 * spec.m) * (1 - 2 * gamma) * (l3 - l2)
    upper = dbar / (2 * spec.m) * (1 + 2 * gamma) * (l3 - l2)
    gap_tol = tol / spec.m
    return RelationsReport(
        transition_residual=tr_res,
        transition_ok=tr_res <= 1e3 * tol,
        wbar_residual=wbar_res,
        wbar_ok=wbar_res <= scale,
        degree_sandwich_slack=slack,
        degree_sandwich_ok=slack >= -scale,
        gamma=gamma,
        gap_lower=lower,
        gap_upper=upper,
        gap=gap,
        gap_sandwich_ok=bool(lower - gap_tol <= gap <= upper + gap_tol),
        gap_precondition=bool(l3 >= 3 * l2),
    )
