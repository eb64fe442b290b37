"""Partial density-matrix reconstruction and preparation fidelity.

Diagonal elements come from the non-interfering (perpendicular) run: the
same-bin coincidence count of bin ``k`` scales with ``|c_k|^4``, so
``sigma_kk ~ sqrt(N_k)``.  Off-diagonal magnitudes follow from the side-peak
visibility, ``|sigma_jk| = sqrt(V_jk / 2) sqrt(sigma_jj sigma_kk)``, where 2
is the largest possible side-peak value.  Signal and LO are assumed to differ
only in phase, so the off-diagonal phase is taken from the prepared state.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .correlator import RCPMatrix, WindowGeometry, rcp_matrix
from .events import EventStream
from .qudit_state import TimeBinQudit

MAX_VISIBILITY = 2.0
TARGET_PHASE_ASSUMPTION = "off-diagonal phases taken from the prepared target state"


@dataclass
class DensityMatrixEstimate:
    d: int
    matrix: np.ndarray
    diagonal_counts: Optional[np.ndarray] = None
    pair_visibilities: dict = field(default_factory=dict)
    visibility_sigma: dict = field(default_factory=dict)
    target_phases: Optional[np.ndarray] = None
    n_correlations: int = 0
    projected: bool = False
    assumptions: list = field(default_factory=list)

    @classmethod
    def from_matrix(cls, matrix, n_correlations=0):
        m = np.asarray(matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("density matrix must be square")
        return cls(m.shape[0], m, n_correlations=n_correlations)

    @property
    def is_hermitian(self) -> bool:
        return bool(np.allclose(self.matrix, self.matrix.conj().T, atol=1e-12, rtol=0))

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T)).min())

    @property
    def is_psd(self) -> bool:
        return self.min_eigenvalue >= -1e-12


@dataclass(frozen=True)
class FidelityResult:
    fidelity: float
    std_error: float
    n_correlations: int
    overlap: float = math.nan


def _pair_key(j, k):
    return (j, k) if j < k else (k, j)


def reconstruct_density_matrix(diagonal_counts, pair_visibilities: Mapping, target_phases,
                               visibility_sigma: Optional[Mapping] = None, n_correlations=0,
                               project_psd=False) -> DensityMatrixEstimate:
    """Linear reconstruction from same-bin counts and side-peak visibilities.

    ``pair_visibilities`` maps bin pairs ``(j, k)`` to the largest side-peak
    RCP in ``[0, 2]``; pairs that are absent get a zero off-diagonal element.
    ``sigma_jk`` carries the phase ``exp(i(phi_j - phi_k))`` of the target,
    matching ``|psi><psi|``.
    """
    counts = np.asarray(diagonal_counts, dtype=float).ravel()
    d = counts.size
    phases = np.asarray(target_phases, dtype=float).ravel()
    if phases.size != d:
        raise ValueError(f"{phases.size} target phases for {d} diagonal counts")
    if np.any(counts < 0) or not np.all(np.isfinite(counts)):
        raise ValueError("diagonal counts must be finite and >= 0")
    if counts.sum() == 0:
        raise ValueError("all diagonal counts are zero")
    roots = np.sqrt(counts)
    diag = roots / roots.sum()

    rho = np.diag(diag).astype(complex)
    vis = {}
    for (j, k), v in pair_visibilities.items():
        j, k = int(j), int(k)
        if j == k or not (0 <= j < d and 0 <= k < d):
            raise ValueError(f"invalid bin pair {(j, k)} for d={d}")
        v = float(v)
        if not math.isfinite(v) or v < 0:
            raise ValueError(f"visibility for {(j, k)} must be finite and >= 0, got {v}")
        if v > MAX_VISIBILITY:
            raise ValueError(f"visibility {v} for {(j, k)} exceeds the maximum of {MAX_VISIBILITY}")
        vis[_pair_key(j, k)] = v
    for (j, k), v in vis.items():
        mag = math.sqrt(v / MAX_VISIBILITY) * math.sqrt(diag[j] * diag[k])
        rho[j, k] = mag * np.exp(1j * (phases[j] - phases[k]))
        rho[k, j] = np.conj(rho[j, k])

    est = DensityMatrixEstimate(
        d, rho, counts, vis,
        {_pair_key(*p): float(s) for p, s in (visibility_sigma or {}).items()},
        phases, int(n_correlations), assumptions=[TARGET_PHASE_ASSUMPTION],
    )
    if project_psd:
        est.matrix = project_to_psd(rho)
        est.projected = True
        est.assumptions.append("projected onto the nearest positive semidefinite matrix")
    return est


def project_to_psd(matrix) -> np.ndarray:
    """Clip negative eigenvalues and renormalize the trace."""
    h = 0.5 * (matrix + matrix.conj().T)
    w, v = np.linalg.eigh(h)
    w = np.clip(w, 0.0, None)
    out = (v * w) @ v.conj().T
    return out / np.real(np.trace(out))


def _overlap(psi, matrix):
    return float(np.real(np.conj(psi) @ matrix @ psi))


def _clamped_sqrt(x):
    if x < -1e-12 or x > 1 + 1e-12:
        warnings.warn(f"<psi|sigma|psi> = {x:.4f} outside [0, 1]; clamping", RuntimeWarning)
    return math.sqrt(min(max(x, 0.0), 1.0))


def fidelity(reference: TimeBinQudit, sigma: DensityMatrixEstimate) -> FidelityResult:
    """``F = sqrt(<psi|sigma|psi>)`` with a delta-method standard error.

    The error propagates Poisson ``sqrt(N)`` on the diagonal counts and the
    given visibility uncertainties through the reconstruction.  Estimates
    built from a bare matrix have no count information and get a NaN error.
    """
    psi = np.asarray(reference.amplitudes if isinstance(reference, TimeBinQudit) else reference,
                     dtype=complex)
    if psi.size != sigma.d:
        raise ValueError(f"dimension mismatch: reference d={psi.size}, sigma d={sigma.d}")
    overlap = _overlap(psi, sigma.matrix)
    f = _clamped_sqrt(overlap)
    if sigma.diagonal_counts is None:
        return FidelityResult(f, math.nan, sigma.n_correlations, overlap)

    keys = sorted(sigma.pair_visibilities)

    def value(counts, vis):
        est = reconstruct_density_matrix(
            counts, dict(zip(keys, vis)), sigma.target_phases, project_psd=sigma.projected
        )
        return math.sqrt(max(_overlap(psi, est.matrix), 0.0))

    counts = sigma.diagonal_counts.astype(float)
    vis = np.array([sigma.pair_visibilities[k] for k in keys])
    var = 0.0
    for i, n in enumerate(counts):
        h = max(1e-6 * n, 1e-3)
        up, dn = counts.copy(), counts.copy()
        up[i] += h
        dn[i] = max(n - h, 0.0)
        grad = (value(up, vis) - value(dn, vis)) / (up[i] - dn[i])
        var += grad**2 * n
    for i, k in enumerate(keys):
        s = sigma.visibility_sigma.get(k, 0.0)
        if s == 0.0:
            continue
        h = 1e-6
        up, dn = vis.copy(), vis.copy()
        up[i] = min(vis[i] + h, MAX_VISIBILITY)
        dn[i] = max(vis[i] - h, 0.0)
        grad = (value(counts, up) - value(counts, dn)) / (up[i] - dn[i])
        var += (grad * s) ** 2
    return FidelityResult(f, math.sqrt(var), sigma.n_correlations, overlap)


def visibilities_from_rcp(rcp: RCPMatrix, target_phases, combine="mean", min_cos=1e-6):
    """Turn the RCP matrix into side-peak visibilities per bin pair.

    For bins ``j < k`` the measured RCP follows ``1 - v cos(phi_k - phi_j)``;
    the maximum side-peak value reachable with that contrast is ``1 + v``.
    ``combine`` picks how the two satellite cells ``(j, k)`` and ``(k, j)``
    are merged: ``"mean"`` pools their counts, ``"max"`` keeps the cell with
    the larger implied visibility.  Returns ``(visibility, sigma, counts)``
    dictionaries.
    """
    phases = np.asarray(target_phases, dtype=float)
    vis, sig, counts = {}, {}, {}
    for j in range(rcp.d):
        for k in range(j + 1, rcp.d):
            c = math.cos(phases[k] - phases[j])
            if abs(c) < min_cos:
                raise ValueError(
                    f"target phase difference between bins {j} and {k} is pi/2 mod pi; "
                    "the side peak carries no visibility information"
                )
            if abs(c) < 0.5:
                warnings.warn(f"bins {j},{k}: |cos(dphi)| = {abs(c):.2f}, visibility poorly determined")
            if combine == "mean":
                cells = [[(j, k), (k, j)]]
            elif combine == "max":
                cells = [[(j, k)], [(k, j)]]
            else:
                raise ValueError(f"unknown combine rule {combine!r}")
            best = None
            for group in cells:
                r, s = rcp.pooled(group)
                if not math.isfinite(r):
                    continue
                contrast = float(np.clip((1.0 - r) / c, -1.0, 1.0))
                cand = (1.0 + contrast, s / abs(c), sum(int(rcp.counts_parallel[g]) for g in group))
                if best is None or cand[0] > best[0]:
                    best = cand
            if best is None:
                raise ValueError(f"no reference coincidences for bins {j},{k}")
            vis[(j, k)], sig[(j, k)], counts[(j, k)] = best
    return vis, sig, counts


@dataclass
class TomographyResult:
    density: DensityMatrixEstimate
    fidelity: FidelityResult
    rcp: RCPMatrix
    bootstrap_std: float = math.nan

    def report(self) -> dict:
        m = self.density.matrix
        return {
            "d": self.density.d,
            "sigma_re": np.real(m).tolist(),
            "sigma_im": np.imag(m).tolist(),
            "fidelity": self.fidelity.fidelity,
            "std_error": self.fidelity.std_error,
            "bootstrap_std": None if math.isnan(self.bootstrap_std) else self.bootstrap_std,
            "n_correlations": self.fidelity.n_correlations,
            "psd": self.density.is_psd,
            "min_eigenvalue": self.density.min_eigenvalue,
            "assumptions": list(self.density.assumptions),
        }


def _pipeline_once(events_parallel, events_perp, target, geometry, combine, project_psd, n_shifts):
    rcp = rcp_matrix(events_parallel, events_perp, geometry, n_shifts=n_shifts)
    diag_counts = np.diag(rcp.counts_perp)
    vis, sig, counts = visibilities_from_rcp(rcp, target.phases, combine)
    est = reconstruct_density_matrix(
        diag_counts, vis, target.phases, sig, n_correlations=sum(counts.values()),
        project_psd=project_psd,
    )
    return est, fidelity(target, est), rcp


def qudit_fidelity_pipeline(events_parallel: EventStream, events_perp: EventStream, target: TimeBinQudit,
                            geometry: Optional[WindowGeometry] = None, combine="mean", project_psd=False,
                            n_bootstrap=0, random_state=None, n_shifts=5) -> TomographyResult:
    """RCP matrix -> visibilities and diagonal counts -> density matrix -> fidelity.

    For ``d > 2`` every bin pair is treated like the qubit case.  With
    ``n_bootstrap > 0`` trigger windows are resampled to cross-check the
    delta-method error.
    """
    if len(events_parallel) == 0:
        raise ValueError("parallel-polarization record is empty")
    if len(events_perp) == 0:
        raise ValueError("perpendicular reference record is empty")
    if geometry is None:
        geometry = WindowGeometry(target.d, target.bin_duration)
    if geometry.d != target.d:
        raise ValueError(f"dimension mismatch: geometry d={geometry.d}, target d={target.d}")
    est, fid, rcp = _pipeline_once(events_parallel, events_perp, target, geometry, combine,
                                   project_psd, n_shifts)
    boot = math.nan
    if n_bootstrap:
        rng = np.random.default_rng(random_state)
        vals = []
        for _ in range(int(n_bootstrap)):
            ep = events_parallel.take_trials(rng.integers(0, events_parallel.n_trials, events_parallel.n_trials),
                                             geometry.period)
            eq = events_perp.take_trials(rng.integers(0, events_perp.n_trials, events_perp.n_trials),
                                         geometry.period)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                vals.append(_pipeline_once(ep, eq, target, geometry, combine, project_psd, n_shifts)[1].fidelity)
        boot = float(np.std(vals, ddof=1))
    return TomographyResult(est, fid, rcp, boot)
