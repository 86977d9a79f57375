"""Least-squares removal of zero-Doppler clutter from the surveillance beam."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


@dataclass(frozen=True)
class ClutterConfig:
    num_delay_bins: int = 8
    # diagonal loading relative to trace(B^H B) / num_delay_bins
    regularization_epsilon: float = 1e-6

    def __post_init__(self) -> None:
        if self.num_delay_bins < 1:
            raise ValueError("num_delay_bins must be >= 1")
        if self.regularization_epsilon < 0:
            raise ValueError("regularization_epsilon must be >= 0")


def delay_basis(reference: np.ndarray, num_delay_bins: int) -> np.ndarray:
    """``(N, K)`` matrix whose column ``k`` is the reference delayed by ``k``."""
    n = len(reference)
    basis = np.zeros((n, num_delay_bins), dtype=np.complex128)
    for k in range(num_delay_bins):
        basis[k:, k] = reference[: n - k]
    return basis


def cancel_clutter(surveillance: np.ndarray, reference: np.ndarray,
                   cfg: ClutterConfig = ClutterConfig()) -> np.ndarray:
    """Project the surveillance signal off the span of delayed references."""
    surveillance = np.asarray(surveillance)
    reference = np.asarray(reference)
    if surveillance.shape != reference.shape or surveillance.ndim != 1:
        raise ValueError("surveillance and reference must be 1-D and equal length")
    if cfg.num_delay_bins >= len(reference):
        raise ValueError("num_delay_bins must be smaller than the signal length")
    basis = delay_basis(reference, cfg.num_delay_bins)
    gram = basis.conj().T @ basis
    rhs = basis.conj().T @ surveillance
    loading = cfg.regularization_epsilon * np.real(np.trace(gram)) / cfg.num_delay_bins
    gram[np.diag_indices_from(gram)] += loading
    try:
        coef = scipy.linalg.cho_solve(scipy.linalg.cho_factor(gram), rhs)
    except np.linalg.LinAlgError:
        # rank-deficient basis with no loading (e.g. an all-zero reference)
        coef = np.linalg.lstsq(gram, rhs, rcond=None)[0]
    return surveillance - basis @ coef
