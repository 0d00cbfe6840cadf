"""Omitted-variable-bias analysis at the population level.

With observed covariates X, unobserved covariates Z entering the response
with coefficients delta, least squares is biased by (X'X)^{-1} E[X'Z|X] delta.
For a single extra feature s (coefficient beta) and unobserved z
(coefficients gamma), a group g prefers the model WITHOUT s exactly when

    gamma' (lambda - 2 lambda_g) >= beta,

where lambda = Sigma_ss^{-1} Sigma_sz is the population correlation of s
with z and lambda_g its in-group counterpart. All moments refer to
variables centered at the population level (the observed covariates are
conditioned away by the caller).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import (
    DimensionMismatchError,
    EmptyGroupError,
    SignAssumptionError,
    SingularGramError,
)
from .minnorm import RANK_RTOL, _as_matrix, _as_vector

_LINK_TOL = 1e-8


@dataclass(frozen=True)
class OvbPopulation:
    """Population-level coefficients and second moments for the extra feature s.

    gamma: coefficients of the unobserved covariates z (length q);
    beta_s: coefficient of s; sigma_ss = E[s^2] > 0; sigma_sz = E[s z].
    mean_s / mean_z center raw draws before the loss formulas apply;
    observed_coeffs holds the coefficients of the observed covariates for
    simulation only (they play no role in the decision rule).
    """

    gamma: np.ndarray
    beta_s: float
    sigma_ss: float
    sigma_sz: np.ndarray
    mean_s: float = 0.0
    mean_z: np.ndarray | None = None
    observed_coeffs: np.ndarray | None = None

    def __post_init__(self):
        g = _as_vector(self.gamma, "gamma")
        sz = _as_vector(self.sigma_sz, "sigma_sz")
        if sz.shape[0] != g.shape[0]:
            raise DimensionMismatchError(
                f"sigma_sz has length {sz.shape[0]}, expected {g.shape[0]}"
            )
        if not (np.isfinite(self.sigma_ss) and self.sigma_ss > 0):
            raise ValueError(f"sigma_ss must be positive, got {self.sigma_ss}")
        mz = self.mean_z
        if mz is None:
            mz = np.zeros(g.shape[0])
        mz = _as_vector(mz, "mean_z")
        if mz.shape[0] != g.shape[0]:
            raise DimensionMismatchError("mean_z length must match gamma")
        for name, arr in (("gamma", g), ("sigma_sz", sz), ("mean_z", mz)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def lam(self) -> np.ndarray:
        """Population correlation coefficient lambda = sigma_sz / sigma_ss."""
        return self.sigma_sz / self.sigma_ss


@dataclass(frozen=True)
class GroupMoments:
    """In-group second moments of the population-centered (s, z).

    sigma_ss_g and sigma_sz_g define lambda_g; s2_g defaults to sigma_ss_g
    and zs_g defaults to lambda_g * s2_g (the link used throughout the
    decision rule). Supplying zs_g explicitly triggers a consistency check.
    """

    sigma_ss_g: float
    sigma_sz_g: np.ndarray
    s2_g: float | None = None
    zs_g: np.ndarray | None = None

    def __post_init__(self):
        sz = _as_vector(self.sigma_sz_g, "sigma_sz_g")
        if not (np.isfinite(self.sigma_ss_g) and self.sigma_ss_g > 0):
            raise ValueError(f"sigma_ss_g must be positive, got {self.sigma_ss_g}")
        s2 = self.sigma_ss_g if self.s2_g is None else float(self.s2_g)
        if s2 < 0:
            raise ValueError(f"s2_g must be nonnegative, got {s2}")
        lam_g = sz / self.sigma_ss_g
        if self.zs_g is None:
            zs = lam_g * s2
        else:
            zs = _as_vector(self.zs_g, "zs_g")
            if zs.shape[0] != sz.shape[0]:
                raise DimensionMismatchError("zs_g length must match sigma_sz_g")
            expected = lam_g * s2
            scale = max(1.0, float(np.max(np.abs(expected))))
            if np.max(np.abs(zs - expected)) > _LINK_TOL * scale:
                raise ValueError("zs_g is inconsistent with lambda_g * s2_g")
        sz = sz.copy()
        sz.setflags(write=False)
        zs = np.asarray(zs, dtype=float).copy()
        zs.setflags(write=False)
        object.__setattr__(self, "sigma_sz_g", sz)
        object.__setattr__(self, "s2_g", s2)
        object.__setattr__(self, "zs_g", zs)

    @property
    def lam_g(self) -> np.ndarray:
        return self.sigma_sz_g / self.sigma_ss_g


@dataclass(frozen=True)
class GroupLossEstimate:
    """Monte-Carlo in-group losses of the with-s and without-s predictors."""

    loss_with_s: float
    loss_without_s: float
    stderr_with_s: float
    stderr_without_s: float
    difference: float
    stderr_difference: float
    n_group: int


def ovb_bias(X, cross_moment, delta) -> np.ndarray:
    """Least-squares coefficient bias (X'X)^{-1} * cross_moment * delta.

    cross_moment is E[X'Z | X] (p x q); delta the unobserved coefficients.
    """
    x = _as_matrix(X, "X")
    cm = _as_matrix(cross_moment, "cross_moment")
    dv = _as_vector(delta, "delta")
    p = x.shape[1]
    if cm.shape != (p, dv.shape[0]):
        raise DimensionMismatchError(
            f"cross_moment must be {p} x {dv.shape[0]}, got {cm.shape}"
        )
    gram = x.T @ x
    svals = np.linalg.svd(gram, compute_uv=False)
    if svals[0] == 0.0 or svals[-1] / svals[0] < RANK_RTOL:
        raise SingularGramError("X'X is singular")
    return np.linalg.solve(gram, cm @ dv)


def _check_sign_assumption(pop: OvbPopulation) -> float:
    margin = float(pop.lam @ pop.gamma) + pop.beta_s
    if margin <= 0:
        raise SignAssumptionError(
            f"decision rule requires lambda'gamma + beta > 0, got {margin:.6g}"
        )
    return margin


def group_prefers_core(pop: OvbPopulation, grp: GroupMoments) -> bool:
    """True when the group's loss is no worse without the extra feature s.

    Equivalent to the condition gamma' (lambda - 2 lambda_g) >= beta under
    the standing assumption lambda' gamma + beta > 0.
    """
    if grp.sigma_sz_g.shape[0] != pop.gamma.shape[0]:
        raise DimensionMismatchError("group moments dimension does not match gamma")
    _check_sign_assumption(pop)
    return float(pop.gamma @ (pop.lam - 2.0 * grp.lam_g)) >= pop.beta_s


def estimate_group_losses(
    pop: OvbPopulation,
    generator: Callable[[np.random.Generator, int], tuple],
    group_predicate: Callable[..., np.ndarray],
    trials: int,
    seed: int = 0,
) -> GroupLossEstimate:
    """Monte-Carlo in-group losses of the two population predictors.

    generator(rng, m) must return raw draws (x, s, z, y) with z of shape
    (m, q); group_predicate(x, s, z, y) selects the group members. Losses
    are evaluated on the population-centered variables:
        with s:    (gamma' z - gamma' lambda s)^2
        without s: (gamma' z + beta s)^2
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    x, s, z, y = generator(rng, trials)
    s = np.asarray(s, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    mask = np.asarray(group_predicate(x, s, z, y), dtype=bool)
    m = int(np.count_nonzero(mask))
    if m == 0:
        raise EmptyGroupError(f"no group members among {trials} draws")
    sc = s[mask] - pop.mean_s
    zc = z[mask] - pop.mean_z
    gz = zc @ pop.gamma
    with_s = (gz - float(pop.gamma @ pop.lam) * sc) ** 2
    without_s = (gz + pop.beta_s * sc) ** 2
    diff = with_s - without_s

    def _stat(v: np.ndarray) -> tuple[float, float]:
        mean = float(np.mean(v))
        stderr = float(np.std(v, ddof=1) / np.sqrt(m)) if m > 1 else 0.0
        return mean, stderr

    lw, ew = _stat(with_s)
    lo, eo = _stat(without_s)
    ld, ed = _stat(diff)
    return GroupLossEstimate(
        loss_with_s=lw,
        loss_without_s=lo,
        stderr_with_s=ew,
        stderr_without_s=eo,
        difference=ld,
        stderr_difference=ed,
        n_group=m,
    )
