"""Minimum-norm estimators for the core, full, multi-spurious and RST models.

The core model interpolates the targets using only the core features; the
full model additionally spends weight on spurious feature columns to reach a
smaller parameter norm; the RST model refits without the spurious features
under pseudo-label constraints on unlabeled points and recovers an
s-oblivious model with the full model's predictions.

Closed forms (with P the row-space projector of Z, theta*/beta* the true
parameters):

    core:   theta = P theta*
    full:   w = theta*' P beta* / (1 + beta*' P beta*),  theta = P(theta* - w beta*)
    multi:  (I + G) w = c  with  G_ij = beta_i' P beta_j,  c_i = theta*' P beta_i
    rst:    theta = P theta* + w (I - P) beta*

Every fit also has an (S, Y)-data form used when no ground truth is attached.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DimensionMismatchError,
    InconsistentConstraintsError,
    InconsistentSystemError,
    RankDeficientError,
    SingularSystemError,
)
from .minnorm import (
    INTERP_RTOL,
    DesignMatrix,
    MinNormSolution,
    _as_matrix,
    _as_vector,
    min_norm_solve,
)

MODEL_KINDS = ("core", "full", "multi", "rst")

_PAIRING_TOL = 1e-9


@dataclass(frozen=True)
class GroundTruth:
    """True target parameters theta* and spurious parameters beta*_1..beta*_k."""

    theta_star: np.ndarray
    beta_stars: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        theta = _as_vector(self.theta_star, "theta_star").copy()
        theta.setflags(write=False)
        object.__setattr__(self, "theta_star", theta)
        betas = []
        for j, b in enumerate(self.beta_stars):
            bv = _as_vector(b, f"beta_stars[{j}]").copy()
            if bv.shape[0] != theta.shape[0]:
                raise DimensionMismatchError(
                    f"beta_stars[{j}] has dimension {bv.shape[0]}, expected {theta.shape[0]}"
                )
            bv.setflags(write=False)
            betas.append(bv)
        object.__setattr__(self, "beta_stars", tuple(betas))

    @property
    def dim(self) -> int:
        return self.theta_star.shape[0]

    @property
    def n_spurious(self) -> int:
        return len(self.beta_stars)


@dataclass(frozen=True)
class LabeledData:
    """Training triple (Z, S, Y), optionally paired with its generating truth."""

    Z: DesignMatrix
    S: np.ndarray
    Y: np.ndarray
    truth: GroundTruth | None = None

    def __post_init__(self):
        s = np.asarray(self.S, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2:
            raise DimensionMismatchError(f"S must be an n x k matrix, got shape {s.shape}")
        y = _as_vector(self.Y, "Y")
        n = self.Z.rows
        if s.shape[0] != n or y.shape[0] != n:
            raise DimensionMismatchError(
                f"row counts disagree: Z has {n}, S has {s.shape[0]}, Y has {y.shape[0]}"
            )
        s = s.copy()
        s.setflags(write=False)
        y = y.copy()
        y.setflags(write=False)
        object.__setattr__(self, "S", s)
        object.__setattr__(self, "Y", y)
        if self.truth is not None:
            self._check_truth_pairing()

    def _check_truth_pairing(self):
        t = self.truth
        z = self.Z.entries
        if t.dim != self.Z.cols:
            raise DimensionMismatchError(
                f"truth dimension {t.dim} does not match design with {self.Z.cols} columns"
            )
        if t.n_spurious != self.n_spurious:
            raise DimensionMismatchError(
                f"truth provides {t.n_spurious} spurious vectors but S has {self.n_spurious} columns"
            )
        if not np.allclose(z @ t.theta_star, self.Y, rtol=_PAIRING_TOL, atol=_PAIRING_TOL):
            raise InconsistentSystemError("Y does not equal Z theta_star for the attached truth")
        for j, b in enumerate(t.beta_stars):
            if not np.allclose(z @ b, self.S[:, j], rtol=_PAIRING_TOL, atol=_PAIRING_TOL):
                raise InconsistentSystemError(
                    f"S column {j} does not equal Z beta_star[{j}] for the attached truth"
                )

    @classmethod
    def from_truth(cls, Z: DesignMatrix, truth: GroundTruth) -> "LabeledData":
        """Generate S and Y from the truth on the given design."""
        z = Z.entries
        s = np.column_stack([z @ b for b in truth.beta_stars]) if truth.beta_stars else np.zeros((Z.rows, 0))
        return cls(Z=Z, S=s, Y=z @ truth.theta_star, truth=truth)

    @property
    def n_spurious(self) -> int:
        return self.S.shape[1]


@dataclass(frozen=True)
class UnlabeledData:
    """Unlabeled points (Zu, Su) used for robust self-training."""

    Zu: np.ndarray
    Su: np.ndarray

    def __post_init__(self):
        zu = _as_matrix(self.Zu, "Zu")
        su = np.asarray(self.Su, dtype=float)
        if su.ndim == 1:
            su = su[:, None]
        if su.shape[0] != zu.shape[0]:
            raise DimensionMismatchError(
                f"row counts disagree: Zu has {zu.shape[0]}, Su has {su.shape[0]}"
            )
        zu = zu.copy()
        zu.setflags(write=False)
        su = su.copy()
        su.setflags(write=False)
        object.__setattr__(self, "Zu", zu)
        object.__setattr__(self, "Su", su)


@dataclass(frozen=True)
class LinearModel:
    """Fitted parameters: core-feature weights plus spurious-feature weights."""

    theta_hat: np.ndarray
    w_hat: np.ndarray
    kind: str

    def __post_init__(self):
        theta = _as_vector(self.theta_hat, "theta_hat").copy()
        w = _as_vector(self.w_hat, "w_hat").copy()
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind in ("core", "rst") and w.shape[0] != 0:
            raise ValueError(f"{self.kind} models carry no spurious weights")
        theta.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "theta_hat", theta)
        object.__setattr__(self, "w_hat", w)

    @property
    def squared_norm(self) -> float:
        return float(self.theta_hat @ self.theta_hat + self.w_hat @ self.w_hat)


def _require_full_row_rank(Z: DesignMatrix):
    if not Z.full_row_rank:
        raise RankDeficientError(
            f"design matrix ({Z.rows}x{Z.cols}) is rank-deficient or has more rows than columns"
        )


def _check_interpolation(data: LabeledData, theta: np.ndarray, w: np.ndarray):
    pred = data.Z.entries @ theta
    if w.size:
        pred = pred + data.S @ w
    residual = float(np.linalg.norm(pred - data.Y))
    scale = float(np.linalg.norm(data.Y))
    rel = residual / scale if scale > 0 else residual
    if rel > INTERP_RTOL:
        raise InconsistentSystemError(
            f"fitted model does not interpolate its training targets (relative residual {rel:.3e})"
        )


def fit_core(data: LabeledData) -> LinearModel:
    """Minimum-norm interpolant of Z theta = Y, ignoring the spurious columns."""
    _require_full_row_rank(data.Z)
    z = data.Z.entries
    gram = z @ z.T
    theta = z.T @ np.linalg.solve(gram, data.Y)
    model = LinearModel(theta_hat=theta, w_hat=np.zeros(0), kind="core")
    _check_interpolation(data, theta, model.w_hat)
    return model


def fit_full(data: LabeledData) -> LinearModel:
    """Joint minimum-norm interpolant of Z theta + S w = Y with one spurious column."""
    if data.n_spurious != 1:
        raise DimensionMismatchError(
            f"full model needs exactly one spurious column, got {data.n_spurious}"
        )
    _require_full_row_rank(data.Z)
    z = data.Z.entries
    s = data.S[:, 0]
    gram = z @ z.T
    gy = np.linalg.solve(gram, data.Y)
    gs = np.linalg.solve(gram, s)
    w = float(s @ gy) / (1.0 + float(s @ gs))
    theta = z.T @ (gy - w * gs)
    model = LinearModel(theta_hat=theta, w_hat=np.array([w]), kind="full")
    _check_interpolation(data, theta, model.w_hat)
    return model


def fit_multi(data: LabeledData) -> LinearModel:
    """Joint minimum-norm interpolant with k >= 1 spurious columns.

    The spurious weights solve the k x k system (I + G) w = c with
    G_ij = S_i'(ZZ')^{-1}S_j and c_i = S_i'(ZZ')^{-1}Y, the stationarity
    condition of the strictly convex joint norm objective.
    """
    if data.n_spurious < 1:
        raise DimensionMismatchError("multi model needs at least one spurious column")
    _require_full_row_rank(data.Z)
    z = data.Z.entries
    s = data.S
    gram = z @ z.T
    gy = np.linalg.solve(gram, data.Y)
    gs = np.linalg.solve(gram, s)
    system = np.eye(data.n_spurious) + s.T @ gs
    c = s.T @ gy
    try:
        w = np.linalg.solve(system, c)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - I + Gram is SPD
        raise SingularSystemError("spurious-weight system is singular") from exc
    theta = z.T @ (gy - gs @ w)
    model = LinearModel(theta_hat=theta, w_hat=w, kind="multi")
    _check_interpolation(data, theta, w)
    return model


def fit_rst(labeled: LabeledData, unlabeled: UnlabeledData, full: LinearModel) -> LinearModel:
    """Self-trained s-oblivious model: min-norm theta interpolating the labels
    and the full model's pseudo-labels on the unlabeled points.

    Solves min ||theta||^2 s.t. Z theta = Y and Zu theta = Zu theta_full + Su w.
    With enough independent unlabeled points (full column rank) the solution is
    P theta* + w (I - P) beta*.
    """
    if full.kind != "full":
        raise ValueError(f"fit_rst needs a full-model fit, got kind={full.kind!r}")
    _require_full_row_rank(labeled.Z)
    if labeled.n_spurious != full.w_hat.shape[0]:
        raise DimensionMismatchError(
            f"labeled data has {labeled.n_spurious} spurious columns but the full model "
            f"carries {full.w_hat.shape[0]} weights"
        )
    _check_interpolation(labeled, full.theta_hat, full.w_hat)  # full must come from this data
    zu = unlabeled.Zu
    su = unlabeled.Su
    d = labeled.Z.cols
    if zu.shape[1] != d:
        raise DimensionMismatchError(
            f"unlabeled design has {zu.shape[1]} columns, expected {d}"
        )
    if su.shape[1] != full.w_hat.shape[0]:
        raise DimensionMismatchError(
            f"Su has {su.shape[1]} columns but the full model has {full.w_hat.shape[0]} spurious weights"
        )
    if np.linalg.matrix_rank(zu) < d:
        raise RankDeficientError(
            f"unlabeled design ({zu.shape[0]}x{d}) must have full column rank"
        )
    pseudo = zu @ full.theta_hat + su @ full.w_hat
    stacked = np.vstack([labeled.Z.entries, zu])
    rhs = np.concatenate([labeled.Y, pseudo])
    try:
        sol: MinNormSolution = min_norm_solve(stacked, rhs)
    except InconsistentSystemError as exc:
        raise InconsistentConstraintsError(
            "labels and pseudo-labels cannot be interpolated by one parameter vector"
        ) from exc
    return LinearModel(theta_hat=sol.x, w_hat=np.zeros(0), kind="rst")


def predict(model: LinearModel, z, s=None) -> float:
    """Model output theta' z + w' s (s must be omitted/empty for core and rst)."""
    zv = _as_vector(z, "z")
    if zv.shape[0] != model.theta_hat.shape[0]:
        raise DimensionMismatchError(
            f"z has dimension {zv.shape[0]}, model expects {model.theta_hat.shape[0]}"
        )
    k = model.w_hat.shape[0]
    if s is None:
        sv = np.zeros(0)
    else:
        sv = np.atleast_1d(np.asarray(s, dtype=float))
    if sv.shape[0] != k:
        raise DimensionMismatchError(
            f"s has {sv.shape[0]} entries but the {model.kind} model expects {k}"
        )
    out = float(model.theta_hat @ zv)
    if k:
        out += float(model.w_hat @ sv)
    return out


def implicit_weights(model: LinearModel, truth: GroundTruth) -> np.ndarray:
    """Effective linear functional of z once each spurious value is beta*' z.

    Returns theta_hat + sum_i w_i beta*_i; for models with no spurious
    weights this is theta_hat itself.
    """
    if model.theta_hat.shape[0] != truth.dim:
        raise DimensionMismatchError(
            f"model dimension {model.theta_hat.shape[0]} does not match truth dimension {truth.dim}"
        )
    eff = model.theta_hat.copy()
    k = model.w_hat.shape[0]
    if k == 0:
        return eff
    if k != truth.n_spurious:
        raise DimensionMismatchError(
            f"model has {k} spurious weights but truth provides {truth.n_spurious} beta vectors"
        )
    for w, b in zip(model.w_hat, truth.beta_stars):
        eff = eff + w * b
    return eff
