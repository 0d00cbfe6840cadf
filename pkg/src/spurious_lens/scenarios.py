"""Worked scenarios: exact table reproductions and seeded simulations.

* reference_tables: the four small worked regression setups, every printed
  quantity recomputed through the estimators and compared to its reference
  value.
* example1: identity design, all-ones target, a random binary extra feature
  per point; closed-form expectations of the extra-feature weight and the
  per-coordinate estimate versus Monte-Carlo, plus per-group losses.
* example2: identity design with two random binary extra features; compares
  the model that uses both against the model that drops one.
* ovb-simple: the Bernoulli/Gaussian missing-information example with the
  mixed group that prefers dropping the extra feature.

All simulations are deterministic given (parameters, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimators import (
    GroundTruth,
    LabeledData,
    fit_core,
    fit_full,
    fit_multi,
    implicit_weights,
    predict,
)
from .minnorm import DesignMatrix
from .ovb import GroupMoments, OvbPopulation, estimate_group_losses, group_prefers_core

# Slack added to the 3-sigma closed-form/Monte-Carlo agreement check so that
# zero-variance (deterministic) quantities only need float-level equality.
_THREE_SIGMA_ABS = 1e-12


@dataclass(frozen=True)
class Example1Spec:
    """Identity-design simulation parameters: n points (= n features),
    extra-feature probability p, Monte-Carlo trial count, RNG seed."""

    n: int
    p: float
    trials: int
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")


@dataclass(frozen=True)
class Quantity:
    """One reported number: optional closed form, Monte-Carlo mean, stderr."""

    closed_form: float | None
    monte_carlo: float
    stderr: float


@dataclass(frozen=True)
class ScenarioReport:
    """Named collection of quantities (plus optional boolean verdicts)."""

    name: str
    quantities: dict[str, Quantity]
    verdicts: dict[str, bool] = field(default_factory=dict)
    seed: int | None = None
    params: dict = field(default_factory=dict)

    def three_sigma_violations(self) -> list[str]:
        """Labels whose closed form strays beyond 3 stderr of the Monte-Carlo mean."""
        bad = []
        for label, q in self.quantities.items():
            if q.closed_form is None:
                continue
            if abs(q.closed_form - q.monte_carlo) > 3.0 * q.stderr + _THREE_SIGMA_ABS:
                bad.append(label)
        return bad

    def max_closed_form_gap(self) -> float:
        gaps = [
            abs(q.closed_form - q.monte_carlo)
            for q in self.quantities.values()
            if q.closed_form is not None
        ]
        return max(gaps, default=0.0)


def example1_closed_form(n: int, p: float) -> tuple[float, float]:
    """Expected extra-feature weight and per-coordinate estimate.

    With u ~ Binomial(n, p) counting the points carrying the extra feature,
    the fitted weight is u/(1+u), so
        E[w]       = 1 - (1 - (1-p)^(n+1)) / ((n+1) p)
        E[theta_i] = 1 - p + E[w]/n
    (at p = 0 the analytic limits are 0 and 1).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if p == 0.0:
        return 0.0, 1.0
    e_w = 1.0 - (1.0 - (1.0 - p) ** (n + 1)) / ((n + 1) * p)
    e_theta = 1.0 - p + e_w / n
    return e_w, e_theta


def _stat(values: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / math.sqrt(values.shape[0])) if values.shape[0] > 1 else 0.0
    return mean, stderr


def example1_simulate(spec: Example1Spec, verify_fit: bool = True) -> ScenarioReport:
    """Simulate the identity-design example.

    Each trial draws the binary extra-feature vector, fits the model that
    uses it (weight u/(1+u), cross-checked against the generic fitter when
    verify_fit is set), then evaluates the expected squared loss over the n
    coordinate points with freshly drawn extra-feature values, overall and
    conditioned on the test point's feature value.
    """
    n, p, trials = spec.n, spec.p, spec.trials
    rng = np.random.default_rng(spec.seed)
    s = rng.random((trials, n)) < p
    u = s.sum(axis=1).astype(float)
    w = u / (1.0 + u)
    # Test point i predicts 1 + w (s_test - s_train[i]); conditioning on the
    # test value makes the per-trial conditional losses exact.
    loss_s1 = w**2 * (n - u) / n
    loss_s0 = w**2 * u / n
    loss_avg = p * loss_s1 + (1.0 - p) * loss_s0
    theta_mean = 1.0 - w * u / n

    if verify_fit:
        design = DesignMatrix(np.eye(n))
        y = np.ones(n)
        for i in range(trials):
            model = fit_full(LabeledData(Z=design, S=s[i].astype(float), Y=y))
            if abs(float(model.w_hat[0]) - w[i]) > 1e-10:
                raise AssertionError(
                    f"direct weight {w[i]} disagrees with fitted weight {model.w_hat[0]}"
                )

    cf_w, cf_theta = example1_closed_form(n, p)
    mc_w, se_w = _stat(w)
    mc_t, se_t = _stat(theta_mean)
    mc_l, se_l = _stat(loss_avg)
    mc_l0, se_l0 = _stat(loss_s0)
    mc_l1, se_l1 = _stat(loss_s1)
    return ScenarioReport(
        name="example1",
        quantities={
            "E_w": Quantity(cf_w, mc_w, se_w),
            "E_theta_i": Quantity(cf_theta, mc_t, se_t),
            "E_loss": Quantity(None, mc_l, se_l),
            "E_loss_s0": Quantity(None, mc_l0, se_l0),
            "E_loss_s1": Quantity(None, mc_l1, se_l1),
        },
        seed=spec.seed,
        params={"n": n, "p": p, "trials": trials},
    )


def example2_simulate(
    n: int, p_s: float, trials: int, seed: int = 0, force_t_zero: bool = False
) -> ScenarioReport:
    """Identity design with two binary extra features.

    Feature s appears with probability p_s, feature t with probability 1/2.
    Per trial the with-s model is fit on both columns and the without-s
    model on the t column only; losses are evaluated over the n coordinate
    points with fresh test draws, grouped by the test point's s value.
    force_t_zero pins t to zero (testing hook: the with-s model then reduces
    to the example1 model).
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if not 0.0 <= p_s <= 1.0:
        raise ValueError(f"p_s must be in [0, 1], got {p_s}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    design = DesignMatrix(np.eye(n))
    y = np.ones(n)
    cols = {
        "w_s_with": [], "w_t_with": [], "w_t_without": [],
        "err_with": [], "err_with_s0": [], "err_with_s1": [],
        "err_without": [], "err_without_s0": [], "err_without_s1": [],
    }
    for _ in range(trials):
        s = (rng.random(n) < p_s).astype(float)
        t = np.zeros(n) if force_t_zero else (rng.random(n) < 0.5).astype(float)
        with_model = fit_multi(LabeledData(Z=design, S=np.column_stack([s, t]), Y=y))
        without_model = fit_full(LabeledData(Z=design, S=t, Y=y))
        w_s, w_t = (float(v) for v in with_model.w_hat)
        w_t_wo = float(without_model.w_hat[0])

        def cond_err(v: float) -> float:
            # residual on point i at test draw (v, t'): w_s(s_i - v) + w_t(t_i - t')
            base = w_s * (s - v)
            return float(np.mean(((base + w_t * t) ** 2 + (base + w_t * (t - 1.0)) ** 2) / 2.0))

        e0, e1 = cond_err(0.0), cond_err(1.0)
        e_wo = w_t_wo**2 / 2.0
        cols["w_s_with"].append(w_s)
        cols["w_t_with"].append(w_t)
        cols["w_t_without"].append(w_t_wo)
        cols["err_with"].append(p_s * e1 + (1.0 - p_s) * e0)
        cols["err_with_s0"].append(e0)
        cols["err_with_s1"].append(e1)
        cols["err_without"].append(e_wo)
        cols["err_without_s0"].append(e_wo)
        cols["err_without_s1"].append(e_wo)
    quantities = {}
    for label, values in cols.items():
        mc, se = _stat(np.asarray(values))
        quantities[label] = Quantity(None, mc, se)
    return ScenarioReport(
        name="example2",
        quantities=quantities,
        seed=seed,
        params={"n": n, "p_s": p_s, "trials": trials, "force_t_zero": force_t_zero},
    )


def _table_entries(label: str, computed: np.ndarray, expected: list[float]) -> dict[str, Quantity]:
    comp = np.atleast_1d(np.asarray(computed, dtype=float))
    exp = np.asarray(expected, dtype=float)
    if comp.shape != exp.shape:
        raise AssertionError(f"{label}: shape mismatch {comp.shape} vs {exp.shape}")
    if comp.shape == (1,):
        return {label: Quantity(float(exp[0]), float(comp[0]), 0.0)}
    return {
        f"{label}[{i}]": Quantity(float(exp[i]), float(comp[i]), 0.0)
        for i in range(comp.shape[0])
    }


def reference_tables() -> ScenarioReport:
    """Recompute every printed value of the four worked regression tables.

    Each quantity stores the reference value as closed_form and the
    recomputed value as monte_carlo (stderr 0), so the maximum absolute
    difference doubles as the reproduction check.
    """
    q: dict[str, Quantity] = {}

    # Table 1: one training row [1, 0]; implicit second weight is alpha.
    for alpha in (0.0, 1.0, 2.0):
        truth = GroundTruth(theta_star=np.array([2.0, 2.0]), beta_stars=(np.array([1.0, alpha]),))
        data = LabeledData.from_truth(DesignMatrix(np.array([[1.0, 0.0]])), truth)
        core = fit_core(data)
        full = fit_full(data)
        tag = f"table1[alpha={alpha:g}]"
        q.update(_table_entries(f"{tag}.core.theta", core.theta_hat, [2.0, 0.0]))
        q.update(_table_entries(f"{tag}.full.theta", full.theta_hat, [1.0, 0.0]))
        q.update(_table_entries(f"{tag}.full.w", full.w_hat, [1.0]))
        q.update(_table_entries(f"{tag}.full.implicit", implicit_weights(full, truth), [2.0, alpha]))

    # Table 2: one training row in three dimensions.
    truth2 = GroundTruth(theta_star=np.array([2.0, 2.0, 2.0]), beta_stars=(np.array([1.0, 2.0, -2.0]),))
    data2 = LabeledData.from_truth(DesignMatrix(np.array([[1.0, 0.0, 0.0]])), truth2)
    core2 = fit_core(data2)
    full2 = fit_full(data2)
    q.update(_table_entries("table2.core.theta", core2.theta_hat, [2.0, 0.0, 0.0]))
    q.update(_table_entries("table2.full.theta", full2.theta_hat, [1.0, 0.0, 0.0]))
    q.update(_table_entries("table2.full.w", full2.w_hat, [1.0]))
    q.update(_table_entries("table2.full.implicit", implicit_weights(full2, truth2), [2.0, 2.0, -2.0]))

    # Table 3: identical (s, y) at train and test, predictions on two test points.
    truth3 = GroundTruth(
        theta_star=np.array([1.0, 0.0, 1.0, 0.0]),
        beta_stars=(np.array([1.0, 1.0, -1.0, -1.0]),),
    )
    data3 = LabeledData.from_truth(
        DesignMatrix(np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])), truth3
    )
    core3 = fit_core(data3)
    full3 = fit_full(data3)
    q.update(_table_entries("table3.core.theta", core3.theta_hat, [1.0, 0.0, 0.0, 0.0]))
    q.update(_table_entries("table3.full.theta", full3.theta_hat, [2 / 3, -1 / 3, 0.0, 0.0]))
    q.update(_table_entries("table3.full.w", full3.w_hat, [1 / 3]))
    for j, z in enumerate((np.array([0.0, 2.0, 1.0, 0.0]), np.array([0.0, 2.0, 0.0, 1.0]))):
        q.update(_table_entries(f"table3.pred{j}.core", np.array([predict(core3, z)]), [0.0]))
        q.update(
            _table_entries(f"table3.pred{j}.full", np.array([predict(full3, z, [1.0])]), [-1 / 3])
        )

    # Table 4: two extra features; dropping one raises the weight on the other.
    truth4 = GroundTruth(
        theta_star=np.array([2.0, 2.0, 2.0]),
        beta_stars=(np.array([1.0, -3.0, 0.0]), np.array([1.0, 0.0, -3.0])),
    )
    data4 = LabeledData.from_truth(DesignMatrix(np.array([[1.0, 0.0, 0.0]])), truth4)
    both = fit_multi(data4)
    q.update(_table_entries("table4.both.theta", both.theta_hat, [2 / 3, 0.0, 0.0]))
    q.update(_table_entries("table4.both.w", both.w_hat, [2 / 3, 2 / 3]))
    q.update(_table_entries("table4.both.implicit", implicit_weights(both, truth4), [2.0, -2.0, -2.0]))
    truth4a = GroundTruth(theta_star=truth4.theta_star, beta_stars=(truth4.beta_stars[0],))
    data4a = LabeledData.from_truth(DesignMatrix(np.array([[1.0, 0.0, 0.0]])), truth4a)
    only1 = fit_full(data4a)
    q.update(_table_entries("table4.only_s1.theta", only1.theta_hat, [1.0, 0.0, 0.0]))
    q.update(_table_entries("table4.only_s1.w", only1.w_hat, [1.0]))
    q.update(
        _table_entries("table4.only_s1.implicit", implicit_weights(only1, truth4a), [2.0, -3.0, 0.0])
    )
    return ScenarioReport(name="tables", quantities=q)


def _phi(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _ncdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def ovb_simple_moments(
    sigma: float = 1.0, threshold: float = 1.5
) -> tuple[GroupMoments, dict[str, float]]:
    """Closed-form in-group moments for the Bernoulli/Gaussian example.

    The extra feature s is Bernoulli(1/2), the unobserved covariate is
    x ~ N(s, sigma^2), and the group collects the points that defy the
    correlation: {s=0, x > threshold} union {s=1, x < threshold}. Moments
    are of the population-centered variables and come from truncated-normal
    identities.
    """
    c0 = threshold / sigma
    c1 = (threshold - 1.0) / sigma
    p0 = 0.5 * (1.0 - _ncdf(c0))
    p1 = 0.5 * _ncdf(c1)
    prob = p0 + p1
    # Branch s=0: x ~ N(0, sigma^2) truncated to x > threshold.
    m0 = sigma * _phi(c0) / (1.0 - _ncdf(c0))
    m0_sq = sigma * sigma * (1.0 + c0 * _phi(c0) / (1.0 - _ncdf(c0)))
    # Branch s=1: x = 1 + sigma * eps with eps truncated to eps < c1.
    r1 = _phi(c1) / _ncdf(c1)
    e_eps = -r1
    e_eps_sq = 1.0 - c1 * _phi(c1) / _ncdf(c1)
    w0, w1 = p0 / prob, p1 / prob
    zc0 = m0 - 0.5
    zc1 = 0.5 + sigma * e_eps
    e_sz = w0 * (-0.5) * zc0 + w1 * 0.5 * zc1
    e_z2 = w0 * (m0_sq - m0 + 0.25) + w1 * (0.25 + sigma * e_eps + sigma * sigma * e_eps_sq)
    grp = GroupMoments(sigma_ss_g=0.25, sigma_sz_g=np.array([e_sz]))
    extras = {"group_prob": prob, "E_sz_g": e_sz, "E_z2_g": e_z2, "E_s2_g": 0.25}
    return grp, extras


def ovb_simple_scenario(
    trials: int = 100_000,
    seed: int = 0,
    sigma: float = 1.0,
    gamma: float = 1.0,
    threshold: float = 1.5,
) -> ScenarioReport:
    """Run the Bernoulli/Gaussian example end to end.

    Builds the population, evaluates the closed-form decision rule on the
    mixed group, and cross-checks both group losses by Monte-Carlo.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    pop = OvbPopulation(
        gamma=np.array([gamma]),
        beta_s=1.0,
        sigma_ss=0.25,
        sigma_sz=np.array([0.25]),
        mean_s=0.5,
        mean_z=np.array([0.5]),
    )
    grp, extras = ovb_simple_moments(sigma=sigma, threshold=threshold)
    prefers = group_prefers_core(pop, grp)

    def generator(rng: np.random.Generator, m: int):
        s = (rng.random(m) < 0.5).astype(float)
        x = s + sigma * rng.standard_normal(m)
        y = s + gamma * x
        return None, s, x[:, None], y

    def in_group(_x, s, z, _y):
        x = z[:, 0]
        return ((s == 0.0) & (x > threshold)) | ((s == 1.0) & (x < threshold))

    est = estimate_group_losses(pop, generator, in_group, trials, seed)
    lam = float(pop.lam[0])
    lam_g = float(grp.lam_g[0])
    # Closed-form losses from the in-group second moments.
    cf_with = gamma * gamma * (extras["E_z2_g"] - 2.0 * lam * extras["E_sz_g"] + lam * lam * 0.25)
    cf_without = gamma * gamma * extras["E_z2_g"] + 2.0 * gamma * pop.beta_s * extras["E_sz_g"] + pop.beta_s**2 * 0.25
    return ScenarioReport(
        name="ovb-simple",
        quantities={
            "loss_with_s": Quantity(cf_with, est.loss_with_s, est.stderr_with_s),
            "loss_without_s": Quantity(cf_without, est.loss_without_s, est.stderr_without_s),
            "loss_difference": Quantity(cf_with - cf_without, est.difference, est.stderr_difference),
            "lambda_pop": Quantity(lam, lam, 0.0),
            "lambda_group": Quantity(lam_g, lam_g, 0.0),
            "group_prob": Quantity(extras["group_prob"], est.n_group / trials,
                                   math.sqrt(extras["group_prob"] * (1 - extras["group_prob"]) / trials)),
        },
        verdicts={"group_prefers_core": prefers},
        seed=seed,
        params={"trials": trials, "sigma": sigma, "gamma": gamma, "threshold": threshold},
    )
