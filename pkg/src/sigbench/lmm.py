"""Random-intercept linear mixed-effects model fit by REML.

The model is ``response ~ Model * Occasion + (1 | family)`` with treatment
coding against the (linear, clean) baseline. The variance ratio
lambda = sigma_u^2 / sigma_e^2 is profiled out: for a fixed lambda the
block-diagonal covariance inverts in closed form (one rank-one correction per
group), giving GLS estimates and the restricted likelihood; lambda itself is
maximized by golden-section search on log(lambda) over [1e-8, 1e6].

With only a handful of grouping levels the intercept variance is weakly
identified; boundary solutions are reported with a flag, never hidden.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .metrics import METRIC_NAMES

REQUIRED_COLUMNS = ("family", "model", "occasion", "series_id") + METRIC_NAMES

METRIC_ALIASES = {
    "amplitude": "mae",
    "frequency": "freq_err_hz",
    "phase": "phase_err_deg",
    "mae": "mae",
    "mse": "mse",
    "freq_err_hz": "freq_err_hz",
    "phase_err_deg": "phase_err_deg",
}

LAMBDA_LO = 1e-8
LAMBDA_HI = 1e6
LOG_LAMBDA_TOL = 1e-8


def read_metrics_csv(path: str) -> dict[str, np.ndarray]:
    """Load the combined metrics table, validating the schema."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise ValueError(f"metrics table {path} is missing column(s): {', '.join(missing)}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"metrics table {path} has no rows")
    table: dict[str, np.ndarray] = {}
    for col in ("family", "model", "occasion", "series_id"):
        table[col] = np.array([r[col] for r in rows])
    for col in METRIC_NAMES:
        table[col] = np.array([float(r[col]) for r in rows])
    return table


@dataclass
class LmmDesign:
    """Treatment-coded fixed-effects matrix plus the grouping index."""

    X: np.ndarray
    column_names: list[str]
    group_codes: np.ndarray
    group_levels: list[str]
    metric: str
    response: np.ndarray
    baselines: tuple[str, str]


def build_design(
    table: dict[str, np.ndarray],
    metric: str,
    baselines: tuple[str, str] = ("linear", "clean"),
) -> LmmDesign:
    """Intercept + Model + Occasion + interaction dummies, grouped by family.

    Raises if the named baselines are absent, if any (model, occasion) cell of
    the grid is empty (the interaction would be unestimable), or if the coded
    matrix is rank deficient.
    """
    metric_col = METRIC_ALIASES.get(metric)
    if metric_col is None or metric_col not in table:
        raise ValueError(f"unknown metric {metric!r}; expected one of {sorted(METRIC_ALIASES)}")
    model_col = np.asarray(table["model"])
    occ_col = np.asarray(table["occasion"])
    fam_col = np.asarray(table["family"])
    base_model, base_occ = baselines
    models = sorted(set(model_col.tolist()))
    occasions = sorted(set(occ_col.tolist()))
    if base_model not in models:
        raise ValueError(f"baseline model {base_model!r} not present (have {models})")
    if base_occ not in occasions:
        raise ValueError(f"baseline occasion {base_occ!r} not present (have {occasions})")

    present = set(zip(model_col.tolist(), occ_col.tolist()))
    empty = [(m, o) for m in models for o in occasions if (m, o) not in present]
    if empty:
        raise ValueError(f"unestimable interaction: empty grid cell(s) {empty}")

    other_models = [m for m in models if m != base_model]
    other_occs = [o for o in occasions if o != base_occ]
    n = len(model_col)
    columns = [np.ones(n)]
    names = ["intercept"]
    model_dummies = {m: (model_col == m).astype(float) for m in other_models}
    occ_dummies = {o: (occ_col == o).astype(float) for o in other_occs}
    for m in other_models:
        columns.append(model_dummies[m])
        names.append(f"model[{m}]")
    for o in other_occs:
        columns.append(occ_dummies[o])
        names.append(f"occasion[{o}]")
    for m in other_models:
        for o in other_occs:
            columns.append(model_dummies[m] * occ_dummies[o])
            names.append(f"model[{m}]:occasion[{o}]")
    X = np.column_stack(columns)
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise ValueError("design matrix is rank deficient after treatment coding")

    group_levels = sorted(set(fam_col.tolist()))
    level_index = {g: i for i, g in enumerate(group_levels)}
    group_codes = np.array([level_index[g] for g in fam_col.tolist()], dtype=np.intp)
    return LmmDesign(
        X=X,
        column_names=names,
        group_codes=group_codes,
        group_levels=group_levels,
        metric=metric_col,
        response=np.asarray(table[metric_col], dtype=np.float64),
        baselines=baselines,
    )


@dataclass
class LmmFit:
    """REML estimates: fixed effects, variance components, and their context."""

    beta: np.ndarray
    std_errors: np.ndarray
    column_names: list[str]
    sigma2_e: float
    sigma2_u: float
    lam: float
    loglik: float
    boundary: bool
    n_rows: int
    n_params: int
    group_levels: list[str]
    metric: str
    baselines: tuple[str, str]
    cov_beta: np.ndarray = field(repr=False, default=None)

    def coef(self, name: str) -> tuple[float, float]:
        i = self.column_names.index(name)
        return float(self.beta[i]), float(self.std_errors[i])


class _RemlProfile:
    """Closed-form GLS pieces for a fixed variance ratio lambda."""

    def __init__(self, X: np.ndarray, y: np.ndarray, group_codes: np.ndarray, n_groups: int):
        self.X = X
        self.y = y
        self.n, self.p = X.shape
        self.group_rows = [np.flatnonzero(group_codes == j) for j in range(n_groups)]
        self.group_sizes = np.array([rows.size for rows in self.group_rows])
        self.xtx = X.T @ X
        self.xty = X.T @ y
        self.group_x_sums = np.stack([X[rows].sum(axis=0) for rows in self.group_rows])
        self.group_y_sums = np.array([y[rows].sum() for rows in self.group_rows])

    def gls(self, lam: float) -> tuple[np.ndarray, np.ndarray, float]:
        """(beta, A, sigma2_e) for the given lambda."""
        c = lam / (1.0 + lam * self.group_sizes)  # rank-one correction per group
        A = self.xtx - (self.group_x_sums.T * c) @ self.group_x_sums
        b = self.xty - self.group_x_sums.T @ (c * self.group_y_sums)
        beta = np.linalg.solve(A, b)
        resid = self.y - self.X @ beta
        r_sums = np.array([resid[rows].sum() for rows in self.group_rows])
        quad = float(resid @ resid - np.sum(c * r_sums**2))
        sigma2_e = quad / (self.n - self.p)
        return beta, A, sigma2_e

    def criterion(self, lam: float) -> float:
        """Restricted log-likelihood profiled over beta and sigma2_e."""
        _, A, sigma2_e = self.gls(lam)
        logdet_sigma = float(np.sum(np.log1p(lam * self.group_sizes)))
        sign, logdet_a = np.linalg.slogdet(A)
        if sign <= 0:
            return -np.inf
        df = self.n - self.p
        return -0.5 * (df * math.log(sigma2_e) + logdet_sigma + logdet_a + df * (1.0 + math.log(2.0 * math.pi)))


def _golden_section_max(fn, lo: float, hi: float, tol: float) -> float:
    """Argmax of a unimodal function on [lo, hi]."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fn(c), fn(d)
    while (b - a) > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fn(d)
    return (a + b) / 2.0


def fit_reml(design: LmmDesign, response: np.ndarray | None = None) -> LmmFit:
    """Maximize the restricted likelihood over the variance ratio.

    The search runs on log(lambda) over [1e-8, 1e6] with golden-section
    tolerance 1e-8; if the criterion peaks at a bracket end the boundary
    solution is returned with ``boundary=True``.
    """
    y = np.asarray(design.response if response is None else response, dtype=np.float64)
    X = design.X
    n, p = X.shape
    n_groups = len(design.group_levels)
    if y.shape != (n,):
        raise ValueError(f"response length {y.shape} does not match design rows {n}")
    if n < p + n_groups:
        raise ValueError(f"need at least {p + n_groups} rows to fit {p} effects with {n_groups} groups, got {n}")

    profile = _RemlProfile(X, y, design.group_codes, n_groups)
    log_lo, log_hi = math.log(LAMBDA_LO), math.log(LAMBDA_HI)
    crit = lambda u: profile.criterion(math.exp(u))  # noqa: E731
    u_star = _golden_section_max(crit, log_lo, log_hi, LOG_LAMBDA_TOL)
    candidates = [(crit(u), u) for u in (log_lo, u_star, log_hi)]
    best_crit, best_u = max(candidates, key=lambda t: t[0])
    boundary = best_u in (log_lo, log_hi) or abs(best_u - log_lo) < 1e-6 or abs(best_u - log_hi) < 1e-6
    lam = math.exp(best_u)

    beta, A, sigma2_e = profile.gls(lam)
    cov_beta = sigma2_e * np.linalg.inv(A)
    std_errors = np.sqrt(np.diag(cov_beta))
    sigma2_u = lam * sigma2_e
    return LmmFit(
        beta=beta,
        std_errors=std_errors,
        column_names=list(design.column_names),
        sigma2_e=float(sigma2_e),
        sigma2_u=float(sigma2_u),
        lam=float(lam),
        loglik=float(best_crit),
        boundary=bool(boundary),
        n_rows=n,
        n_params=p,
        group_levels=list(design.group_levels),
        metric=design.metric,
        baselines=design.baselines,
        cov_beta=cov_beta,
    )


def wald_p_value(coef: float, std_err: float) -> float:
    """Two-sided p-value from the normal approximation."""
    if std_err <= 0:
        return float("nan")
    return math.erfc(abs(coef / std_err) / math.sqrt(2.0))


def contrasts(fit: LmmFit) -> list[dict]:
    """Per-model contrast against the baseline at the baseline occasion.

    Under treatment coding the model main effect *is* that contrast; negative
    coefficients mean lower error than the baseline model.
    """
    rows = []
    for name in fit.column_names:
        if name.startswith("model[") and ":" not in name:
            model = name[len("model[") : -1]
            coef, se = fit.coef(name)
            rows.append(
                {
                    "model": model,
                    "metric": fit.metric,
                    "coef": coef,
                    "std_err": se,
                    "p_value": wald_p_value(coef, se),
                }
            )
    return rows


def fit_summary(fit: LmmFit) -> dict:
    """JSON-ready fit summary (variances, likelihood, search diagnostics)."""
    return {
        "metric": fit.metric,
        "baselines": {"model": fit.baselines[0], "occasion": fit.baselines[1]},
        "n_rows": fit.n_rows,
        "n_fixed_effects": fit.n_params,
        "groups": fit.group_levels,
        "sigma2_e": fit.sigma2_e,
        "sigma2_u": fit.sigma2_u,
        "lambda": fit.lam,
        "reml_loglik": fit.loglik,
        "boundary": fit.boundary,
        "coefficients": {
            name: {"coef": float(b), "std_err": float(se)}
            for name, b, se in zip(fit.column_names, fit.beta, fit.std_errors)
        },
    }
