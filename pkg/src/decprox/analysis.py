"""Rate theory, fixed-point residuals, reference oracle and decay fitting."""

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RateReport",
    "FitVerdict",
    "theoretical_rate",
    "fixed_point_residuals",
    "centralized_reference",
    "classify_decay",
]


@dataclass(frozen=True)
class RateReport:
    """Contraction factor and step-size bound of the linear-rate theorems."""

    theorem: str
    mu: float
    gamma_primal: float
    gamma_dual: float
    gamma: float
    mu_bound: float
    feasible: bool


@dataclass(frozen=True)
class FitVerdict:
    """Linear-vs-sublinear classification of an error trajectory."""

    classification: str  # linear | sublinear | inconclusive
    geometric_ratio_windows: list
    loglog_slope: float
    semilog_slope: float
    fit_residuals: dict = field(default_factory=dict)
    truncated: bool = False


def theoretical_rate(theorem, mu, nu, delta, sigma_max_C, sigma_min_Bsq):
    """Contraction factor gamma and step-size bound.

    The primary form gives gamma_primal = 1 - mu nu (2 - sigma_max(C) -
    mu delta) with bound mu < (2 - sigma_max(C))/delta; the non-ATC form
    gives gamma_primal = 1 - mu nu (2 - mu delta/(1 - sigma_max(C)))
    with bound mu < 2(1 - sigma_max(C))/delta.  In both cases
    gamma = max(gamma_primal, 1 - min-nonzero-eig(B^2)).
    """
    if not (0 < nu <= delta):
        raise ValueError(f"need 0 < nu <= delta, got nu={nu}, delta={delta}")
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    if not (0 < sigma_min_Bsq <= 1):
        raise ValueError(f"sigma_min_Bsq must be in (0,1], got {sigma_min_Bsq}")

    if theorem == "Thm1":
        if not (0 <= sigma_max_C < 2):
            raise ValueError(f"sigma_max_C must be in [0,2), got {sigma_max_C}")
        mu_bound = (2.0 - sigma_max_C) / delta
        gamma_primal = 1.0 - mu * nu * (2.0 - sigma_max_C - mu * delta)
    elif theorem == "Thm4":
        if not (0 <= sigma_max_C < 1):
            raise ValueError(f"sigma_max_C must be in [0,1), got {sigma_max_C}")
        mu_bound = 2.0 * (1.0 - sigma_max_C) / delta
        gamma_primal = 1.0 - mu * nu * (2.0 - mu * delta / (1.0 - sigma_max_C))
    else:
        raise ValueError(f"theorem must be 'Thm1' or 'Thm4', got {theorem!r}")

    gamma_dual = 1.0 - sigma_min_Bsq
    return RateReport(
        theorem=theorem,
        mu=mu,
        gamma_primal=gamma_primal,
        gamma_dual=gamma_dual,
        gamma=max(gamma_primal, gamma_dual),
        mu_bound=mu_bound,
        feasible=bool(mu < mu_bound),
    )


def fixed_point_residuals(state, costs, prox, triple, mu):
    """Residuals of the three fixed-point equations, at the current state.

    r_primal checks Z = W - mu grad(W) - S (the C term vanishes at
    consensus), r_dual checks B^2 Z = 0, and r_prox checks
    W = prox(A_bar Z).  All are Frobenius norms over the K x M stack,
    normalized by sqrt(KM).
    """
    W, Z, S = state.W, state.Z, state.S
    if Z is None:
        raise ValueError("state carries no Z buffer; run a primal-dual form")
    if S is None:
        S = np.zeros_like(W)
    K, M = W.shape
    scale = np.sqrt(K * M)
    G = costs.grad_stack(W)
    r_primal = np.linalg.norm(Z - (W - mu * G - S)) / scale
    r_dual = np.linalg.norm(triple.B_sq @ Z) / scale
    P = prox.apply_stack(triple.A_bar @ Z, mu) if prox is not None else triple.A_bar @ Z
    r_prox = np.linalg.norm(W - P) / scale
    return float(r_primal), float(r_dual), float(r_prox)


def centralized_reference(costs, prox_common, tol=1e-14, max_iter=1_000_000,
                          w0=None):
    """Solve min (1/K) sum_k J_k(w) + R(w) by proximal gradient descent.

    Runs with step 1/delta until the prox-gradient mapping norm drops
    below ``tol``; warns (and returns the best point) if the iteration
    cap is reached first.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    mu = 1.0 / costs.delta
    w = np.zeros(costs.M) if w0 is None else np.array(w0, dtype=float)
    for _ in range(max_iter):
        g = costs.average_grad(w)
        w_next = (prox_common.apply(w - mu * g, mu)
                  if prox_common is not None else w - mu * g)
        mapping = np.linalg.norm(w - w_next) / mu
        w = w_next
        if mapping <= tol:
            return w
    warnings.warn(
        f"reference oracle hit the iteration cap; mapping norm {mapping:.3e}",
        RuntimeWarning)
    return w


def _window_ratios(iters, log_e, n_windows):
    """Per-window geometric decay ratios from mean log-error slopes."""
    n = len(log_e)
    bounds = np.linspace(0, n - 1, n_windows + 1).astype(int)
    ratios = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        if b <= a:
            continue
        slope = (log_e[b] - log_e[a]) / (iters[b] - iters[a])
        ratios.append(float(np.exp(slope)))
    return ratios


def classify_decay(record, tail_fraction=0.5, n_windows=5,
                   linear_margin=1e-4, sublinear_ratio=0.999,
                   floor_ratio=1e-24):
    """Classify an error trajectory as linear, sublinear or inconclusive.

    Estimates per-window geometric ratios on the trailing
    ``tail_fraction`` of the recorded rows, and fits log-error against
    iteration (geometric model) and against log-iteration (power-law
    model) on a log-spaced subsample of the full trajectory.  Linear
    requires every window ratio below 1 - linear_margin with the semilog
    fit dominating; sublinear requires the final window ratio to drift
    up to at least ``sublinear_ratio`` with the log-log fit dominating.
    Rescaling all errors leaves the verdict unchanged.
    """
    iters = np.asarray(record.iterations, dtype=float)
    errors = np.asarray(record.errors, dtype=float)
    if len(iters) < 100:
        raise ValueError("need at least 100 recorded rows to classify")

    truncated = False
    pos = errors > 0
    if not pos.all():
        cut = int(np.argmin(pos))  # first nonpositive entry
        iters, errors = iters[:cut], errors[:cut]
        truncated = True
    # Drop the stretch sitting on the numerical floor, where decay stalls.
    if len(errors) and errors.min() <= errors.max() * floor_ratio:
        cut = int(np.argmax(errors <= errors.max() * floor_ratio))
        iters, errors = iters[:cut], errors[:cut]
        truncated = True
    if len(iters) < 10:
        return FitVerdict("inconclusive", [], float("nan"), float("nan"),
                          truncated=truncated)

    start = int(len(iters) * (1.0 - tail_fraction))
    it, e = iters[start:], errors[start:]
    ratios = _window_ratios(it, np.log(e), n_windows)

    # Fit the two decay models on geometrically subsampled points spanning
    # the whole post-burn-in trajectory: over a wide iteration range a
    # power law and a geometric separate cleanly, while on the tail alone
    # they can look identical.
    lo = max(iters[0], iters[-1] / 100.0)
    targets = np.geomspace(lo, iters[-1], 120)
    idx = np.unique(np.searchsorted(iters, targets).clip(0, len(iters) - 1))
    fi, fe = iters[idx], np.log(errors[idx])

    semi_fit = np.polyfit(fi, fe, 1)
    semi_res = float(np.sqrt(np.mean((np.polyval(semi_fit, fi) - fe) ** 2)))
    log_it = np.log(fi)
    loglog_fit = np.polyfit(log_it, fe, 1)
    loglog_res = float(np.sqrt(np.mean((np.polyval(loglog_fit, log_it) - fe) ** 2)))

    all_below = all(r < 1.0 - linear_margin for r in ratios)
    drifted = ratios and ratios[-1] >= sublinear_ratio
    decaying = loglog_fit[0] <= -0.05  # power law must actually decay

    if all_below and semi_res <= loglog_res:
        classification = "linear"
    elif drifted and decaying and loglog_res < semi_res:
        classification = "sublinear"
    else:
        classification = "inconclusive"

    return FitVerdict(
        classification=classification,
        geometric_ratio_windows=ratios,
        loglog_slope=float(loglog_fit[0]),
        semilog_slope=float(semi_fit[0]),
        fit_residuals={"semilog": semi_res, "loglog": loglog_res},
        truncated=truncated,
    )
