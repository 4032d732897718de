"""Space-time volume models, scaling-law fits and protocol comparison.

Volumes are counted in qubit-cycles (one physical qubit for one round of
syndrome extraction).  ``R`` is the Bell pair generation rate in pairs per
syndrome-extraction cycle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .decoder import fmt_float

CSV_COLUMNS = ["protocol", "R", "d_bell", "threshold", "q0", "inverse_yield", "v_buffer", "v_factory", "v_total"]


@dataclass
class CostReport:
    protocol: str
    R: float
    d_bell: int | None
    q0: float
    inverse_yield: float
    v_buffer: float
    v_factory: float
    threshold: float | None = None
    d_s: int | None = None
    p_l: float | None = None

    @property
    def v_total(self) -> float:
        return self.v_buffer + self.v_factory

    def row(self) -> list[str]:
        def f(v):
            return "" if v is None else fmt_float(v)

        return [
            self.protocol,
            f(self.R),
            "" if self.d_bell is None else str(self.d_bell),
            f(self.threshold),
            f(self.q0),
            f(self.inverse_yield),
            f(self.v_buffer),
            f(self.v_factory),
            f(self.v_total),
        ]

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "R": self.R,
            "d_bell": self.d_bell,
            "d_s": self.d_s,
            "threshold": self.threshold,
            "q0": self.q0,
            "p_l": self.p_l,
            "inverse_yield": self.inverse_yield,
            "v_buffer": self.v_buffer,
            "v_factory": self.v_factory,
            "v_total": self.v_total,
        }


def _check_rate(R: float) -> None:
    if not R > 0:
        raise ValueError(f"generation rate must be positive, got {R}")


def llv_boosting(d_bell: int, d_s: int, R: float, q0: float = 1.0) -> CostReport:
    """Boosting volume: buffering ``d_bell^2`` pairs plus ``d_s`` rounds on two patches."""
    _check_rate(R)
    if not 0 < q0 <= 1:
        raise ValueError(f"acceptance rate must lie in (0, 1], got {q0}")
    buffer = d_bell**4 / R
    factory = d_s * (2 * d_s**2 - 1)
    return CostReport("boosting", R, d_bell, q0, d_bell**2 / q0, buffer / q0, factory / q0, d_s=d_s)


def llv_surgery(d_s: int, R: float) -> CostReport:
    """Lattice surgery volume with Bell pairs arriving at rate ``R`` per cycle."""
    _check_rate(R)
    n_wait = max(d_s * (2 * d_s - 1) - R * d_s, 0.0)
    buffer = n_wait**2 / R
    factory = d_s * ((2 * d_s**2 - 1) + (2 * d_s - 1) / 2)
    return CostReport("surgery", R, None, 1.0, float(d_s * (2 * d_s - 1)), buffer, factory, d_s=d_s)


def pipelined_volume(n: int, k: int, r: int, d_s: int) -> float:
    """Volume of the one-way pipelined distillation factory for an [[n, k]] code."""
    if not (0 <= r <= n - k and 0 <= k <= n):
        raise ValueError(f"inconsistent code parameters n={n}, k={k}, r={r}")
    layers = k * (n - k) + r * (n - r) + (n - r - k) * (n - 1)
    return float(layers * (2 * d_s**3 - d_s))


# ---------------------------------------------------------------------------
# scaling laws


def boosting_error(d_bell, p_bell, alpha: float, gamma: float, p_th: float):
    """alpha * (p_bell / p_th) ** (gamma * d_bell)."""
    return alpha * (np.asarray(p_bell, float) / p_th) ** (gamma * np.asarray(d_bell, float))


def surgery_error(d_s, p, p_bell, kappa: float, eta: float, alpha_c: float,
                  p_th_bell: float = 0.153, p_th_local: float = 0.0102):
    """Lattice-surgery error model: pure-Bell, pure-local and mixed failure paths.

    The mixed terms count chains with ``g`` Bell-pair faults, where each Bell
    fault is enhanced by hook-like local faults in the teleported CNOT.
    """
    d_s = np.asarray(d_s, float)
    p = np.asarray(p, float)
    p_bell = np.asarray(p_bell, float)
    h = (d_s + 1) / 2
    xb = p_bell / p_th_bell
    xl = p / p_th_local
    enh = xb * (1 + alpha_c * p * p_th_bell / (1 - np.sqrt(xl))) ** 2
    out = xb**h + xl**h
    d_b = np.broadcast_arrays(d_s, p, p_bell)[0]
    mixed = np.zeros_like(d_b)
    for g in range(1, int(np.max(d_b)) + 1):
        term = enh ** (g / 2) * xl ** ((d_b + 1 - g) / 2)
        mixed = mixed + np.where(g <= d_b, term, 0.0)
    return kappa * (d_s + 1) ** eta * (out + mixed)


@dataclass
class ScalingFit:
    alpha: float
    gamma: float
    p_th: float
    ci: dict = field(default_factory=dict)
    residual: float = 0.0
    n_points: int = 0
    q0: float = 1.0
    threshold: float | None = None

    def predict(self, d_bell, p_bell):
        return boosting_error(d_bell, p_bell, self.alpha, self.gamma, self.p_th)


def fit_boosting_scaling(points, window: tuple[float, float] | None = (0.01, 0.08)) -> ScalingFit:
    """Fit ``p_L = alpha (p_bell/p_th)^(Gamma d_bell)`` in log space.

    ``points`` holds ``(d_bell, p_bell, p_L)`` or ``(d_bell, p_bell, p_L, se)``.
    Writing ``log p_L = a + Gamma d log p_bell + c d`` makes the problem
    linear in ``(a, Gamma, c)`` with ``p_th = exp(-c / Gamma)``, so the
    least-squares optimum is found in closed form.
    """
    pts = [tuple(p) for p in points]
    if window is not None:
        lo, hi = window
        pts = [p for p in pts if lo < p[1] < hi]
    pts = [p for p in pts if p[2] > 0]
    if len({p[0] for p in pts}) < 2 or len({p[1] for p in pts}) < 3:
        raise ValueError("need at least two distances and three Bell error rates with nonzero p_L")
    d = np.array([p[0] for p in pts], float)
    pb = np.array([p[1] for p in pts], float)
    pl = np.array([p[2] for p in pts], float)
    if len(pts[0]) > 3:
        se = np.array([p[3] for p in pts], float)
        w = np.where(se > 0, pl / np.maximum(se, 1e-300), 1.0)
    else:
        w = np.ones(len(pts))
    X = np.column_stack([np.ones_like(d), d * np.log(pb), d])
    y = np.log(pl)
    Xw, yw = X * w[:, None], y * w
    coef, *_ = np.linalg.lstsq(Xw, yw, rcond=None)
    a, gamma, c = coef
    if gamma <= 0:
        raise ValueError(f"fitted exponent is not positive ({gamma:.3g})")
    p_th = math.exp(-c / gamma)
    resid = yw - Xw @ coef
    dof = max(len(y) - 3, 1)
    s2 = float(resid @ resid) / dof
    ci = {}
    try:
        cov = s2 * np.linalg.inv(Xw.T @ Xw)
        jac_pth = p_th * np.array([0.0, c / gamma**2, -1.0 / gamma])
        ci = {
            "alpha": 1.96 * math.exp(a) * math.sqrt(max(cov[0, 0], 0)),
            "gamma": 1.96 * math.sqrt(max(cov[1, 1], 0)),
            "p_th": 1.96 * math.sqrt(max(float(jac_pth @ cov @ jac_pth), 0)),
        }
    except np.linalg.LinAlgError:
        pass
    return ScalingFit(math.exp(a), float(gamma), p_th, ci, float(np.sqrt(np.mean(resid**2))), len(pts))


@dataclass
class SurgeryFit:
    kappa: float
    eta: float
    alpha_c: float
    p_th_bell: float = 0.153
    p_th_local: float = 0.0102
    ci: dict = field(default_factory=dict)
    residual: float = 0.0

    def predict(self, d_s, p, p_bell):
        return surgery_error(d_s, p, p_bell, self.kappa, self.eta, self.alpha_c, self.p_th_bell, self.p_th_local)


REFERENCE_SURGERY = SurgeryFit(kappa=5.44e-2, eta=0.534, alpha_c=315.0)


def fit_surgery_scaling(points, p_th_bell: float = 0.153, p_th_local: float = 0.0102,
                        initial: tuple[float, float, float] = (5e-2, 0.5, 300.0)) -> SurgeryFit:
    """Fit ``kappa``, ``eta`` and ``alpha_c`` with both thresholds held fixed.

    ``points`` holds ``(d_s, p, p_bell, p_L)``; distances must be odd and
    every point below both thresholds.
    """
    pts = [tuple(p) for p in points if p[3] > 0]
    for d, p, pb, _ in pts:
        if int(d) % 2 == 0:
            raise ValueError(f"surgery distance must be odd, got {d}")
        if pb >= p_th_bell or p >= p_th_local:
            raise ValueError(f"point (p={p}, p_bell={pb}) lies above threshold")
    if len(pts) < 3:
        raise ValueError("need at least three points with nonzero p_L")
    d = np.array([p[0] for p in pts], float)
    pl = np.array([p[1] for p in pts], float)
    pb = np.array([p[2] for p in pts], float)
    y = np.log(np.array([p[3] for p in pts], float))

    def resid(theta):
        log_k, eta, log_a = theta
        model = surgery_error(d, pl, pb, math.exp(log_k), eta, math.exp(log_a), p_th_bell, p_th_local)
        return np.log(model) - y

    x0 = np.array([math.log(initial[0]), initial[1], math.log(initial[2])])
    sol = least_squares(resid, x0, method="lm", xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=20000)
    log_k, eta, log_a = sol.x
    ci = {}
    try:
        dof = max(len(y) - 3, 1)
        s2 = float(sol.fun @ sol.fun) / dof
        cov = s2 * np.linalg.inv(sol.jac.T @ sol.jac)
        ci = {
            "kappa": 1.96 * math.exp(log_k) * math.sqrt(max(cov[0, 0], 0)),
            "eta": 1.96 * math.sqrt(max(cov[1, 1], 0)),
            "alpha_c": 1.96 * math.exp(log_a) * math.sqrt(max(cov[2, 2], 0)),
        }
    except np.linalg.LinAlgError:
        pass
    return SurgeryFit(math.exp(log_k), float(eta), math.exp(log_a), p_th_bell, p_th_local, ci,
                      float(np.sqrt(np.mean(sol.fun**2))))


# ---------------------------------------------------------------------------
# protocol comparison


@dataclass
class DistillationModel:
    """``p_out = c * m**e * p_in**2`` for the [[2m, 2m-2, 2]] code, with X-rank 1."""

    m: int = 5
    c: float = 0.69
    e: float = 1.36

    @property
    def n(self) -> int:
        return 2 * self.m

    @property
    def k(self) -> int:
        return 2 * self.m - 2

    def p_out(self, p_in: float) -> float:
        return self.c * self.m**self.e * p_in**2

    def success(self, p_in: float) -> float:
        return (1 - p_in) ** self.n


@dataclass
class ProtocolModels:
    boosting: list[ScalingFit]
    distillation: DistillationModel = field(default_factory=DistillationModel)
    surgery: SurgeryFit = field(default_factory=lambda: REFERENCE_SURGERY)
    p_local: float = 1e-3
    d_s: int = 19
    concat: dict = field(default_factory=dict)  # name -> list[DistillationStage]


def reference_boosting_table(p_th: float = 0.1, alpha: float = 0.1) -> list[ScalingFit]:
    """Boosting error model across acceptance rates.

    The exponent rises from 0.4 with no discard to 1.2 at strong discard;
    ``p_th`` and ``alpha`` are held fixed across discard levels.
    """
    table = [(1.0, 0.4), (0.9, 0.6), (0.75, 0.8), (0.5, 1.0), (0.3, 1.2)]
    return [ScalingFit(alpha, g, p_th, q0=q) for q, g in table]


DISTANCES = tuple(range(3, 19, 2))


def compare_protocols(target_pl: float, p_bell: float, R_values, models: ProtocolModels) -> list[CostReport]:
    """Cheapest configuration of each protocol meeting ``target_pl`` at each rate.

    Boosting scans odd ``d_bell`` from 3 to 17 and every acceptance level of
    the model table.  Boosting plus distillation feeds boosted pairs into one
    round of the [[2m, 2m-2, 2]] pipelined factory.  Surgery scans odd patch
    distances.  Infeasible protocols produce no row.
    """
    if not 0 < target_pl < 1:
        raise ValueError("target must lie in (0, 1)")
    rows: list[CostReport] = []
    d_s = models.d_s
    dist = models.distillation
    v_pipe = pipelined_volume(dist.n, dist.k, 1, d_s)
    for R in R_values:
        _check_rate(R)
        best_b = best_bd = None
        for fit in models.boosting:
            for d in DISTANCES:
                pl = float(fit.predict(d, p_bell))
                base = llv_boosting(d, d_s, R, fit.q0)
                base.threshold = fit.threshold
                if pl <= target_pl and (best_b is None or base.v_total < best_b.v_total):
                    base.p_l = pl
                    best_b = base
                p_out = dist.p_out(pl)
                if p_out <= target_pl and pl < 1:
                    qd = dist.success(pl)
                    scale = dist.n / (dist.k * qd)
                    rep = CostReport(
                        "boosting+distillation", R, d, fit.q0, base.inverse_yield * scale,
                        base.v_buffer * scale, base.v_factory * scale + v_pipe / (dist.k * qd),
                        fit.threshold, d_s, p_out,
                    )
                    if best_bd is None or rep.v_total < best_bd.v_total:
                        best_bd = rep
        rows += [r for r in (best_b, best_bd) if r is not None]
        s = models.surgery
        for ds in range(3, 61, 2):
            if p_bell >= s.p_th_bell or models.p_local >= s.p_th_local:
                break
            pl = float(s.predict(ds, models.p_local, p_bell))
            if pl <= target_pl:
                rep = llv_surgery(ds, R)
                rep.p_l = pl
                rows.append(rep)
                break
        from .distill import evaluate_concat_sequence

        for name, stages in models.concat.items():
            res = evaluate_concat_sequence(stages, d_s, R)
            if res.p_out <= target_pl:
                rows.append(CostReport(name, R, None, 1.0, res.inverse_yield, res.v_buffer, res.v_factory,
                                       d_s=d_s, p_l=res.p_out))
    return rows


def cost_rows_csv(rows: list[CostReport]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    lines += [",".join(r.row()) for r in rows]
    return "\n".join(lines) + "\n"
