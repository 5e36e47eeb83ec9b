"""Self-contained verification suites, runnable via ``fbl verify``.

Each suite checks one family of invariants against an independent route
(central finite differences, direct scalar re-evaluation, algebraic
identities) and reports pass/fail with details. ``flip_df_extra_sign`` is a
test hook that negates the feature-norm gradient term before backprop; it
exists so the mutation test can confirm the gradient check actually bites.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import ClassCounts, lambda_vector
from .losses import (
    LossConfig,
    LossKind,
    ScheduleKind,
    baseline_logit_adjust,
    baseline_margin,
    constraint_form_loss,
    fbl_loss,
    schedule_alpha,
    softmax_ce,
)
from .model import ForwardTrace, Model, backward, forward, init_model

__all__ = [
    "SuiteResult",
    "finite_difference_gradients",
    "max_relative_error",
    "gradient_check_suite",
    "constraint_identity_suite",
    "normalization_suite",
    "feature_norm_monotonicity_suite",
    "schedule_bounds_suite",
    "reduction_suite",
    "run_all",
]

GRAD_CHECK_TOL = 1e-4
IDENTITY_TOL = 1e-10
NORMALIZATION_TOL = 1e-9
FD_STEP = 1e-5
FD_FLOOR = 1e-8


@dataclass
class SuiteResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "details": self.details}


def _loss_scalar(model: Model, x: np.ndarray, y: np.ndarray, cfg: LossConfig,
                 t: int, total_epochs: int, counts: ClassCounts) -> float:
    trace = forward(model, x)
    if cfg.kind is LossKind.CE:
        return softmax_ce(trace.logits, y).loss
    if cfg.kind is LossKind.FBL:
        return fbl_loss(trace, y, cfg, t, total_epochs).loss
    if cfg.kind is LossKind.LOGIT_ADJUST:
        return baseline_logit_adjust(trace.logits, y, counts, cfg.baseline_tau).loss
    if cfg.kind is LossKind.MARGIN:
        return baseline_margin(trace.logits, y, counts, cfg.baseline_margin_scale).loss
    raise ValueError(f"no scalar loss for kind {cfg.kind!r}")


def finite_difference_gradients(model: Model, loss_fn, step: float = FD_STEP) -> list[np.ndarray]:
    """Central differences of ``loss_fn(model)`` over every parameter entry."""
    grads = []
    for p in model.params():
        g = np.zeros_like(p)
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_p.shape[0]):
            orig = flat_p[i]
            flat_p[i] = orig + step
            up = loss_fn(model)
            flat_p[i] = orig - step
            down = loss_fn(model)
            flat_p[i] = orig
            flat_g[i] = (up - down) / (2.0 * step)
        grads.append(g)
    return grads


def max_relative_error(analytic: list[np.ndarray], fd: list[np.ndarray],
                       floor: float = FD_FLOOR) -> float:
    """Max over coordinates of |a-f| / max(|a|,|f|), skipping |f| <= floor."""
    worst = 0.0
    for a, f in zip(analytic, fd):
        mask = np.abs(f) > floor
        if not mask.any():
            continue
        denom = np.maximum(np.abs(a[mask]), np.abs(f[mask]))
        worst = max(worst, float((np.abs(a[mask] - f[mask]) / denom).max()))
    return worst


def _random_counts(rng: np.random.Generator, num_classes: int) -> ClassCounts:
    raw = np.sort(rng.integers(1, 400, size=num_classes))[::-1]
    return ClassCounts(tuple(int(v) for v in raw))


def gradient_check_suite(num_cases: int = 20, seed: int = 0,
                         flip_df_extra_sign: bool = False,
                         tol: float = GRAD_CHECK_TOL) -> SuiteResult:
    """Analytic grads vs central differences on random tiny models.

    Half the cases use plain CE, half the feature-balanced loss (which
    exercises the gradient pathway through the feature norm). Inputs are
    redrawn until every sample keeps live feature units and pre-activations
    clear of the ReLU kink: central differences are ill-conditioned both at
    the kink and on the dead-feature plateau, where the norm guard turns the
    adjustment into a huge constant.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_case = None
    for case in range(num_cases):
        d_in, hid, feat, n_cls = 3, 4, 3, 3
        batch = int(rng.integers(2, 5))
        model = init_model(d_in, hid, feat, n_cls, seed=int(rng.integers(2**31)))
        # break the zero-bias symmetry so both ReLUs have active and inactive units
        model.b1[:] = rng.normal(scale=0.3, size=hid)
        model.b2[:] = rng.normal(scale=0.3, size=feat)
        for _ in range(200):
            x = rng.normal(size=(batch, d_in))
            probe = forward(model, x)
            margin = min(np.abs(probe.hidden_pre).min(), np.abs(probe.feature_pre).min())
            if margin > 1e-3 and probe.feat_norms.min() > 0.1:
                break
        y = rng.integers(0, n_cls, size=batch)
        counts = _random_counts(rng, n_cls)
        use_fbl = case % 2 == 1
        t, total = int(rng.integers(1, 20)), 20
        cfg = LossConfig(
            kind=LossKind.FBL if use_fbl else LossKind.CE,
            schedule=ScheduleKind.PARABOLIC_INCREASE,
            alpha_max=float(rng.uniform(0.5, 2.0)),
            lambdas=lambda_vector(counts),
        )

        trace = forward(model, x)
        if use_fbl:
            out = fbl_loss(trace, y, cfg, t, total)
        else:
            out = softmax_ce(trace.logits, y)
        df_extra = out.dl_df_extra
        if flip_df_extra_sign and df_extra is not None:
            df_extra = -df_extra
        analytic = list(backward(model, trace, out.dl_dz, df_extra).params())
        fd = finite_difference_gradients(
            model, lambda m: _loss_scalar(m, x, y, cfg, t, total, counts)
        )
        err = max_relative_error(analytic, fd)
        if err > worst:
            worst, worst_case = err, {"case": case, "kind": cfg.kind.value}
    return SuiteResult(
        name="gradient_check",
        passed=worst < tol,
        details={"cases": num_cases, "max_rel_error": worst, "tol": tol, "worst": worst_case},
    )


def _random_trace_inputs(rng: np.random.Generator, batch: int, n_cls: int, feat: int):
    """Random logits/feature pairs shaped like a ForwardTrace, for z-level checks."""
    feature = np.abs(rng.normal(size=(batch, feat))) + 0.1
    logits = rng.uniform(-8.0, 8.0, size=(batch, n_cls))
    norms = np.linalg.norm(feature, axis=1)
    dummy = np.zeros((batch, 1))
    return ForwardTrace(
        x=dummy, hidden_pre=dummy, hidden=dummy, feature_pre=feature,
        feature=feature, feat_norms=norms, logits=logits,
    )


def constraint_identity_suite(num_cases: int = 1000, seed: int = 1,
                              tol: float = IDENTITY_TOL) -> SuiteResult:
    """Additive-form loss equals the single-log rewrite, per sample.

    Route A: -log softmax(z)_y + alpha*lambda_y/||f|| (stable evaluation).
    Route B: -log(exp(z_y - alpha*lambda_y/||f||) / sum_j exp(z_j)) computed
    literally, one sample at a time in plain Python floats.
    """
    import math

    rng = np.random.default_rng(seed)
    worst = 0.0
    cases_done = 0
    while cases_done < num_cases:
        batch = min(50, num_cases - cases_done)
        n_cls = int(rng.integers(2, 8))
        trace = _random_trace_inputs(rng, batch, n_cls, feat=4)
        y = rng.integers(0, n_cls, size=batch)
        counts = _random_counts(rng, n_cls)
        lams = lambda_vector(counts)
        t, total = int(rng.integers(1, 30)), 30
        cfg = LossConfig(kind=LossKind.CONSTRAINT_FORM, alpha_max=float(rng.uniform(0.0, 2.0)),
                         lambdas=lams)
        alpha = schedule_alpha(cfg.schedule, t, total, cfg.alpha_max)

        per_sample_a = np.empty(batch)
        per_sample_b = np.empty(batch)
        for s in range(batch):
            z = trace.logits[s]
            m = z.max()
            lse = m + math.log(float(np.exp(z - m).sum()))
            pen = alpha * lams[y[s]] / trace.feat_norms[s]
            per_sample_a[s] = lse - z[y[s]] + pen
            denom = sum(math.exp(float(v)) for v in z)
            per_sample_b[s] = -math.log(math.exp(float(z[y[s]]) - pen) / denom)
        worst = max(worst, float(np.abs(per_sample_a - per_sample_b).max()))

        mean_a = constraint_form_loss(trace, y, cfg, t, total)
        worst = max(worst, abs(mean_a - float(per_sample_a.mean())))
        cases_done += batch
    return SuiteResult(
        name="constraint_identity",
        passed=worst <= tol,
        details={"cases": cases_done, "max_abs_diff": worst, "tol": tol},
    )


def normalization_suite(num_batches: int = 50, seed: int = 2,
                        tol: float = NORMALIZATION_TOL) -> SuiteResult:
    """Every loss's probability rows sum to one."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    rows = 0
    for _ in range(num_batches):
        batch = int(rng.integers(1, 40))
        n_cls = int(rng.integers(2, 12))
        trace = _random_trace_inputs(rng, batch, n_cls, feat=5)
        y = rng.integers(0, n_cls, size=batch)
        counts = _random_counts(rng, n_cls)
        cfg = LossConfig(kind=LossKind.FBL, alpha_max=float(rng.uniform(0.0, 3.0)),
                         lambdas=lambda_vector(counts))
        outputs = [
            softmax_ce(trace.logits, y),
            fbl_loss(trace, y, cfg, t=int(rng.integers(1, 10)), total_epochs=10),
            baseline_logit_adjust(trace.logits, y, counts, tau=float(rng.uniform(0, 2))),
            baseline_margin(trace.logits, y, counts, scale=float(rng.uniform(0, 2))),
        ]
        for out in outputs:
            worst = max(worst, float(np.abs(out.probs.sum(axis=1) - 1.0).max()))
            rows += out.probs.shape[0]
    return SuiteResult(
        name="probability_normalization",
        passed=worst <= tol,
        details={"rows": rows, "max_abs_row_sum_error": worst, "tol": tol},
    )


def feature_norm_monotonicity_suite(num_cases: int = 100, seed: int = 3) -> SuiteResult:
    """CE loss strictly decreases as a correctly-classified feature is scaled up.

    With the weight matrix and feature direction fixed, the loss at
    c * f_hat must be strictly decreasing over c in {0.5, 1, 2, 4, 8}.
    """
    rng = np.random.default_rng(seed)
    scales = np.array([0.5, 1.0, 2.0, 4.0, 8.0])
    violations = 0
    for _ in range(num_cases):
        n_cls = int(rng.integers(2, 10))
        feat = int(rng.integers(2, 8))
        wc = rng.normal(size=(feat, n_cls))
        direction = rng.normal(size=feat)
        direction /= np.linalg.norm(direction)
        y = int(np.argmax(wc.T @ direction))  # correctly classified by construction
        losses = []
        for c in scales:
            logits = ((c * direction) @ wc)[None, :]
            losses.append(softmax_ce(logits, np.array([y])).loss)
        if not all(b < a for a, b in zip(losses, losses[1:])):
            violations += 1
    return SuiteResult(
        name="feature_norm_monotonicity",
        passed=violations == 0,
        details={"cases": num_cases, "violations": violations, "scales": list(scales)},
    )


def schedule_bounds_suite(total_epochs: int = 97, alpha_max: float = 1.7) -> SuiteResult:
    """Schedules stay in [0, alpha_max] with the right monotonicity and endpoints."""
    failures = []
    for kind in ScheduleKind:
        vals = [schedule_alpha(kind, t, total_epochs, alpha_max)
                for t in range(1, total_epochs + 1)]
        arr = np.array(vals)
        if arr.min() < 0 or arr.max() > alpha_max + 1e-15:
            failures.append(f"{kind.value}: out of [0, alpha_max]")
        diffs = np.diff(arr)
        if kind is ScheduleKind.LINEAR_DECREASE:
            if not (diffs <= 0).all():
                failures.append(f"{kind.value}: not non-increasing")
            if vals[-1] != 0.0:
                failures.append(f"{kind.value}: endpoint not 0")
        else:
            if not (diffs >= 0).all():
                failures.append(f"{kind.value}: not non-decreasing")
            if abs(vals[-1] - alpha_max) > 1e-12:
                failures.append(f"{kind.value}: endpoint not alpha_max")
    return SuiteResult(
        name="schedule_bounds",
        passed=not failures,
        details={"total_epochs": total_epochs, "alpha_max": alpha_max, "failures": failures},
    )


def reduction_suite(num_batches: int = 25, seed: int = 4) -> SuiteResult:
    """Zero stimulus reduces the balanced loss to plain CE exactly.

    Both the all-zero lambda vector and alpha = 0 must give bitwise-equal
    loss, logit gradients, probabilities, and a zero feature-gradient block.
    """
    rng = np.random.default_rng(seed)
    ok = True
    for _ in range(num_batches):
        batch = int(rng.integers(1, 30))
        n_cls = int(rng.integers(2, 9))
        trace = _random_trace_inputs(rng, batch, n_cls, feat=6)
        y = rng.integers(0, n_cls, size=batch)
        ce = softmax_ce(trace.logits, y)
        zero_lam = LossConfig(kind=LossKind.FBL, alpha_max=1.3,
                              lambdas=np.zeros(n_cls))
        zero_alpha = LossConfig(kind=LossKind.FBL, alpha_max=0.0,
                                lambdas=lambda_vector(_random_counts(rng, n_cls)))
        for cfg in (zero_lam, zero_alpha):
            out = fbl_loss(trace, y, cfg, t=int(rng.integers(1, 10)), total_epochs=10)
            same = (
                out.loss == ce.loss
                and np.array_equal(out.dl_dz, ce.dl_dz)
                and np.array_equal(out.probs, ce.probs)
                and not out.dl_df_extra.any()
            )
            ok = ok and same
    return SuiteResult(
        name="reduction_to_ce",
        passed=ok,
        details={"batches": num_batches},
    )


def run_all(flip_df_extra_sign: bool = False, seed: int = 0) -> dict:
    """Run every suite; the report is JSON-serializable."""
    suites = [
        gradient_check_suite(seed=seed, flip_df_extra_sign=flip_df_extra_sign),
        constraint_identity_suite(seed=seed + 1),
        normalization_suite(seed=seed + 2),
        feature_norm_monotonicity_suite(seed=seed + 3),
        schedule_bounds_suite(),
        reduction_suite(seed=seed + 4),
    ]
    return {
        "suites": [s.to_dict() for s in suites],
        "all_passed": all(s.passed for s in suites),
    }
