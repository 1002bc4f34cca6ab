"""Box-constrained minimization of the weight-schedule losses.

The solve itself is delegated to L-BFGS-B; gradients are central finite
differences evaluated through the batched loss path, so a gradient costs
about as much as a couple of plain evaluations.  Warm-starting across step
counts (the ladder) and eigen-truncation keep large problems tractable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .objective import LossContext, batch_loss
from .schedule import ddim_subsequence, linear_ddpm_schedule
from .spectral import DegradationSpec, Observation, SpectralPrior
from .transfer import DPS, PIGDM, WeightSchedule

__all__ = [
    "OptimizeOptions",
    "WeightSolution",
    "finite_diff_gradient",
    "optimize_weights",
    "iterative_ladder",
    "reduce_dimensions",
    "default_init",
    "dropped_bin_constant",
    "interpolate_weights",
]

DEFAULT_BOUNDS = (-5.0, 5.0)


@dataclass(frozen=True)
class OptimizeOptions:
    bounds: tuple[float, float] = DEFAULT_BOUNDS
    max_iters: int = 2500
    f_tol: float = 1e-6
    grad_step: float = 1e-6
    ladder: tuple[int, ...] | None = None
    keep_dims: int | None = None
    report_exact: bool = False

    def __post_init__(self):
        lo, hi = self.bounds
        if not lo < hi:
            raise ValueError("bounds must satisfy lo < hi")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.f_tol <= 0:
            raise ValueError("f_tol must be positive")


@dataclass(frozen=True)
class WeightSolution:
    weights: WeightSchedule
    final_loss: float
    iterations: int
    trace: tuple[tuple[int, float], ...]


def finite_diff_gradient(f, theta: np.ndarray, h: float) -> np.ndarray:
    """Central-difference gradient of a scalar functional."""
    if h <= 0:
        raise ValueError("h must be positive")
    theta = np.asarray(theta, dtype=float)
    grad = np.empty_like(theta)
    for i in range(len(theta)):
        up = theta.copy()
        dn = theta.copy()
        up[i] += h
        dn[i] -= h
        fu, fd = f(up), f(dn)
        if not (np.isfinite(fu) and np.isfinite(fd)):
            raise ValueError("non-finite loss in gradient evaluation")
        grad[i] = (fu - fd) / (2.0 * h)
    return grad


def default_init(ctx: LossContext) -> WeightSchedule:
    """Standard warm start: constant 0.1 for DPS, published rule for PiGDM."""
    S = ctx.schedule.S
    if ctx.sampler_kind == DPS:
        return WeightSchedule.dps(np.full(S, 0.1))
    return WeightSchedule.pigdm(np.ones(S), np.sqrt(1.0 - ctx.schedule.alpha_bar))


def pigdm_from_dps(zeta: np.ndarray, sigma_y: float) -> WeightSchedule:
    """PiGDM weights that reproduce a DPS schedule exactly.

    With r = 0 the PiGDM update equals DPS with zeta = g / (2 sigma^2), so
    g = 2 sigma^2 zeta maps a DPS solution into the PiGDM family; useful as a
    warm start that the PiGDM solve can only improve on.
    """
    if sigma_y <= 0:
        raise ValueError("mapping requires sigma_y > 0")
    zeta = np.asarray(zeta, dtype=float)
    return WeightSchedule.pigdm(2.0 * sigma_y**2 * zeta, np.zeros(len(zeta)))


def _pack(weights: WeightSchedule) -> np.ndarray:
    if weights.kind == DPS:
        return np.array(weights.zeta, dtype=float)
    return np.concatenate([weights.g, weights.r])


def _unpack(kind: str, theta: np.ndarray, S: int) -> WeightSchedule:
    if kind == DPS:
        return WeightSchedule.dps(theta.copy())
    return WeightSchedule.pigdm(theta[:S].copy(), theta[S:].copy())


def _bounds_list(kind: str, S: int, bounds: tuple[float, float]) -> list[tuple[float, float]]:
    lo, hi = bounds
    if kind == DPS:
        return [(lo, hi)] * S
    # r is a standard deviation: floored at zero whatever the box says.
    return [(lo, hi)] * S + [(max(lo, 0.0), hi)] * S


def _reduced_context(ctx: LossContext, keep: np.ndarray) -> LossContext:
    rprior = SpectralPrior(
        dim=len(keep), mu_f=ctx.prior.mu_f[keep], lambda0=ctx.prior.lambda0[keep]
    )
    rspec = DegradationSpec(
        dim=len(keep), lambda_h=ctx.spec.lambda_h[keep], sigma_y=ctx.spec.sigma_y
    )
    robs = None
    if ctx.observations is not None:
        robs = tuple(Observation(y_f=o.y_f[keep]) for o in ctx.observations)
    return LossContext(
        prior=rprior,
        spec=rspec,
        schedule=ctx.schedule,
        sampler_kind=ctx.sampler_kind,
        observations=robs,
        variance_spectrum=ctx.variance_spectrum,
    )


def reduce_dimensions(
    prior: SpectralPrior, spec: DegradationSpec, keep_dims: int
) -> tuple[SpectralPrior, DegradationSpec, np.ndarray]:
    """Keep the keep_dims bins with the largest prior eigenvalues.

    Ties break toward the lower index; the returned index map re-expands
    reduced results onto the full bin layout.
    """
    if not 1 <= keep_dims <= prior.dim:
        raise ValueError("keep_dims out of range")
    order = np.argsort(-prior.lambda0, kind="stable")
    keep = np.sort(order[:keep_dims])
    rprior = SpectralPrior(dim=keep_dims, mu_f=prior.mu_f[keep], lambda0=prior.lambda0[keep])
    rspec = DegradationSpec(dim=keep_dims, lambda_h=spec.lambda_h[keep], sigma_y=spec.sigma_y)
    return rprior, rspec, keep


def dropped_bin_constant(ctx: LossContext, keep: np.ndarray) -> float:
    """Loss contribution of the bins removed by eigen-truncation.

    Dropped bins have (near-)zero prior eigenvalues, where the guidance
    multipliers vanish, so their contribution equals the zero-guidance
    sampler's loss restricted to those bins.
    """
    mask = np.ones(ctx.prior.dim, dtype=bool)
    mask[keep] = False
    dropped = np.flatnonzero(mask)
    if len(dropped) == 0:
        return 0.0
    dctx = _reduced_context(ctx, dropped)
    if dctx.sampler_kind == DPS:
        theta = np.zeros(ctx.schedule.S)
    else:
        theta = np.concatenate([np.zeros(ctx.schedule.S), np.ones(ctx.schedule.S)])
    return float(batch_loss(dctx.sampler_kind, theta[None, :], dctx)[0])


def _loss_gradient(
    kind: str, ctx: LossContext, theta: np.ndarray, grad_step: float
) -> np.ndarray:
    """Central-difference gradient evaluated through the batched loss path."""
    steps = grad_step * np.maximum(1.0, np.abs(theta))
    P = len(theta)
    pts = np.repeat(theta[None, :], 2 * P, axis=0)
    idx = np.arange(P)
    pts[idx, idx] += steps
    pts[P + idx, idx] -= steps
    vals = batch_loss(kind, pts, ctx)
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite loss in gradient evaluation")
    return (vals[:P] - vals[P:]) / (2.0 * steps)


def optimize_weights(
    ctx: LossContext, init: WeightSchedule, opts: OptimizeOptions | None = None
) -> WeightSolution:
    """Minimize the context's loss over the weight schedule inside the box.

    Stops when the relative improvement drops below f_tol or after
    max_iters iterations; the returned trace lists the accepted iterates'
    losses, which are non-increasing.
    """
    opts = opts or OptimizeOptions()
    if init.kind != ctx.sampler_kind:
        raise ValueError("initial weights do not match the context's sampler kind")
    if init.steps != ctx.schedule.S:
        raise ValueError("initial weights must match the schedule length")

    work_ctx = ctx
    keep = None
    if opts.keep_dims is not None and opts.keep_dims < ctx.prior.dim:
        _, _, keep = reduce_dimensions(ctx.prior, ctx.spec, opts.keep_dims)
        work_ctx = _reduced_context(ctx, keep)

    kind = ctx.sampler_kind
    S = ctx.schedule.S
    theta0 = np.clip(_pack(init), *opts.bounds)
    if kind == PIGDM:
        theta0[S:] = np.maximum(theta0[S:], 0.0)

    def fun(theta: np.ndarray) -> float:
        return float(batch_loss(kind, theta[None, :], work_ctx)[0])

    def jac(theta: np.ndarray) -> np.ndarray:
        return _loss_gradient(kind, work_ctx, theta, opts.grad_step)

    f0 = fun(theta0)
    if not np.isfinite(f0):
        raise ValueError("invalid starting point")

    trace: list[tuple[int, float]] = [(0, f0)]

    def callback(theta: np.ndarray) -> None:
        trace.append((len(trace), fun(theta)))

    result = minimize(
        fun,
        theta0,
        jac=jac,
        method="L-BFGS-B",
        bounds=_bounds_list(kind, S, opts.bounds),
        callback=callback,
        options={"maxiter": opts.max_iters, "ftol": opts.f_tol, "maxfun": 10**7},
    )
    theta_best = np.clip(result.x, *opts.bounds)
    f_best = float(result.fun)
    if f_best > f0:
        theta_best, f_best = theta0, f0
    if keep is not None and opts.report_exact:
        f_best += dropped_bin_constant(ctx, keep)
    return WeightSolution(
        weights=_unpack(kind, theta_best, S),
        final_loss=f_best,
        iterations=int(result.nit),
        trace=tuple(trace),
    )


def _interp_to(values: np.ndarray, S_new: int) -> np.ndarray:
    """Resample a per-step vector onto S_new steps by normalized position."""
    S_old = len(values)
    pos_old = np.arange(1, S_old + 1) / S_old
    pos_new = np.arange(1, S_new + 1) / S_new
    return np.interp(pos_new, pos_old, values)


def interpolate_weights(
    weights: WeightSchedule, S_new: int, rescale_gain: bool = False
) -> WeightSchedule:
    """Resample weights onto a new step count by normalized position s/S.

    With rescale_gain the guidance gains (zeta, g) are multiplied by the step
    ratio S_old/S_new, keeping the summed guidance effect roughly constant;
    the PiGDM uncertainty r tracks the noise level and is never rescaled.
    """
    if weights.kind == DPS:
        scale = len(weights.zeta) / S_new if rescale_gain else 1.0
        return WeightSchedule.dps(scale * _interp_to(weights.zeta, S_new))
    scale = len(weights.g) / S_new if rescale_gain else 1.0
    return WeightSchedule.pigdm(scale * _interp_to(weights.g, S_new), _interp_to(weights.r, S_new))


def iterative_ladder(ctx: LossContext, opts: OptimizeOptions) -> WeightSolution:
    """Solve progressively over increasing step counts, warm-starting each rung.

    Every rung solves from the interpolated previous solution and from the
    default initialization, keeping the better result: warm starts converge
    fast when the basin transfers across step counts but can drift into worse
    local minima, and retrying the default start caps that risk.
    """
    if not opts.ladder:
        raise ValueError("empty ladder")
    ladder = list(opts.ladder)
    if any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("ladder must be strictly increasing")
    if ladder[-1] != ctx.schedule.S:
        raise ValueError("ladder must end at the target step count")

    full = linear_ddpm_schedule(ctx.schedule.T_full)
    weights = None
    solution = None
    for rung, S_r in enumerate(ladder):
        # The final rung must use the caller's schedule verbatim so losses stay
        # comparable even when it was not built by the default subsequencing.
        sched_r = ctx.schedule if rung == len(ladder) - 1 else ddim_subsequence(full, S_r)
        rung_ctx = LossContext(
            prior=ctx.prior,
            spec=ctx.spec,
            schedule=sched_r,
            sampler_kind=ctx.sampler_kind,
            observations=ctx.observations,
            variance_spectrum=ctx.variance_spectrum,
        )
        inits = [default_init(rung_ctx)]
        if weights is not None:
            inits.append(interpolate_weights(weights, sched_r.S, rescale_gain=True))
        candidates = [optimize_weights(rung_ctx, init, opts) for init in inits]
        solution = min(candidates, key=lambda sol: sol.final_loss)
        weights = solution.weights
    return solution
