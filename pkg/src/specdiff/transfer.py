"""One-step and composed transfer functions of guided DDIM samplers.

Each guided sampler's spectral update has the per-frequency form
``x[s-1] = G(s) x[s] + Q(s) y + M(s) mu``; composing the S steps yields a
triple (D1, D2, D3) mapping the starting noise, the measurement, and the
prior mean straight to the output, whose distribution is then Gaussian with
mean D2 y + D3 mu and per-bin variance |D1|^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schedule import Schedule, StepCoeffs, step_coeffs
from .spectral import DegradationSpec, DiagGaussian, Observation, SpectralPrior

__all__ = [
    "DPS",
    "PIGDM",
    "WeightSchedule",
    "StepTransfer",
    "TransferTriple",
    "prior_optimal_denoise",
    "posterior_optimal_denoise",
    "dps_step_transfer",
    "pigdm_step_transfer",
    "optimal_step_transfer",
    "compose_transfer",
    "output_distribution",
    "sampler_step_transfers",
    "ideal_step_transfers",
    "transfer_triple",
    "ideal_triple",
    "pigdm_heuristic_weights",
]

DPS = "dps"
PIGDM = "pigdm"


@dataclass(frozen=True)
class WeightSchedule:
    """Per-step guidance weights: zeta for DPS, (g, r) for PiGDM."""

    kind: str
    zeta: np.ndarray | None = None
    g: np.ndarray | None = None
    r: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == DPS:
            if self.zeta is None:
                raise ValueError("DPS weights require zeta")
            object.__setattr__(self, "zeta", np.asarray(self.zeta, dtype=float))
        elif self.kind == PIGDM:
            if self.g is None or self.r is None:
                raise ValueError("PiGDM weights require g and r")
            g = np.asarray(self.g, dtype=float)
            r = np.asarray(self.r, dtype=float)
            if g.shape != r.shape:
                raise ValueError("g and r must have the same length")
            if np.any(r < 0):
                raise ValueError("r must be nonnegative")
            object.__setattr__(self, "g", g)
            object.__setattr__(self, "r", r)
        else:
            raise ValueError(f"unknown sampler kind: {self.kind}")

    @classmethod
    def dps(cls, zeta) -> "WeightSchedule":
        return cls(kind=DPS, zeta=zeta)

    @classmethod
    def pigdm(cls, g, r) -> "WeightSchedule":
        return cls(kind=PIGDM, g=g, r=r)

    @property
    def steps(self) -> int:
        return len(self.zeta) if self.kind == DPS else len(self.g)


@dataclass(frozen=True)
class StepTransfer:
    """Per-frequency multipliers of one sampler update."""

    G: np.ndarray
    Q: np.ndarray
    M: np.ndarray


@dataclass(frozen=True)
class TransferTriple:
    """Per-frequency multipliers of the fully composed sampler."""

    D1: np.ndarray
    D2: np.ndarray
    D3: np.ndarray


def prior_optimal_denoise(
    prior: SpectralPrior, x_t_f: np.ndarray, alpha_bar_t: float
) -> np.ndarray:
    """MMSE denoiser under the prior alone, applied per frequency.

    At alpha_bar = 1 the dead bins (lambda = 0) pass the input through,
    which is the correct noise-free limit.
    """
    if not 0.0 <= alpha_bar_t <= 1.0:
        raise ValueError("alpha_bar_t must lie in [0, 1]")
    lam = prior.lambda0
    den = alpha_bar_t * lam + (1.0 - alpha_bar_t)
    dead = den == 0
    safe = np.where(dead, 1.0, den)
    num = np.sqrt(alpha_bar_t) * lam * x_t_f + (1.0 - alpha_bar_t) * prior.mu_f
    return np.where(dead, x_t_f, num / safe)


def posterior_optimal_denoise(
    prior: SpectralPrior,
    spec: DegradationSpec,
    y_f: np.ndarray,
    x_t_f: np.ndarray,
    alpha_bar_t: float,
) -> np.ndarray:
    """MAP (= Wiener) denoiser given both the noisy state and the measurement."""
    if spec.sigma_y <= 0:
        raise ValueError("posterior denoiser requires sigma_y > 0")
    lam = prior.lambda0
    h = spec.lambda_h
    sig2 = spec.sigma_y**2
    ab = alpha_bar_t
    den = (1.0 - ab) * lam * np.abs(h) ** 2 + sig2 * ab * lam + sig2 * (1.0 - ab)
    if np.any(den == 0):
        raise ValueError("zero denominator bin")
    num = (
        (1.0 - ab) * lam * np.conj(h) * y_f
        + sig2 * np.sqrt(ab) * lam * x_t_f
        + sig2 * (1.0 - ab) * prior.mu_f
    )
    return num / den


def dps_step_transfer(
    coeffs: StepCoeffs, spec: DegradationSpec, zeta_s: float
) -> StepTransfer:
    """One DPS update in the spectral domain."""
    c, d = coeffs.c_s, coeffs.d_s
    hbar = np.conj(spec.lambda_h)
    habs2 = np.abs(spec.lambda_h) ** 2
    G = coeffs.a_s + coeffs.b_s * c - 2.0 * zeta_s * c**2 * habs2
    Q = 2.0 * zeta_s * c * hbar
    M = coeffs.b_s * d - 2.0 * zeta_s * c * habs2 * d
    return StepTransfer(G=G.astype(complex), Q=Q.astype(complex), M=M.astype(complex))


def pigdm_step_transfer(
    coeffs: StepCoeffs, spec: DegradationSpec, g_s: float, r_s: float
) -> StepTransfer:
    """One PiGDM update in the spectral domain.

    The likelihood covariance r^2 H H^T + sigma^2 I enters as the per-bin
    factor e = 1 / (r^2 |h|^2 + sigma^2).
    """
    habs2 = np.abs(spec.lambda_h) ** 2
    eden = r_s**2 * habs2 + spec.sigma_y**2
    if np.any(eden == 0):
        raise ValueError("zero likelihood-covariance bin")
    e = 1.0 / eden
    c, d = coeffs.c_s, coeffs.d_s
    hbar = np.conj(spec.lambda_h)
    G = coeffs.a_s + coeffs.b_s * c - g_s * c**2 * habs2 * e
    Q = g_s * c * hbar * e
    M = coeffs.b_s * d - g_s * c * habs2 * e * d
    return StepTransfer(G=G.astype(complex), Q=Q.astype(complex), M=M.astype(complex))


def optimal_step_transfer(
    coeffs: StepCoeffs,
    spec: DegradationSpec,
    prior: SpectralPrior,
    alpha_bar_s: float,
) -> StepTransfer:
    """One DDIM update driven by the MAP denoiser, in the spectral domain."""
    lam = prior.lambda0
    habs2 = np.abs(spec.lambda_h) ** 2
    sig2 = spec.sigma_y**2
    ab = alpha_bar_s
    lam_sum = (1.0 - ab) * lam * habs2 + sig2 * ab * lam + sig2 * (1.0 - ab)
    if np.any(lam_sum == 0):
        raise ValueError("zero denominator bin")
    a, b = coeffs.a_s, coeffs.b_s
    G = a + b * sig2 * np.sqrt(ab) * lam / lam_sum
    Q = b * (1.0 - ab) * lam * np.conj(spec.lambda_h) / lam_sum
    M = b * sig2 * (1.0 - ab) / lam_sum
    return StepTransfer(G=G.astype(complex), Q=Q.astype(complex), M=M.astype(complex))


def compose_transfer(steps: list[StepTransfer]) -> TransferTriple:
    """Compose per-step transfers into a single triple.

    ``steps`` must be ordered as they are applied, s = S first down to s = 1.
    The running state follows (p, q, m) <- (G p, G q + Q, G m + M) from
    (1, 0, 0), which reproduces the product-sum closed form because the
    per-bin factors commute.
    """
    if not steps:
        raise ValueError("empty step list")
    d = len(steps[0].G)
    p = np.ones(d, dtype=complex)
    q = np.zeros(d, dtype=complex)
    m = np.zeros(d, dtype=complex)
    for st in steps:
        p = st.G * p
        q = st.G * q + st.Q
        m = st.G * m + st.M
    return TransferTriple(D1=p, D2=q, D3=m)


def output_distribution(
    triple: TransferTriple, obs: Observation, prior: SpectralPrior
) -> DiagGaussian:
    """Gaussian law of the sampler output for a fixed measurement."""
    mean = triple.D2 * obs.y_f + triple.D3 * prior.mu_f
    var = np.abs(triple.D1) ** 2
    return DiagGaussian(mean=mean, var=var)


def sampler_step_transfers(
    weights: WeightSchedule,
    prior: SpectralPrior,
    spec: DegradationSpec,
    sched: Schedule,
) -> list[StepTransfer]:
    """Per-step transfers for a weighted sampler, in sampling order s = S..1."""
    if weights.steps != sched.S:
        raise ValueError("weight vector length must match the schedule")
    steps = []
    for s in range(sched.S, 0, -1):
        coeffs = step_coeffs(sched, s, prior)
        if weights.kind == DPS:
            steps.append(dps_step_transfer(coeffs, spec, float(weights.zeta[s - 1])))
        else:
            steps.append(
                pigdm_step_transfer(
                    coeffs, spec, float(weights.g[s - 1]), float(weights.r[s - 1])
                )
            )
    return steps


def ideal_step_transfers(
    prior: SpectralPrior, spec: DegradationSpec, sched: Schedule
) -> list[StepTransfer]:
    """Per-step transfers of the MAP-denoiser sampler, s = S..1."""
    return [
        optimal_step_transfer(step_coeffs(sched, s, prior), spec, prior, sched.at(s))
        for s in range(sched.S, 0, -1)
    ]


def transfer_triple(
    weights: WeightSchedule,
    prior: SpectralPrior,
    spec: DegradationSpec,
    sched: Schedule,
) -> TransferTriple:
    """Composed triple of a weighted sampler."""
    return compose_transfer(sampler_step_transfers(weights, prior, spec, sched))


def ideal_triple(
    prior: SpectralPrior, spec: DegradationSpec, sched: Schedule
) -> TransferTriple:
    """Composed triple of the MAP-denoiser sampler."""
    return compose_transfer(ideal_step_transfers(prior, spec, sched))


def pigdm_heuristic_weights(sched: Schedule) -> WeightSchedule:
    """The published PiGDM weighting: unit gain, r tied to the noise level."""
    return WeightSchedule.pigdm(
        g=np.ones(sched.S), r=np.sqrt(1.0 - sched.alpha_bar)
    )
