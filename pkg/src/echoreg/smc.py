"""Sequential Monte Carlo rigid registration.

The optimizer keeps N candidate transforms (particles) with weights, and
iterates: perturb each particle with annealed Gaussian noise, score it by
resampling the source onto the target grid and taking the squared NCC,
reweight multiplicatively by exp(beta * score), resample the population when
the effective sample size drops, and report the weighted-mean state.

Randomness uses counter-based Philox streams keyed by (seed, role,
iteration, particle index), so any worker count, and any evaluation order,
reproduces the same run bit for bit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .backend import Executor
from .errors import BadConfig
from .geometry import RigidParams, to_matrix
from .metrics import MetricValue, dice_under_transform
from .volume import Volume3, is_binary

log = logging.getLogger(__name__)

# Stream roles for the counter-based RNG.
_ROLE_INIT = 0
_ROLE_PREDICT = 1
_ROLE_RESAMPLE = 2

WEIGHT_SUM_TOL = 1e-9


def _stream(seed: int, role: int, step: int, index: int) -> np.random.Generator:
    """Independent Philox stream for one (role, iteration, particle) event."""
    return np.random.Generator(
        np.random.Philox(key=seed, counter=[0, role, step, index])
    )


@dataclass(frozen=True)
class SmcConfig:
    """All optimizer knobs.  Angles here are degrees (external convention);
    particle states are kept in radians internally."""

    n_particles: int = 256
    n_iterations: int = 50
    t_limit: float = 20.0       # mm, per axis
    r_limit: float = 15.0       # degrees, per axis
    sigma0_t: float = 2.0       # mm
    sigma0_r: float = 2.0       # degrees
    anneal_gamma: float = 0.95
    beta: float = 50.0
    ess_fraction: float = 0.5
    seed: int = 0
    mode: str = "image"                 # image | mask
    estimate: str = "weighted_mean"     # weighted_mean | best_particle
    ncc_region: str = "full"            # full | overlap

    def validate(self):
        if self.n_particles < 1:
            raise BadConfig(f"n_particles must be >= 1, got {self.n_particles}")
        if self.n_iterations < 1:
            raise BadConfig(f"n_iterations must be >= 1, got {self.n_iterations}")
        if self.t_limit <= 0 or self.r_limit <= 0:
            raise BadConfig(
                f"limits must be positive, got t_limit={self.t_limit}, "
                f"r_limit={self.r_limit}"
            )
        if self.sigma0_t < 0 or self.sigma0_r < 0:
            raise BadConfig("noise sigmas must be >= 0")
        if not (0.0 < self.anneal_gamma <= 1.0):
            raise BadConfig(f"anneal_gamma must be in (0, 1], got {self.anneal_gamma}")
        if self.beta < 0:
            raise BadConfig(f"beta must be >= 0, got {self.beta}")
        if not (0.0 < self.ess_fraction <= 1.0):
            raise BadConfig(f"ess_fraction must be in (0, 1], got {self.ess_fraction}")
        if self.seed < 0:
            raise BadConfig(f"seed must be >= 0, got {self.seed}")
        if self.mode not in ("image", "mask"):
            raise BadConfig(f"mode must be image or mask, got {self.mode!r}")
        if self.estimate not in ("weighted_mean", "best_particle"):
            raise BadConfig(f"unknown estimate mode {self.estimate!r}")
        if self.ncc_region not in ("full", "overlap"):
            raise BadConfig(f"ncc_region must be full or overlap, got {self.ncc_region!r}")

    def state_limits(self) -> np.ndarray:
        """Per-column initialization half-widths (radians, mm)."""
        r = math.radians(self.r_limit)
        return np.array([r, r, r, self.t_limit, self.t_limit, self.t_limit])

    def state_sigma0(self) -> np.ndarray:
        sr = math.radians(self.sigma0_r)
        return np.array([sr, sr, sr, self.sigma0_t, self.sigma0_t, self.sigma0_t])


@dataclass(frozen=True)
class Particle:
    state: RigidParams
    weight: float
    measurement: float


@dataclass
class ParticleSet:
    """N particle states with weights and measurements (struct of arrays).

    State columns are (rx, ry, rz, tx, ty, tz) in radians and mm.  The best
    measurement ever observed and its state are tracked across the run.
    """

    states: np.ndarray
    weights: np.ndarray
    measurements: np.ndarray
    iteration: int = 0
    rng_seed: int = 0
    best_state: np.ndarray | None = None
    best_measurement: float = -1.0

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def particles(self) -> list[Particle]:
        return [
            Particle(
                RigidParams.from_array(self.states[i]),
                float(self.weights[i]),
                float(self.measurements[i]),
            )
            for i in range(self.n)
        ]

    def check_weights(self):
        total = float(self.weights.sum())
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise AssertionError(f"weights sum to {total}, not 1")


def init_particles(cfg: SmcConfig) -> ParticleSet:
    """Uniform draw over the search box, uniform weights."""
    cfg.validate()
    lim = cfg.state_limits()
    gen = _stream(cfg.seed, _ROLE_INIT, 0, 0)
    states = gen.uniform(-lim, lim, size=(cfg.n_particles, 6))
    return ParticleSet(
        states=states,
        weights=np.full(cfg.n_particles, 1.0 / cfg.n_particles),
        measurements=np.zeros(cfg.n_particles),
        iteration=0,
        rng_seed=cfg.seed,
    )


def predict(ps: ParticleSet, cfg: SmcConfig) -> ParticleSet:
    """Perturb every state with annealed Gaussian noise, sigma0 * gamma^k.

    Each particle draws from its own (seed, iteration, index) stream, then
    states are clamped to twice the initialization box.
    """
    k = ps.iteration
    sigma = cfg.state_sigma0() * (cfg.anneal_gamma ** k)
    lim = 2.0 * cfg.state_limits()
    states = ps.states.copy()
    for i in range(ps.n):
        noise = _stream(ps.rng_seed, _ROLE_PREDICT, k, i).standard_normal(6)
        states[i] += sigma * noise
    np.clip(states, -lim, lim, out=states)
    return replace(ps, states=states)


def measure(
    ps: ParticleSet,
    target: Volume3,
    source: Volume3,
    cfg: SmcConfig,
    executor: Executor,
) -> ParticleSet:
    """Score every particle: squared NCC of the target against the source
    pulled through the particle's transform (rotation about the target
    center).  Particles whose transform leaves a constant or empty overlap
    score 0 instead of aborting the run."""
    center = target.physical_center()
    mats = np.stack(
        [to_matrix(RigidParams.from_array(row), center) for row in ps.states]
    )
    scores, degenerate = executor.measure_ncc(
        target, source, mats, overlap_only=(cfg.ncc_region == "overlap")
    )
    if degenerate.any():
        log.warning(
            "iteration %d: %d of %d particles had degenerate overlap, scored 0",
            ps.iteration,
            int(degenerate.sum()),
            ps.n,
        )
    out = replace(ps, measurements=scores)
    top = int(np.argmax(scores))
    if float(scores[top]) > out.best_measurement:
        out.best_measurement = float(scores[top])
        out.best_state = ps.states[top].copy()
    return out


def update_weights(ps: ParticleSet, cfg: SmcConfig) -> ParticleSet:
    """Multiply weights by exp(beta * measurement) and renormalize.

    Evaluated with a max shift for stability; a vanished normalizer resets
    the weights to uniform.
    """
    logw = cfg.beta * ps.measurements
    w = ps.weights * np.exp(logw - logw.max())
    total = float(w.sum())
    if not math.isfinite(total) or total <= 0.0:
        log.warning("weight normalizer underflowed; weights reset to uniform")
        w = np.full(ps.n, 1.0 / ps.n)
    else:
        w = w / total
    return replace(ps, weights=w)


def ess(ps: ParticleSet) -> float:
    """Effective sample size 1 / sum(w^2), in [1, N]."""
    return float(1.0 / (ps.weights @ ps.weights))


def resample_systematic(ps: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    """Systematic resampling with one uniform offset in [0, 1/N).

    Copy counts of particle i land in {floor(N w_i), ceil(N w_i)}; output
    weights are uniform.
    """
    n = ps.n
    u0 = rng.uniform(0.0, 1.0 / n)
    positions = u0 + np.arange(n) / n
    cumw = np.cumsum(ps.weights)
    idx = np.minimum(np.searchsorted(cumw, positions, side="right"), n - 1)
    return replace(
        ps,
        states=ps.states[idx].copy(),
        weights=np.full(n, 1.0 / n),
        measurements=ps.measurements[idx].copy(),
    )


def estimate(ps: ParticleSet, cfg: SmcConfig) -> RigidParams:
    """Point estimate: weight-averaged state, or the best particle ever seen.

    Angles are averaged in radians; the box limits keep them far from the
    wrap point, so no circular averaging is needed.
    """
    if cfg.estimate == "best_particle" and ps.best_state is not None:
        return RigidParams.from_array(ps.best_state)
    return RigidParams.from_array(ps.weights @ ps.states)


@dataclass
class SmcTrace:
    """Per-iteration history of one registration run."""

    estimates: list[RigidParams] = field(default_factory=list)
    mean_measurement: list[float] = field(default_factory=list)
    max_measurement: list[float] = field(default_factory=list)
    best_measurement: list[float] = field(default_factory=list)
    ess: list[float] = field(default_factory=list)
    resampled: list[bool] = field(default_factory=list)
    dsc: list[float | None] = field(default_factory=list)
    best_particle: RigidParams | None = None

    def __len__(self) -> int:
        return len(self.estimates)

    def to_dict(self) -> dict:
        return {
            "estimates_deg_mm": [
                _params_external(p) for p in self.estimates
            ],
            "mean_measurement": self.mean_measurement,
            "max_measurement": self.max_measurement,
            "best_measurement": self.best_measurement,
            "ess": self.ess,
            "resampled": self.resampled,
            "dsc": self.dsc,
            "best_particle_deg_mm": (
                _params_external(self.best_particle)
                if self.best_particle is not None
                else None
            ),
        }


def _params_external(p: RigidParams) -> dict:
    """Degrees/millimetres form used in every report and trace."""
    return {
        "rx_deg": math.degrees(p.rx),
        "ry_deg": math.degrees(p.ry),
        "rz_deg": math.degrees(p.rz),
        "tx_mm": p.tx,
        "ty_mm": p.ty,
        "tz_mm": p.tz,
    }


def _check_inputs(target: Volume3, source: Volume3, cfg: SmcConfig):
    if cfg.mode == "image":
        for name, v in (("target", target), ("source", source)):
            mean = float(v.data.mean())
            std = float(v.data.std())
            if abs(mean) > 1e-3 or abs(std - 1.0) > 1e-3:
                raise BadConfig(
                    f"image-mode {name} must be z-normalized "
                    f"(mean {mean:.3g}, std {std:.3g}); run normalize_zscore first"
                )
    else:
        for name, v in (("target", target), ("source", source)):
            if not is_binary(v):
                raise BadConfig(f"mask-mode {name} must be a binary mask")


def register_smc(
    target: Volume3,
    source: Volume3,
    cfg: SmcConfig,
    executor: Executor | None = None,
    trace_masks: tuple[Volume3, Volume3] | None = None,
) -> tuple[RigidParams, SmcTrace]:
    """Run the full particle-filter loop and return (estimate, trace).

    trace_masks, when given as (target_mask, source_mask), adds a Dice score
    of the per-iteration estimate to the trace (used for image-based runs
    where masks exist only for validation).

    Deterministic given (cfg.seed, inputs) for any executor worker count.
    """
    cfg.validate()
    _check_inputs(target, source, cfg)
    executor = executor or Executor()
    center = target.physical_center()
    ps = init_particles(cfg)
    trace = SmcTrace()
    for k in range(cfg.n_iterations):
        ps.iteration = k
        ps = predict(ps, cfg)
        ps = measure(ps, target, source, cfg, executor)
        ps = update_weights(ps, cfg)
        ps.check_weights()
        sample_size = ess(ps)
        fire = sample_size < cfg.ess_fraction * ps.n
        if fire:
            ps = resample_systematic(
                ps, _stream(cfg.seed, _ROLE_RESAMPLE, k, 0)
            )
        current = estimate(ps, cfg)
        trace.estimates.append(current)
        trace.mean_measurement.append(float(ps.measurements.mean()))
        trace.max_measurement.append(float(ps.measurements.max()))
        trace.best_measurement.append(ps.best_measurement)
        trace.ess.append(sample_size)
        trace.resampled.append(bool(fire))
        if trace_masks is not None:
            tm, sm = trace_masks
            score = dice_under_transform(sm, tm, to_matrix(current, center))
            trace.dsc.append(float(score))
        else:
            trace.dsc.append(None)
    if ps.best_state is not None:
        trace.best_particle = RigidParams.from_array(ps.best_state)
    return trace.estimates[-1], trace
