"""Synthetic ground-truth systems.

The centerpiece is a reduced 2-DoF tendon-driven snake plant,

    B qddot = tau - g * sin(q) - c_v qdot - c_c tanh(qdot / eps_c),

with a constant (weakly coupled) inertia matrix, antagonistic tendon
pairs tau = r (f1 - f3, f2 - f4), and joint stops at +-pi/2. The sin
gravity term and the smoothed Coulomb friction are the nonlinearities a
linear model cannot capture, which is exactly what the identification
comparisons probe.

Also here: seeded random LTI / ARX / sparse-nonlinear generators used as
known-truth oracles by the identification tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, TimeSeries
from .errors import DataError, NumericError
from .library import LibrarySpec, library_terms
from .models import ArxModel, SindyModel, StateSpaceModel

# Coulomb smoothing velocity scale, rad/s; keeps the ODE Lipschitz.
COULOMB_EPS = 1e-3

JOINT_LIMIT = math.pi / 2


@dataclass(frozen=True)
class SnakePlantConfig:
    inertia_diag: tuple[float, float] = (0.006, 0.005)
    gravity_gain: tuple[float, float] = (2.2, 2.0)
    viscous_coeff: tuple[float, float] = (0.70, 0.68)
    coulomb_coeff: tuple[float, float] = (0.003, 0.003)
    moment_arm_m: float = 0.025
    coupling_eps: float = 0.15
    force_bias_N: float = 105.0

    def __post_init__(self):
        if min(self.inertia_diag) <= 0:
            raise DataError("inertia_diag must be positive")
        if self.moment_arm_m <= 0:
            raise DataError("moment_arm_m must be positive")
        if min(self.viscous_coeff) < 0 or min(self.coulomb_coeff) < 0:
            raise DataError("friction coefficients must be nonnegative")
        if min(self.gravity_gain) < 0:
            raise DataError("gravity_gain must be nonnegative")
        if not 0.0 <= self.coupling_eps < 0.5:
            raise DataError("coupling_eps must lie in [0, 0.5)")
        if self.force_bias_N < 0:
            raise DataError("force_bias_N must be nonnegative")

    @property
    def inertia_matrix(self) -> np.ndarray:
        b1, b2 = self.inertia_diag
        b12 = self.coupling_eps * math.sqrt(b1 * b2)
        return np.array([[b1, b12], [b12, b2]])


@dataclass
class PlantState:
    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).ravel()
        self.qdot = np.asarray(self.qdot, dtype=float).ravel()
        if self.q.shape != (2,) or self.qdot.shape != (2,):
            raise DataError("PlantState holds 2-vectors q and qdot")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qdot))):
            raise NumericError("plant state is not finite")
        if np.any(np.abs(self.q) > JOINT_LIMIT + 1e-12):
            raise DataError("|q| exceeds the pi/2 mechanical stop")


def plant_rest() -> PlantState:
    return PlantState(np.zeros(2), np.zeros(2))


def tendon_to_torque(forces, cfg: SnakePlantConfig) -> np.ndarray:
    """Antagonistic pair difference times the moment arm.

    Pairs are (f1, f3) for the pan axis and (f2, f4) for tilt; equal pair
    tensions give zero torque, fixing the gauge freedom of the tendon
    tension distribution.
    """
    f = np.asarray(forces, dtype=float).ravel()
    if f.shape != (4,):
        raise DataError(f"expected 4 tendon forces, got shape {f.shape}")
    if np.any(f < 0):
        raise DataError("tendon forces must be nonnegative")
    r = cfg.moment_arm_m
    return np.array([r * (f[0] - f[2]), r * (f[1] - f[3])])


def _substep_cap(cfg: SnakePlantConfig) -> float:
    """Largest explicit substep that keeps the stiff friction term stable.

    The smoothed Coulomb slope c_c / eps_c acts like a huge viscous
    coefficient near qdot = 0; the cap keeps dt * slope / lambda_min(B)
    well inside the explicit-Euler stability region.
    """
    b1, b2 = cfg.inertia_diag
    b12 = cfg.coupling_eps * math.sqrt(b1 * b2)
    lam_min = 0.5 * (b1 + b2) - math.sqrt(0.25 * (b1 - b2) ** 2 + b12 * b12)
    slope = max(cfg.viscous_coeff[i] + cfg.coulomb_coeff[i] / COULOMB_EPS
                for i in range(2))
    if slope <= 0:
        return 1e-3
    return min(1e-3, 0.2 * lam_min / slope)


def plant_step(state: PlantState, forces, dt: float,
               cfg: SnakePlantConfig) -> PlantState:
    """Advance one sample interval by substepped semi-implicit Euler.

    Joint stops at +-pi/2 clamp the angle and zero any outward velocity.
    """
    if not 0 < dt <= 0.05:
        raise DataError(f"dt must lie in (0, 0.05], got {dt}")
    tau = tendon_to_torque(forces, cfg)
    n_sub = max(1, math.ceil(dt / _substep_cap(cfg)))
    h = dt / n_sub

    # scalar unpacking: the substep loop runs hot, numpy overhead dominates
    b1, b2 = cfg.inertia_diag
    b12 = cfg.coupling_eps * math.sqrt(b1 * b2)
    det = b1 * b2 - b12 * b12
    i11, i12, i22 = b2 / det, -b12 / det, b1 / det
    g1, g2 = cfg.gravity_gain
    cv1, cv2 = cfg.viscous_coeff
    cc1, cc2 = cfg.coulomb_coeff
    t1, t2 = tau
    q1, q2 = state.q
    v1, v2 = state.qdot

    for _ in range(n_sub):
        r1 = t1 - g1 * math.sin(q1) - cv1 * v1 - cc1 * math.tanh(v1 / COULOMB_EPS)
        r2 = t2 - g2 * math.sin(q2) - cv2 * v2 - cc2 * math.tanh(v2 / COULOMB_EPS)
        v1 += h * (i11 * r1 + i12 * r2)
        v2 += h * (i12 * r1 + i22 * r2)
        q1 += h * v1
        q2 += h * v2
        if q1 > JOINT_LIMIT:
            q1, v1 = JOINT_LIMIT, min(v1, 0.0)
        elif q1 < -JOINT_LIMIT:
            q1, v1 = -JOINT_LIMIT, max(v1, 0.0)
        if q2 > JOINT_LIMIT:
            q2, v2 = JOINT_LIMIT, min(v2, 0.0)
        elif q2 < -JOINT_LIMIT:
            q2, v2 = -JOINT_LIMIT, max(v2, 0.0)

    if not all(map(math.isfinite, (q1, q2, v1, v2))):
        raise NumericError("plant state became non-finite during integration")
    return PlantState(np.array([q1, q2]), np.array([v1, v2]))


def plant_energy(state: PlantState, cfg: SnakePlantConfig) -> float:
    """Kinetic plus pendulum potential, the bookkeeping for dissipation tests."""
    ke = 0.5 * float(state.qdot @ cfg.inertia_matrix @ state.qdot)
    pe = sum(g * (1.0 - math.cos(q)) for g, q in zip(cfg.gravity_gain, state.q))
    return ke + pe


def simulate_plant(cfg: SnakePlantConfig, U: TimeSeries,
                   initial: PlantState | None = None) -> Dataset:
    """Zero-order-hold rollout; output y_k is the joint pair q at sample k.

    y_0 is the initial configuration, so inputs act with one sample of
    delay, matching how the data logger on a real rig would align records.
    """
    if U.num_channels != 4:
        raise DataError(f"plant takes 4 force channels, got {U.num_channels}")
    state = plant_rest() if initial is None else initial
    m = U.num_samples
    Y = np.zeros((m, 2))
    for k in range(m):
        Y[k] = state.q
        if k + 1 < m:
            state = plant_step(state, U.values[k], U.sample_time_s, cfg)
    outputs = TimeSeries(U.sample_time_s, Y, ["y1", "y2"])
    return Dataset(U, outputs)


@dataclass(frozen=True)
class ExcitationSpec:
    kind: str = "multisine"
    duration_s: float = 120.0
    amplitude_N: float = 56.0
    seed: int = 0
    bias_N: float = 105.0

    def __post_init__(self):
        if self.kind not in ("multisine", "prbs", "circle_sweep"):
            raise DataError(f"unknown excitation kind {self.kind!r}")
        if self.duration_s <= 0:
            raise DataError("duration_s must be positive")
        if self.amplitude_N < 0:
            raise DataError("amplitude_N must be nonnegative")
        if self.amplitude_N > self.bias_N:
            raise DataError(
                f"amplitude {self.amplitude_N} N exceeds bias {self.bias_N} N; "
                "tendon forces would go negative"
            )


def _multisine_channel(rng, t: np.ndarray, amplitude: float) -> np.ndarray:
    """Phase-randomized multisine, peak-normalized to the exact amplitude."""
    freqs = np.geomspace(0.05, 3.0, 8)
    phases = rng.uniform(0, 2 * np.pi, size=freqs.shape)
    e = np.sum(np.sin(2 * np.pi * freqs[:, None] * t[None, :]
                      + phases[:, None]), axis=0)
    peak = np.max(np.abs(e))
    if peak > 0 and amplitude > 0:
        return amplitude * e / peak
    return np.zeros_like(t)


def _prbs_channel(rng, m: int, amplitude: float, switch_prob: float = 0.08) -> np.ndarray:
    sign = 1.0 if rng.random() < 0.5 else -1.0
    out = np.zeros(m)
    flips = rng.random(m) < switch_prob
    for k in range(m):
        if flips[k]:
            sign = -sign
        out[k] = sign * amplitude
    return out


def generate_excitation(spec: ExcitationSpec, sample_time_s: float) -> TimeSeries:
    """4-channel tendon force record: bias plus a deterministic excitation.

    multisine and prbs drive the four tendons independently so the input
    block-Hankel matrix used by subspace identification reaches full row
    rank (strictly antagonistic channels are perfectly anticorrelated and
    never can). circle_sweep coordinates the pairs (f1, f3) and (f2, f4)
    antagonistically to trace growing torque-plane circles, mirroring how
    an end-effector workspace sweep is commanded. All samples stay in
    [bias - amplitude, bias + amplitude].
    """
    if sample_time_s <= 0:
        raise DataError("sample_time_s must be positive")
    m = max(2, int(round(spec.duration_s / sample_time_s)))
    t = np.arange(m) * sample_time_s
    rng = np.random.default_rng(spec.seed)
    a = spec.amplitude_N

    if spec.kind == "multisine":
        e = np.column_stack([_multisine_channel(rng, t, a) for _ in range(4)])
    elif spec.kind == "prbs":
        e = np.column_stack([_prbs_channel(rng, m, a) for _ in range(4)])
    else:  # circle_sweep: growing-radius circles in the torque plane
        n_circles = 12
        seg = m / n_circles
        phase0 = rng.uniform(0, 2 * np.pi)
        e1 = np.zeros(m)
        e2 = np.zeros(m)
        for j in range(n_circles):
            lo = int(round(j * seg))
            hi = m if j == n_circles - 1 else int(round((j + 1) * seg))
            radius = a * (j + 1) / n_circles
            # two revolutions per segment
            omega = 2 * np.pi * 2 / (max(hi - lo, 1) * sample_time_s)
            tl = (np.arange(lo, hi) - lo) * sample_time_s
            e1[lo:hi] = radius * np.cos(omega * tl + phase0)
            e2[lo:hi] = radius * np.sin(omega * tl + phase0)
        e = np.column_stack([e1, e2, -e1, -e2])

    F = spec.bias_N + e
    return TimeSeries(sample_time_s, F, ["u1", "u2", "u3", "u4"])


MAX_RESAMPLE = 100


def make_random_lti(seed: int, n: int = 4, p: int = 2, q: int = 2,
                    sample_time_s: float = 0.03) -> StateSpaceModel:
    """Random stable, controllable, observable discrete LTI system.

    Spectral radius rescaled to at most 0.95; controllability and
    observability verified by SVD rank checks with resampling.
    """
    if min(n, p, q) < 1:
        raise DataError("n, p, q must all be at least 1")
    rng = np.random.default_rng(seed)
    for _ in range(MAX_RESAMPLE):
        A = rng.standard_normal((n, n)) / math.sqrt(n)
        rho = np.max(np.abs(np.linalg.eigvals(A)))
        if rho > 0.95:
            A *= 0.95 / rho
        B = rng.standard_normal((n, p))
        C = rng.standard_normal((q, n))
        D = 0.1 * rng.standard_normal((q, p))
        ctrb = np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(n)])
        obsv = np.vstack([C @ np.linalg.matrix_power(A, k) for k in range(n)])
        s_c = np.linalg.svd(ctrb, compute_uv=False)
        s_o = np.linalg.svd(obsv, compute_uv=False)
        if s_c[-1] > 1e-8 * s_c[0] and s_o[-1] > 1e-8 * s_o[0]:
            return StateSpaceModel(A, B, C, D, sample_time_s)
    raise NumericError(f"no admissible LTI system after {MAX_RESAMPLE} draws")


def make_random_arx(seed: int, na: int = 3, nb: int = 3, p: int = 2, q: int = 2,
                    delay: int = 1, sample_time_s: float = 0.03) -> ArxModel:
    """Random stable MIMO ARX truth for recovery tests.

    Stability is checked on the companion form of the vector AR part
    (spectral radius < 0.97), with bounded rejection sampling.
    """
    rng = np.random.default_rng(seed)
    for _ in range(MAX_RESAMPLE):
        a = rng.standard_normal((na, q, q)) * (0.5 / (na * math.sqrt(q)))
        comp = np.zeros((na * q, na * q))
        for i in range(na):
            comp[:q, i * q:(i + 1) * q] = -a[i]
        if na > 1:
            comp[q:, :-q] = np.eye((na - 1) * q)
        if np.max(np.abs(np.linalg.eigvals(comp))) < 0.97:
            b = rng.standard_normal((nb, q, p))
            b /= np.linalg.norm(b)
            return ArxModel.uniform(a, b, delay, sample_time_s)
    raise NumericError(f"no stable ARX system after {MAX_RESAMPLE} draws")


# candidate pool for sparse truths: (state exponents, input exponents, trig)
def _sparse_pool(q: int = 2, p: int = 1):
    pool = []
    for i in range(q):                      # x_i
        e = [0] * q
        e[i] = 1
        pool.append((tuple(e), (0,) * p, None))
    for i in range(q):                      # x_i^2 and cross products
        for j in range(i, q):
            e = [0] * q
            e[i] += 1
            e[j] += 1
            pool.append((tuple(e), (0,) * p, None))
    for i in range(q):                      # x_i * u
        e = [0] * q
        e[i] = 1
        pool.append((tuple(e), (1,) + (0,) * (p - 1), None))
    for i in range(q):                      # sin(x_i)
        pool.append(((0,) * q, (0,) * p, ("sin", i)))
    pool.append(((0,) * q, (1,) + (0,) * (p - 1), None))   # u
    return pool


def make_sparse_nonlinear_truth(seed: int,
                                sample_time_s: float = 0.03) -> SindyModel:
    """2-state truth with at most 6 active terms from {x, x^2, x*u, sin(x), u}.

    Contractive at the origin (Jacobian spectral norm below 0.95) and
    verified bounded on a standard excitation rollout, so recovery tests
    can simulate it safely. No constant term: the origin stays fixed.
    """
    q, p = 2, 1
    lib = LibrarySpec(include_constant=True, poly_degree_state=2,
                      poly_degree_input=1, include_state_input_products=True,
                      include_trig=True)
    terms = library_terms(q, p, lib)
    key = {(t.state_exponents, t.input_exponents, t.trig): k
           for k, t in enumerate(terms)}
    pool = _sparse_pool(q, p)
    rng = np.random.default_rng(seed)

    def linear_term(i):
        e = [0] * q
        e[i] = 1
        return (tuple(e), (0,) * p, None)

    u_term = ((0,) * q, (1,) + (0,) * (p - 1), None)

    for _ in range(MAX_RESAMPLE):
        # every channel gets a direct input term plus a self term, so each
        # state moves and every active coefficient is identifiable from data
        slots = []
        for ch in range(q):
            slots.append((u_term, ch))
            self_term = (linear_term(ch) if rng.random() < 0.5
                         else ((0,) * q, (0,) * p, ("sin", ch)))
            slots.append((self_term, ch))
        extras = [(d, ch) for d in pool for ch in range(q)
                  if (d, ch) not in slots]
        n_extra = int(rng.integers(0, 3))
        for c in rng.choice(len(extras), size=n_extra, replace=False):
            slots.append(extras[c])
        Xi = np.zeros((len(terms), q))
        for d, ch in slots:
            coef = rng.uniform(0.05, 0.5) * (1 if rng.random() < 0.5 else -1)
            Xi[key[d], ch] = coef
        model = SindyModel(Xi, lib, q, p, sample_time_s)
        # Jacobian at the origin: linear terms plus unit-slope sin terms
        J = np.zeros((q, q))
        for k, t in enumerate(terms):
            gx, _ = t.grad(np.zeros(q), np.zeros(p))
            J += np.outer(Xi[k], gx)
        if np.linalg.norm(J, 2) >= 0.95:
            continue
        # bounded-rollout sanity: quadratic terms must not escape
        check = np.random.default_rng(seed + 77_000)
        x = np.zeros(q)
        ok = True
        for _ in range(500):
            x = model.step(x, check.uniform(-1.0, 1.0, size=p))
            if np.max(np.abs(x)) > 2.0:
                ok = False
                break
        if ok:
            return model
    raise NumericError(f"no admissible sparse truth after {MAX_RESAMPLE} draws")
