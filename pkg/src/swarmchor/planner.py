"""Safety filter: per-window alternating-minimization trajectory optimization.

Each inter-waypoint window is discretized at a fixed step and solved by
Gauss-Seidel sweeps over drones. Per sweep and drone, violated constraints
(flight volume box, speed bound, specific-thrust annulus, ellipsoidal
clearance with optional barrier tightening) are turned into quadratic
penalty targets; the resulting unconstrained quadratic is solved exactly per
axis, the penalty weight grows geometrically, and the sweep loop stops once
every constraint holds within tolerance.

Derivative conventions for published trajectories: velocity is the central
difference (one-sided at the ends), acceleration the standard second
difference (replicated at the ends). The speed bound is enforced on
consecutive sample differences, which dominates the central difference, and
the thrust annulus on every interior second difference.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .config import GRAVITY, DroneLimits, EllipsoidEnvelope, FlightVolume, HorizonConfig
from .errors import FilteringFailed, InfeasibleWindow
from .script import WaypointScript

MIN_WINDOW_FRACTION = 0.5   # windows shorter than this many dt are skipped
DILATION_FACTOR = 1.5
MAX_DILATIONS = 2
SYMMETRY_BREAK = 1e-3       # m, deterministic perturbation of initial guesses
# Penalty targets project onto slightly tightened bounds so the sweep's
# least-squares compromise still lands inside the true bounds.
SPEED_MARGIN = 1e-3         # m/s
THRUST_MARGIN = 1e-2        # m/s^2
CLEARANCE_SLACK = 1e-3      # scaled radius units


def build_horizon(t_a: float, t_b: float, dt: float) -> tuple[int, np.ndarray]:
    """Steps K and the K+1 uniform timestamps covering [t_a, t_b]."""
    if t_b <= t_a:
        raise ValueError("window must have positive duration")
    K = max(2, int(round((t_b - t_a) / dt)))
    return K, np.linspace(t_a, t_b, K + 1)


def finite_velocity(p: np.ndarray, dt: float) -> np.ndarray:
    """Central-difference velocity, one-sided at the ends. p: (..., T, 3)."""
    v = np.empty_like(p)
    v[..., 1:-1, :] = (p[..., 2:, :] - p[..., :-2, :]) / (2 * dt)
    v[..., 0, :] = (p[..., 1, :] - p[..., 0, :]) / dt
    v[..., -1, :] = (p[..., -1, :] - p[..., -2, :]) / dt
    return v


def finite_acceleration(p: np.ndarray, dt: float) -> np.ndarray:
    """Second-difference acceleration, replicated at the ends."""
    a = np.empty_like(p)
    a[..., 1:-1, :] = (p[..., 2:, :] - 2 * p[..., 1:-1, :] + p[..., :-2, :]) / dt**2
    a[..., 0, :] = a[..., 1, :]
    a[..., -1, :] = a[..., -2, :]
    return a


def clearance_radius_base(cfg: HorizonConfig, limits: DroneLimits,
                          envelope: EllipsoidEnvelope) -> float:
    """Scaled clearance radius enforced at planner samples.

    Two drones can close by up to 2 * v_max * dt between samples; requiring
    scaled distance sqrt(1 + s^2) at the samples (s the scaled half-chord)
    keeps every linearly interpolated inter-sample point outside the unit
    ellipsoid. Enforcement adds CLEARANCE_SLACK on top so the solver's
    least-squares compromise still meets this requirement.
    """
    s = limits.v_max * cfg.dt * float(np.max(1.0 / envelope.axes))
    return math.sqrt(1.0 + s * s)


def check_bf_condition(h_series, gamma: float, tol: float = 1e-4) -> tuple[bool, int]:
    """Verify h[k] - h[k-1] >= -gamma * h[k-1] - tol for all k.

    Returns (passed, first_violating_index); the index is -1 when passing.
    """
    h = np.asarray(h_series, dtype=float)
    if h.size == 0:
        raise ValueError("h series must be non-empty")
    deficit = (1.0 - gamma) * h[:-1] - h[1:]
    bad = np.flatnonzero(deficit > tol)
    if len(bad):
        return False, int(bad[0]) + 1
    return True, -1


# --- quadratic step ---------------------------------------------------------

@dataclass
class StepSystem:
    """Weighted least-squares rows for one drone's quadratic step.

    Minimizes sum_r W[r] * || A[r] @ p - T[r] ||^2 over the free samples of
    the (K1, 3) trajectory; the first ``pinned`` samples are constants.
    """

    A: np.ndarray        # (R, K1)
    W: np.ndarray        # (R,)
    T: np.ndarray        # (R, 3)
    pinned: int


def _difference_row(K1: int, start: int, coeffs: np.ndarray) -> np.ndarray:
    row = np.zeros(K1)
    row[start : start + len(coeffs)] = coeffs
    return row


def _smooth_coeffs(q: int) -> np.ndarray:
    c = np.array([1.0])
    for _ in range(q):
        c = np.convolve(c, [1.0, -1.0])
    return c


def assemble_step_system(
    p: np.ndarray,             # (K1, 3) current iterate for this drone
    pinned: int,
    goal: np.ndarray,          # (3,)
    neighbors: np.ndarray,     # (M, K1, 3)
    cfg: HorizonConfig,
    limits: DroneLimits,
    envelope: EllipsoidEnvelope,
    vol: FlightVolume,
    rho: float,
    goal_tail: int | None = None,
    radius_base: float = 1.0,
) -> StepSystem:
    """Build the penalty-augmented quadratic for one Gauss-Seidel update.

    goal_tail overrides how many trailing samples carry the goal cost
    (defaults to the configured tail fraction of the horizon).
    """
    K1 = p.shape[0]
    K = K1 - 1
    kappa = goal_tail if goal_tail is not None else cfg.kappa(K)
    kappa = min(kappa, K1 - 1)
    rows: list[np.ndarray] = []
    weights: list[float] = []
    targets: list[np.ndarray] = []

    # goal cost over the horizon tail
    for k in range(K1 - kappa, K1):
        rows.append(_difference_row(K1, k, np.array([1.0])))
        weights.append(cfg.w_goal)
        targets.append(goal)

    # smoothness on the q-th finite difference (sample units)
    coeffs = _smooth_coeffs(cfg.q_smooth)
    for s in range(K1 - cfg.q_smooth):
        rows.append(_difference_row(K1, s, coeffs))
        weights.append(cfg.w_smooth)
        targets.append(np.zeros(3))

    lo, hi = vol.lo, vol.hi

    # The speed and thrust rows are always on, with the projection of the
    # current difference as target (the identity when already feasible).
    # Anchoring the whole difference chain at weight rho stabilizes the sweep:
    # with violated-only rows a feasible iterate has no penalty rows at all
    # and the next solve jumps to the violent unconstrained optimum
    # (active-set flapping). Box and clearance rows stay violated-only --
    # making them proximal too over-anchors each sample and freezes progress.

    # box penalty toward the clipped iterate
    outside = np.any((p < lo) | (p > hi), axis=1)
    for k in np.flatnonzero(outside):
        rows.append(_difference_row(K1, k, np.array([1.0])))
        weights.append(rho)
        targets.append(np.clip(p[k], lo, hi))

    # speed: target is the consecutive difference rescaled into the bound
    diffs = p[1:] - p[:-1]
    norms = np.linalg.norm(diffs, axis=1)
    vmax_step = (limits.v_max - SPEED_MARGIN) * cfg.dt
    for k in range(K1 - 1):
        target = diffs[k]
        if norms[k] > vmax_step:
            target = diffs[k] * (vmax_step / norms[k])
        rows.append(_difference_row(K1, k, np.array([-1.0, 1.0])))
        weights.append(rho)
        targets.append(target)

    # thrust annulus on interior second differences
    if K1 >= 3:
        acc = (p[2:] - 2 * p[1:-1] + p[:-2]) / cfg.dt**2
        thrust = acc - GRAVITY
        tn = np.linalg.norm(thrust, axis=1)
        f_lo = limits.f_min + THRUST_MARGIN
        f_hi = limits.f_max - THRUST_MARGIN
        for k in range(K1 - 2):
            if tn[k] > 0:
                proj = thrust[k] * (np.clip(tn[k], f_lo, f_hi) / tn[k])
            else:
                proj = np.array([0.0, 0.0, f_lo])
            rows.append(_difference_row(K1, k, np.array([1.0, -2.0, 1.0])))
            weights.append(rho)
            targets.append((GRAVITY + proj) * cfg.dt**2)

    # ellipsoidal clearance penalty toward polar projection targets
    if len(neighbors):
        inv_axes = 1.0 / envelope.axes
        ctargets, active = kernels.collision_projection(
            p, neighbors, inv_axes, cfg.gamma, radius_base
        )
        for j, k in zip(*np.nonzero(active)):
            rows.append(_difference_row(K1, k, np.array([1.0])))
            weights.append(rho)
            targets.append(ctargets[j, k])

    return StepSystem(
        A=np.stack(rows),
        W=np.asarray(weights, dtype=float),
        T=np.stack(targets),
        pinned=pinned,
    )


def step_objective(p: np.ndarray, system: StepSystem) -> tuple[float, np.ndarray]:
    """Objective value and its analytic gradient wrt the free samples.

    Returns (J, grad) with grad shaped (K1 - pinned, 3).
    """
    resid = system.A @ p - system.T                     # (R, 3)
    value = float(np.sum(system.W[:, None] * resid**2))
    grad = 2.0 * system.A.T @ (system.W[:, None] * resid)
    return value, grad[system.pinned :, :]


def solve_step(p: np.ndarray, system: StepSystem, vol: FlightVolume) -> np.ndarray:
    """Exact minimizer of the step system over the free samples, box-clipped."""
    K1 = p.shape[0]
    m = system.pinned
    if m >= K1:
        return p
    Af = system.A[:, m:]
    Ap = system.A[:, :m]
    WAf = system.W[:, None] * Af
    H = Af.T @ WAf
    H[np.diag_indices_from(H)] += 1e-12
    rhs = WAf.T @ (system.T - Ap @ p[:m])               # (nfree, 3)
    x = np.linalg.solve(H, rhs)
    out = p.copy()
    out[m:] = np.clip(x, vol.lo, vol.hi)
    return out


# --- window planning --------------------------------------------------------

def _pinned_samples(p0, v0, dt: float, count: int) -> np.ndarray:
    """The first `count` samples implied by the initial state.

    Pinning position and velocity keeps the chained trajectory's curvature at
    window boundaries exactly zero (hover thrust), so pinned data can never
    violate the speed or thrust constraints the optimizer must certify.
    """
    out = np.zeros((count, 3))
    out[0] = p0
    if count >= 2:
        out[1] = p0 + v0 * dt
    return out


def _initial_guess(pinned: np.ndarray, goal: np.ndarray, K1: int, drone_index: int,
                   vol: FlightVolume) -> np.ndarray:
    """Linear interpolation to the goal with a tiny deterministic lateral
    bump that breaks exact symmetry (e.g. two drones swapping head-on)."""
    m = len(pinned)
    p = np.zeros((K1, 3))
    p[:m] = pinned
    if m < K1:
        frac = np.linspace(0.0, 1.0, K1 - m + 1)[1:]
        p[m:] = pinned[-1] + np.outer(frac, goal - pinned[-1])
        bump = SYMMETRY_BREAK * (1 + drone_index % 3) * (-1.0) ** drone_index
        shape = np.sin(np.pi * frac)
        axis = 1 + drone_index % 2  # alternate y / z
        p[m:, axis] += bump * shape
        p[m:] = np.clip(p[m:], vol.lo, vol.hi)
    return p


def window_violations(
    p: np.ndarray,  # (N, K1, 3)
    dt: float,
    limits: DroneLimits,
    vol: FlightVolume,
    envelope: EllipsoidEnvelope,
    gamma: float,
    radius_base: float = 1.0,
) -> dict[str, float]:
    """Constraint violations of a window iterate (all should be <= tol).

    radius_base > 1 checks the clearance against the over-separated sample
    requirement h >= radius_base^2 - 1 instead of h >= 0.
    """
    box = max(0.0, float(np.max(vol.lo - p)), float(np.max(p - vol.hi)))
    diffs = np.linalg.norm(p[:, 1:] - p[:, :-1], axis=2) / dt
    speed = max(0.0, float(diffs.max(initial=0.0)) - limits.v_max)
    thrust = 0.0
    if p.shape[1] >= 3:
        acc = (p[:, 2:] - 2 * p[:, 1:-1] + p[:, :-2]) / dt**2
        tn = np.linalg.norm(acc - GRAVITY, axis=2)
        thrust = max(0.0, limits.f_min - float(tn.min()), float(tn.max()) - limits.f_max)
    inv_axes = 1.0 / envelope.axes
    h = kernels.pair_clearance_series(p, inv_axes)
    h_req = radius_base**2 - 1.0
    clearance = 0.0 if h.size == 0 else max(0.0, h_req - float(h.min()))
    barrier = 0.0
    if gamma < 1.0 and h.size:
        deficit = (1.0 - gamma) * h[:, :-1] - h[:, 1:]
        barrier = max(0.0, float(deficit.max()))
    return {"box": box, "speed": speed, "thrust": thrust,
            "clearance": clearance, "barrier": barrier}


def plan_window(
    starts: tuple[np.ndarray, np.ndarray, np.ndarray],  # (p0, v0, a0) each (N, 3)
    goals: np.ndarray,                                  # (N, 3)
    K: int,
    cfg: HorizonConfig,
    limits: DroneLimits,
    envelope: EllipsoidEnvelope,
    vol: FlightVolume,
) -> tuple[np.ndarray, dict]:
    """Solve one window for all drones; returns ((N, K+2, 3) samples, info).

    The horizon carries one overlap sample past the beat (index K); the
    overlap becomes the next window's second pinned sample, so every pinned
    sample has had the full constraint set enforced on it. Raises
    InfeasibleWindow when the sweep budget is exhausted with any constraint
    violated beyond tolerance.
    """
    p0, v0 = (np.asarray(x, dtype=float) for x in starts[:2])
    goals = np.asarray(goals, dtype=float)
    N = p0.shape[0]
    K1 = K + 2
    m = min(2, K1 - 1)
    goal_tail = min(cfg.kappa(K), K) + 1  # the beat's tail plus the overlap
    r_base = clearance_radius_base(cfg, limits, envelope)

    p = np.empty((N, K1, 3))
    for i in range(N):
        pinned = _pinned_samples(p0[i], v0[i], cfg.dt, m)
        p[i] = _initial_guess(pinned, goals[i], K1, i, vol)

    rho = cfg.rho0
    sweeps_used = cfg.max_sweeps
    for sweep in range(cfg.max_sweeps):
        for i in range(N):
            neighbors = np.delete(p, i, axis=0)
            system = assemble_step_system(
                p[i], m, goals[i], neighbors, cfg, limits, envelope, vol, rho,
                goal_tail=goal_tail, radius_base=r_base + CLEARANCE_SLACK,
            )
            p[i] = solve_step(p[i], system, vol)
        viol = window_violations(p, cfg.dt, limits, vol, envelope, cfg.gamma, r_base)
        if max(viol.values()) <= cfg.tol:
            sweeps_used = sweep + 1
            break
        rho = min(rho * cfg.rho_growth, cfg.rho_max)
    else:
        viol = window_violations(p, cfg.dt, limits, vol, envelope, cfg.gamma, r_base)
        if max(viol.values()) > cfg.tol:
            raise InfeasibleWindow(
                f"window unsolved after {cfg.max_sweeps} sweeps: {viol}", violations=viol
            )
    return p, {"sweeps": sweeps_used, "violations": viol}


# --- full-script filtering --------------------------------------------------

@dataclass
class FilteredTrajectory:
    """Dense feasible trajectories for the whole song at uniform dt."""

    dt: float
    drone_ids: tuple[int, ...]
    positions: np.ndarray      # (N, T, 3)
    velocities: np.ndarray     # (N, T, 3)
    accelerations: np.ndarray  # (N, T, 3)
    beat_sample_indices: tuple[int, ...]   # sample index of each planned beat
    beat_times_planned: tuple[float, ...]  # possibly dilated beat times
    certificate: dict = field(default_factory=dict)

    @property
    def n_drones(self) -> int:
        return len(self.drone_ids)

    @property
    def n_samples(self) -> int:
        return self.positions.shape[1]

    @property
    def duration(self) -> float:
        return (self.n_samples - 1) * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.dt

    def to_dict(self) -> dict:
        return {
            "dt": self.dt,
            "drones": [
                {
                    "id": int(self.drone_ids[i]),
                    "p": np.round(self.positions[i], 9).tolist(),
                    "v": np.round(self.velocities[i], 9).tolist(),
                    "a": np.round(self.accelerations[i], 9).tolist(),
                }
                for i in range(self.n_drones)
            ],
            "beat_sample_indices": list(self.beat_sample_indices),
            "beat_times_planned": [round(t, 9) for t in self.beat_times_planned],
            "certificate": self.certificate,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FilteredTrajectory":
        drones = data["drones"]
        return cls(
            dt=float(data["dt"]),
            drone_ids=tuple(int(d["id"]) for d in drones),
            positions=np.array([d["p"] for d in drones], dtype=float),
            velocities=np.array([d["v"] for d in drones], dtype=float),
            accelerations=np.array([d["a"] for d in drones], dtype=float),
            beat_sample_indices=tuple(int(i) for i in data.get("beat_sample_indices", ())),
            beat_times_planned=tuple(float(t) for t in data.get("beat_times_planned", ())),
            certificate=data.get("certificate", {}),
        )

    def csv_rows(self):
        """One row per (drone, k): id, k, t, position, velocity, acceleration."""
        for i, did in enumerate(self.drone_ids):
            for k in range(self.n_samples):
                yield (
                    did, k, k * self.dt,
                    *self.positions[i, k], *self.velocities[i, k], *self.accelerations[i, k],
                )


CSV_HEADER = ("drone_id", "k", "t", "x", "y", "z", "vx", "vy", "vz", "ax", "ay", "az")


def filter_swarm(
    script: WaypointScript,
    cfg: HorizonConfig,
    limits: DroneLimits,
    envelope: EllipsoidEnvelope,
    vol: FlightVolume,
) -> FilteredTrajectory:
    """Chain plan_window over consecutive beat windows with time-dilation
    fallback, producing the full-song FilteredTrajectory and certificate."""
    beat_times = script.timestamps
    N = script.n_drones
    p_cur = script.initial_positions.copy()
    v_cur = np.zeros((N, 3))
    a_cur = np.zeros((N, 3))

    samples: list[np.ndarray] = [p_cur[:, None, :]]
    sample_count = 1
    t_prev_orig = 0.0
    t_out = 0.0
    beat_idx: list[int] = []
    beat_t: list[float] = []
    sweeps_per_window: list[int] = []
    dilations = 0

    for w, t_b in enumerate(beat_times):
        dur = float(t_b) - t_prev_orig
        t_prev_orig = float(t_b)
        if dur < MIN_WINDOW_FRACTION * cfg.dt:
            # degenerate window (e.g. a beat at t=0): the current state is
            # the best available answer for this beat
            beat_idx.append(sample_count - 1)
            beat_t.append(t_out)
            continue
        goals = script.positions_at(w)
        dur_eff = dur
        window = None
        for attempt in range(MAX_DILATIONS + 1):
            K, _ = build_horizon(0.0, dur_eff, cfg.dt)
            try:
                window, info = plan_window(
                    (p_cur, v_cur, a_cur), goals, K, cfg, limits, envelope, vol
                )
                break
            except InfeasibleWindow:
                if attempt == MAX_DILATIONS:
                    raise FilteringFailed(
                        f"window {w} infeasible after {MAX_DILATIONS} dilation retries",
                        window_index=w,
                    )
                dur_eff *= DILATION_FACTOR
                dilations += 1
        assert window is not None
        sweeps_per_window.append(info["sweeps"])
        # window has K+2 samples: the beat at index -2, the overlap at -1.
        # Keep samples 1..K; the overlap reappears as the next window's
        # second pinned sample, so the published junction stays certified.
        Kw = window.shape[1] - 2
        samples.append(window[:, 1 : Kw + 1, :])
        sample_count += Kw
        t_out += Kw * cfg.dt
        beat_idx.append(sample_count - 1)
        beat_t.append(t_out)
        p_cur = window[:, -2, :].copy()
        v_cur = (window[:, -1, :] - window[:, -2, :]) / cfg.dt
        a_cur = (window[:, -1, :] - 2 * window[:, -2, :] + window[:, -3, :]) / cfg.dt**2

    positions = np.concatenate(samples, axis=1)
    velocities = finite_velocity(positions, cfg.dt)
    accelerations = finite_acceleration(positions, cfg.dt)

    inv_axes = 1.0 / envelope.axes
    h = kernels.pair_clearance_series(positions, inv_axes)
    speed = float(np.linalg.norm(velocities, axis=2).max())
    thrust_norm = np.linalg.norm(accelerations - GRAVITY, axis=2)
    certificate = {
        "min_h": float(h.min()) if h.size else None,
        "max_box_violation": max(
            0.0, float(np.max(vol.lo - positions)), float(np.max(positions - vol.hi))
        ),
        "max_speed": speed,
        "max_speed_violation": max(0.0, speed - limits.v_max),
        "thrust_range": [float(thrust_norm.min()), float(thrust_norm.max())],
        "gamma": cfg.gamma,
        "tol": cfg.tol,
        "sweeps_per_window": sweeps_per_window,
        "dilations": dilations,
    }
    return FilteredTrajectory(
        dt=cfg.dt,
        drone_ids=tuple(d.drone_id for d in script.drones),
        positions=positions,
        velocities=velocities,
        accelerations=accelerations,
        beat_sample_indices=tuple(beat_idx),
        beat_times_planned=tuple(beat_t),
        certificate=certificate,
    )


def resample_commands(
    traj: FilteredTrajectory, sim_hz: float, ctrl_hz: float
) -> dict[str, np.ndarray]:
    """Linear position resampling onto uniform sim and control grids.

    Each output array is (N, floor(duration*hz)+1, 3); source endpoints are
    preserved exactly when the grid lands on them.
    """
    if sim_hz <= 0 or ctrl_hz <= 0:
        raise ValueError("rates must be positive")
    src_t = traj.times
    out = {}
    for name, hz in (("sim_commands", sim_hz), ("ctrl_commands", ctrl_hz)):
        n = int(math.floor(traj.duration * hz + 1e-9)) + 1
        grid = np.arange(n) / hz
        res = np.empty((traj.n_drones, n, 3))
        for i in range(traj.n_drones):
            for axis in range(3):
                res[i, :, axis] = np.interp(grid, src_t, traj.positions[i, :, axis])
        out[name] = res
    out["sim_times"] = np.arange(out["sim_commands"].shape[1]) / sim_hz
    out["ctrl_times"] = np.arange(out["ctrl_commands"].shape[1]) / ctrl_hz
    return out
