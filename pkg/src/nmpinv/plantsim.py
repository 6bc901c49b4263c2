"""Continuous-time plants, integration, and closed-loop simulation.

Implements the pendulum-on-a-cart dynamics (force-driven and
voltage-driven variants), classical RK4 with zero-order-hold inputs,
finite-difference linearization, ZOH discretization, Ackermann pole
placement, state-space-to-transfer-function conversion, and the
multi-rate closed loop: a fast inner state-feedback loop with a slower
reference module (raw trajectory, model-based inverse, or learned
generator) held between updates.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NonFiniteJacobian, NonFiniteState, Uncontrollable
from .polylti import DiscreteTransferFunction, Polynomial

_EXPM_TOL = 1e-16
_EXPM_MAX_TERMS = 60
_CTRB_COND_LIMIT = 1e12


@dataclass(frozen=True)
class PendulumCartParams:
    """Masses in kg, effective length in m, gravity in m/s^2."""

    cart_mass: float = 1.0
    pendulum_mass: float = 0.2
    length: float = 0.5
    gravity: float = 9.81

    def __post_init__(self):
        for name in ("cart_mass", "pendulum_mass", "length", "gravity"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class Plant:
    """Deterministic continuous-time dynamics with a fixed output map.

    ``derivative(state, u)`` maps an n-vector and scalar input to the state
    derivative; ``output`` selects the measured vector.  ``scalar_derivative``
    is an optional float-tuple fast path used by the simulation inner loop.
    """

    state_dim: int
    derivative: Callable[[np.ndarray, float], np.ndarray]
    output: Callable[[np.ndarray], np.ndarray]
    scalar_derivative: Optional[Callable] = None


def pendulum_cart_derivative(state, force, params: PendulumCartParams):
    """State derivative [d eta, dd eta, d theta, dd theta] for applied force."""
    M, m = params.cart_mass, params.pendulum_mass
    l, g = params.length, params.gravity
    _, eta_dot, theta, theta_dot = state
    s, c = math.sin(theta), math.cos(theta)
    denom = M + m * s * s
    eta_dd = (force + m * g * s * c - m * l * theta_dot**2 * s) / denom
    theta_dd = (force * c + (M + m) * g * s - m * l * theta_dot**2 * s * c) / (
        l * denom
    )
    return np.array([eta_dot, eta_dd, theta_dot, theta_dd])


def pendulum_cart_voltage_derivative(state, voltage, params: PendulumCartParams,
                                     damping=-7.74, volts_to_force=1.73):
    """Voltage-driven variant: the motor maps voltage and cart speed to force."""
    force = damping * state[1] + volts_to_force * voltage
    return pendulum_cart_derivative(state, force, params)


def pendulum_cart(params: PendulumCartParams = PendulumCartParams()) -> Plant:
    M, m = params.cart_mass, params.pendulum_mass
    l, g = params.length, params.gravity

    def scalar(eta, eta_dot, theta, theta_dot, force):
        s = math.sin(theta)
        c = math.cos(theta)
        denom = M + m * s * s
        eta_dd = (force + m * g * s * c - m * l * theta_dot * theta_dot * s) / denom
        theta_dd = (
            force * c + (M + m) * g * s - m * l * theta_dot * theta_dot * s * c
        ) / (l * denom)
        return eta_dot, eta_dd, theta_dot, theta_dd

    return Plant(
        state_dim=4,
        derivative=lambda x, u: pendulum_cart_derivative(x, u, params),
        output=lambda x: np.asarray(x),
        scalar_derivative=scalar,
    )


def pendulum_cart_voltage(params: PendulumCartParams = PendulumCartParams(),
                          damping=-7.74, volts_to_force=1.73) -> Plant:
    M, m = params.cart_mass, params.pendulum_mass
    l, g = params.length, params.gravity

    def scalar(eta, eta_dot, theta, theta_dot, voltage):
        force = damping * eta_dot + volts_to_force * voltage
        s = math.sin(theta)
        c = math.cos(theta)
        denom = M + m * s * s
        eta_dd = (force + m * g * s * c - m * l * theta_dot * theta_dot * s) / denom
        theta_dd = (
            force * c + (M + m) * g * s - m * l * theta_dot * theta_dot * s * c
        ) / (l * denom)
        return eta_dot, eta_dd, theta_dot, theta_dd

    return Plant(
        state_dim=4,
        derivative=lambda x, u: pendulum_cart_voltage_derivative(
            x, u, params, damping, volts_to_force
        ),
        output=lambda x: np.asarray(x),
        scalar_derivative=scalar,
    )


def rk4_step(plant: Plant, state, u, dt: float) -> np.ndarray:
    """Classical 4th-order Runge-Kutta update with the input held constant."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(state, dtype=float)
    f = plant.derivative
    k1 = f(x, u)
    k2 = f(x + 0.5 * dt * k1, u)
    k3 = f(x + 0.5 * dt * k2, u)
    k4 = f(x + dt * k3, u)
    out = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NonFiniteState(f"non-finite state after step from {x}")
    return out


@dataclass(frozen=True)
class StateFeedbackController:
    """Full-state feedback u_act = K (ref_vec - x).

    The scalar position reference and its derived velocity reference
    populate ``position_slot`` and ``velocity_slot`` of ref_vec; the
    remaining components are regulated to zero.
    """

    gain: np.ndarray
    position_slot: int = 0
    velocity_slot: int = 1

    def __post_init__(self):
        object.__setattr__(self, "gain", np.asarray(self.gain, dtype=float).ravel())

    def actuation(self, ref_vec, x):
        return float(self.gain @ (np.asarray(ref_vec) - np.asarray(x)))


@dataclass(frozen=True)
class LinearModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    sample_time: Optional[float] = None

    def __post_init__(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape[0] != n or self.C.shape[1] != n:
            raise ValueError("inconsistent state-space dimensions")
        if self.sample_time is not None and self.sample_time <= 0:
            raise ValueError("sample_time must be positive for discrete models")


def linearize(plant: Plant, state, u, rel_step=1e-6) -> LinearModel:
    """Jacobians by central finite differences around an operating point."""
    x0 = np.asarray(state, dtype=float)
    n = plant.state_dim

    def column(f, base, i, h, is_state):
        hi = h * max(1.0, abs(base[i] if is_state else base))
        if is_state:
            up, down = x0.copy(), x0.copy()
            up[i] += hi
            down[i] -= hi
            return (np.asarray(f(up)) - np.asarray(f(down))) / (2 * hi)
        return (np.asarray(f(base + hi)) - np.asarray(f(base - hi))) / (2 * hi)

    A = np.column_stack(
        [column(lambda x: plant.derivative(x, u), x0, i, rel_step, True) for i in range(n)]
    )
    B = column(lambda v: plant.derivative(x0, v), float(u), 0, rel_step, False)[:, None]
    C = np.column_stack(
        [column(lambda x: plant.output(x), x0, i, rel_step, True) for i in range(n)]
    )
    D = np.zeros((C.shape[0], 1))
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B)) and np.all(np.isfinite(C))):
        raise NonFiniteJacobian("finite differences produced non-finite entries")
    return LinearModel(A, B, C, D)


def _expm(M: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring with a truncated series."""
    norm = np.linalg.norm(M, 1)
    squarings = max(0, int(math.ceil(math.log2(norm))) + 1) if norm > 0.5 else 0
    S = M / (2.0**squarings)
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, _EXPM_MAX_TERMS + 1):
        term = term @ S / k
        out = out + term
        if np.linalg.norm(term, 1) < _EXPM_TOL:
            break
    for _ in range(squarings):
        out = out @ out
    return out


def discretize_zoh(model: LinearModel, dt: float) -> LinearModel:
    """Zero-order-hold discretization via the augmented matrix exponential."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = model.A.shape[0]
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = model.A * dt
    aug[:n, n:] = model.B * dt
    E = _expm(aug)
    return LinearModel(E[:n, :n], E[:n, n:], model.C.copy(), model.D.copy(), dt)


def pole_place_siso(A, B, desired_poles) -> np.ndarray:
    """Ackermann's formula for single-input pole placement."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(-1, 1)
    n = A.shape[0]
    if len(desired_poles) != n:
        raise ValueError(f"need exactly {n} desired poles")
    ctrb = np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(n)])
    if np.linalg.cond(ctrb) >= _CTRB_COND_LIMIT:
        raise Uncontrollable(
            f"controllability matrix condition {np.linalg.cond(ctrb):.2e}"
        )
    char = np.polynomial.polynomial.polyfromroots(list(desired_poles))
    if np.max(np.abs(char.imag)) > 1e-9 * max(1.0, np.max(np.abs(char))):
        raise ValueError("desired poles must form a real polynomial")
    char = char.real
    phi = np.zeros_like(A)
    for c in reversed(char):
        phi = phi @ A + c * np.eye(n)
    selector = np.zeros(n)
    selector[-1] = 1.0
    return selector @ np.linalg.solve(ctrb, phi)


def closed_loop_tf(model: LinearModel, controller: StateFeedbackController,
                   output_index: int = 0) -> DiscreteTransferFunction:
    """Transfer function from the scalar position reference to one output.

    Uses the closed-loop matrices (Ad - Bd K, Bd k_ref) with the reference
    injected through the position slot, expanding the resolvent by the
    Leverrier-Faddeev recursion.  Requires a discrete model with state-only
    outputs (D = 0).
    """
    if model.sample_time is None:
        raise ValueError("closed_loop_tf requires a discrete model")
    if np.any(model.D != 0.0):
        raise ValueError("feedthrough outputs are not supported")
    K = controller.gain[None, :]
    n = model.A.shape[0]
    A_cl = model.A - model.B @ K
    k_ref = controller.gain[controller.position_slot]
    B_cl = (model.B * k_ref).ravel()
    C = model.C[output_index]

    den = np.zeros(n + 1)
    den[n] = 1.0
    mats = [np.eye(n)]
    Bk = np.eye(n)
    for k in range(1, n + 1):
        Mk = A_cl @ Bk
        ck = -np.trace(Mk) / k
        den[n - k] = ck
        Bk = Mk + ck * np.eye(n)
        mats.append(Bk)
    num = np.zeros(n)
    for k in range(n):
        num[n - 1 - k] = float(C @ mats[k] @ B_cl)
    return DiscreteTransferFunction(Polynomial(num), Polynomial(den), model.sample_time)


def nmp_surrogate_axis(zero_location: float, delay_steps: int, dt: float,
                       closed_loop_poles=None) -> DiscreteTransferFunction:
    """Per-axis unit-DC-gain model with one zero outside the unit circle.

    H(z) = g (z - z0) / (z^d (z - p1)(z - p2)); the default pole pair is a
    critically damped double pole at exp(-3 dt).
    """
    if zero_location <= 1.0:
        raise ValueError("zero_location must be outside the unit circle")
    if delay_steps < 0:
        raise ValueError("delay_steps must be non-negative")
    if closed_loop_poles is None:
        p = math.exp(-3.0 * dt)
        closed_loop_poles = (p, p)
    if any(abs(p) >= 1.0 for p in closed_loop_poles):
        raise ValueError("closed-loop poles must be stable")
    den = Polynomial.from_roots([0.0] * delay_steps + list(closed_loop_poles))
    num = Polynomial.from_roots([zero_location])
    gain = den(1.0).real / num(1.0).real
    return DiscreteTransferFunction(num.scaled(gain), den, dt)


@dataclass
class ClosedLoopTrace:
    """Time-aligned closed-loop record at the integration rate."""

    t: np.ndarray
    x: np.ndarray
    u_ref_pos: np.ndarray
    u_ref_vel: np.ndarray
    actuation: np.ndarray
    y: np.ndarray
    diverged: bool = False
    diverged_at: Optional[float] = None

    def to_csv(self, path):
        n = self.x.shape[1]
        header = ["t"] + [f"x{i+1}" for i in range(n)]
        header += ["u_ref_pos", "u_ref_vel", "actuation", "y"]
        data = np.column_stack(
            [self.t, self.x, self.u_ref_pos, self.u_ref_vel, self.actuation, self.y]
        )
        np.savetxt(path, data, delimiter=",", header=",".join(header), comments="")


def simulate_closed_loop(
    plant: Plant,
    controller: StateFeedbackController,
    reference_source: Callable[[np.ndarray], np.ndarray],
    duration: float,
    dt: float = 1e-3,
    dt_module: float = 0.015,
    x0=None,
    divergence_bound: float = 1e3,
    tracked_output: int = 0,
) -> ClosedLoopTrace:
    """Run the inner loop at ``dt`` with the reference module held at ``dt_module``.

    ``reference_source`` maps the module-rate time grid to position
    references; the velocity reference is its central difference.  When the
    state norm exceeds ``divergence_bound`` the trace is truncated there and
    flagged instead of raising.
    """
    if dt <= 0 or dt_module <= 0:
        raise ValueError("rates must be positive")
    n_steps = int(round(duration / dt))
    steps_per_module = max(1, int(round(dt_module / dt)))
    n_module = n_steps // steps_per_module + 2
    t_module = np.arange(n_module) * dt_module
    pos_ref = np.asarray(reference_source(t_module), dtype=float)
    if pos_ref.shape != t_module.shape:
        raise ValueError("reference source must return one sample per grid point")
    vel_ref = np.gradient(pos_ref, dt_module) if n_module > 1 else np.zeros_like(pos_ref)

    nx = plant.state_dim
    x = np.zeros(nx) if x0 is None else np.asarray(x0, dtype=float).copy()
    K = controller.gain
    pos_slot, vel_slot = controller.position_slot, controller.velocity_slot

    t_arr = np.arange(n_steps) * dt
    xs = np.zeros((n_steps, nx))
    upos = np.zeros(n_steps)
    uvel = np.zeros(n_steps)
    act = np.zeros(n_steps)
    ys = np.zeros(n_steps)
    diverged = False
    diverged_at = None

    fast = plant.scalar_derivative if nx == 4 else None
    if fast is not None:
        k0, k1g, k2g, k3g = (float(K[i]) for i in range(4))
        kp, kv = float(K[pos_slot]), float(K[vel_slot])
        s0, s1, s2, s3 = (float(v) for v in x)
        half = dt / 2.0
        sixth = dt / 6.0
        bound2 = divergence_bound * divergence_bound
        for k in range(n_steps):
            j = k // steps_per_module
            rp = pos_ref[j]
            rv = vel_ref[j]
            q = kp * rp + kv * rv - (k0 * s0 + k1g * s1 + k2g * s2 + k3g * s3)
            xs[k, 0], xs[k, 1], xs[k, 2], xs[k, 3] = s0, s1, s2, s3
            upos[k] = rp
            uvel[k] = rv
            act[k] = q
            ys[k] = (s0, s1, s2, s3)[tracked_output]
            a0, a1, a2, a3 = fast(s0, s1, s2, s3, q)
            b0, b1, b2, b3 = fast(s0 + half * a0, s1 + half * a1, s2 + half * a2, s3 + half * a3, q)
            c0, c1, c2, c3 = fast(s0 + half * b0, s1 + half * b1, s2 + half * b2, s3 + half * b3, q)
            d0, d1, d2, d3 = fast(s0 + dt * c0, s1 + dt * c1, s2 + dt * c2, s3 + dt * c3, q)
            s0 += sixth * (a0 + 2 * b0 + 2 * c0 + d0)
            s1 += sixth * (a1 + 2 * b1 + 2 * c1 + d1)
            s2 += sixth * (a2 + 2 * b2 + 2 * c2 + d2)
            s3 += sixth * (a3 + 2 * b3 + 2 * c3 + d3)
            norm2 = s0 * s0 + s1 * s1 + s2 * s2 + s3 * s3
            if not math.isfinite(norm2) or norm2 > bound2:
                diverged = True
                diverged_at = (k + 1) * dt
                n_steps = k + 1
                break
    else:
        for k in range(n_steps):
            j = k // steps_per_module
            ref_vec = np.zeros(nx)
            ref_vec[pos_slot] = pos_ref[j]
            ref_vec[vel_slot] = vel_ref[j]
            q = controller.actuation(ref_vec, x)
            xs[k] = x
            upos[k] = pos_ref[j]
            uvel[k] = vel_ref[j]
            act[k] = q
            ys[k] = plant.output(x)[tracked_output]
            try:
                x = rk4_step(plant, x, q, dt)
            except NonFiniteState:
                diverged = True
                diverged_at = (k + 1) * dt
                n_steps = k + 1
                break
            if np.linalg.norm(x) > divergence_bound:
                diverged = True
                diverged_at = (k + 1) * dt
                n_steps = k + 1
                break

    sl = slice(0, n_steps)
    return ClosedLoopTrace(
        t_arr[sl], xs[sl], upos[sl], uvel[sl], act[sl], ys[sl], diverged, diverged_at
    )
