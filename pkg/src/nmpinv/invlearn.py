"""Learning a stable approximate inverse of a baseline system from logs.

The pipeline: run the baseline on training trajectories, log the applied
reference u and the measured output y at the module rate, assemble
windowed feature/label pairs according to an input-selection scheme, fit
a network, and package it with its normalization so the runtime feature
construction matches training exactly.  At test time the desired
trajectory takes the place of the measured output.

Selection schemes differ in one safety-critical way: whether reference
samples appear among the features.  Schemes without them cannot pick up
the unstable numerator dynamics of a non-minimum phase loop, which is
what keeps the trained generator stable.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import BaselineDiverged, LogTooShort, WindowLength
from .mlp import (
    FeatureScaler,
    FeedforwardNetwork,
    TrainingConfig,
    forward_batch,
    init_network,
    train,
)
from .plantsim import Plant, StateFeedbackController, simulate_closed_loop
from .polylti import DiscreteTransferFunction, simulate


# ---------------------------------------------------------------------------
# input selections

@dataclass(frozen=True)
class ExactInverse:
    """Full inverse-dynamics template: output window plus past references.

    Features y(k-n+r : k+r) and u(k-n+r : k-1), label u(k).  At runtime the
    u features are the generator's own previous outputs, so an unstable
    learned inverse feeds back on itself.
    """

    n: int
    r: int

    @property
    def y_offsets(self):
        return tuple(range(-self.n + self.r, self.r + 1))

    @property
    def u_offsets(self):
        return tuple(range(-self.n + self.r, 0))

    relative = False
    vel_offsets = ()


@dataclass(frozen=True)
class ApproxInverse:
    """Reference-free template: the output window y(k : k+n) only."""

    n: int

    @property
    def y_offsets(self):
        return tuple(range(0, self.n + 1))

    u_offsets = ()
    relative = False
    vel_offsets = ()


@dataclass(frozen=True)
class NaivePreview:
    """Single preview sample y(k+r); the bare-minimum causal template."""

    r: int

    @property
    def y_offsets(self):
        return (self.r,)

    u_offsets = ()
    relative = False
    vel_offsets = ()


@dataclass(frozen=True)
class AugmentedPast:
    """ApproxInverse plus past references u(k-past_count : k-1)."""

    n: int
    past_count: int = 1

    @property
    def y_offsets(self):
        return tuple(range(0, self.n + 1))

    @property
    def u_offsets(self):
        return tuple(range(-self.past_count, 0))

    relative = False
    vel_offsets = ()


@dataclass(frozen=True)
class RelativeApprox:
    """Difference-learning template for the surrogate-axis pipeline.

    Position offsets k+1 : k+n+1 and velocity offsets k+1 : k+n, both as
    differences from the current sample; the label is the reference offset
    u(k) - y(k).  Improves conditioning by removing the absolute position.
    """

    n: int

    @property
    def y_offsets(self):
        return tuple(range(1, self.n + 2))

    @property
    def vel_offsets(self):
        return tuple(range(1, self.n + 1))

    u_offsets = ()
    relative = True


@dataclass(frozen=True)
class RelativeExact:
    """Difference-learning variant of ExactInverse (anchored at the current sample)."""

    n: int
    r: int

    @property
    def y_offsets(self):
        return tuple(o for o in range(-self.n + self.r, self.r + 1) if o != 0)

    @property
    def u_offsets(self):
        return tuple(range(-self.n + self.r, 0))

    relative = True
    vel_offsets = ()


_SELECTION_TYPES = {
    "exact_inverse": ExactInverse,
    "approx_inverse": ApproxInverse,
    "naive_preview": NaivePreview,
    "augmented_past": AugmentedPast,
    "relative_approx": RelativeApprox,
    "relative_exact": RelativeExact,
}


def selection_descriptor(selection) -> dict:
    for name, cls in _SELECTION_TYPES.items():
        if isinstance(selection, cls):
            fields = {k: getattr(selection, k) for k in selection.__dataclass_fields__}
            return {"variant": name, **fields}
    raise ValueError(f"unknown selection {selection!r}")


def selection_from_descriptor(desc: dict):
    kind = dict(desc)
    cls = _SELECTION_TYPES[kind.pop("variant")]
    return cls(**kind)


def feature_names(selection) -> list:
    names = [f"y[k{o:+d}]" if o else "y[k]" for o in selection.y_offsets]
    names += [f"dy[k{o:+d}]" for o in selection.vel_offsets]
    names += [f"u[k{o:+d}]" for o in selection.u_offsets]
    return names


# ---------------------------------------------------------------------------
# trajectories and baseline logs

@dataclass(frozen=True)
class Trajectory:
    """Named desired trajectory sampled through a callable of time."""

    trajectory_id: str
    fn: Callable[[np.ndarray], np.ndarray]
    duration: float


def sinusoid(amplitude: float, period: float) -> Callable:
    return lambda t: amplitude * np.sin(2 * np.pi * np.asarray(t) / period)


def generate_training_trajectories(amplitudes, periods, duration: float):
    """Cartesian product of sinusoids A sin(2 pi t / T)."""
    if not len(amplitudes) or not len(periods):
        raise ValueError("amplitude and period sets must be non-empty")
    out = []
    for a in amplitudes:
        for p in periods:
            out.append(
                Trajectory(f"sin_A{a:g}_T{p:g}", sinusoid(a, p), duration)
            )
    return out


@dataclass
class IOLog:
    """Reference/output pair sampled at the learning-module rate."""

    u: np.ndarray
    y: np.ndarray
    dt: float
    trajectory_id: str = ""
    y_vel: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(self.u) != len(self.y):
            raise ValueError("u and y lengths differ")
        if self.y_vel is None:
            self.y_vel = np.gradient(self.y, self.dt) if len(self.y) > 1 else np.zeros_like(self.y)


@dataclass
class PendulumBaseline:
    """Nonlinear pendulum-cart loop logged at the module rate."""

    plant: Plant
    controller: StateFeedbackController
    dt_sim: float = 1e-3
    dt_module: float = 0.015
    divergence_bound: float = 1e3

    def run(self, reference_source, duration):
        return simulate_closed_loop(
            self.plant,
            self.controller,
            reference_source,
            duration,
            dt=self.dt_sim,
            dt_module=self.dt_module,
            divergence_bound=self.divergence_bound,
        )

    def log(self, trajectory: Trajectory) -> IOLog:
        trace = self.run(trajectory.fn, trajectory.duration)
        if trace.diverged:
            raise BaselineDiverged(
                f"baseline diverged on {trajectory.trajectory_id} at t={trace.diverged_at}"
            )
        stride = max(1, int(round(self.dt_module / self.dt_sim)))
        idx = np.arange(0, len(trace.t), stride)
        return IOLog(
            u=trace.u_ref_pos[idx],
            y=trace.y[idx],
            dt=self.dt_module,
            trajectory_id=trajectory.trajectory_id,
            y_vel=trace.x[idx, 1],
        )


@dataclass
class TransferFunctionBaseline:
    """Discrete LTI loop driven directly at its own sample time."""

    tf: DiscreteTransferFunction
    divergence_bound: float = 1e3

    def respond(self, refs: np.ndarray) -> np.ndarray:
        return simulate(self.tf, np.asarray(refs, dtype=float))

    def log(self, trajectory: Trajectory) -> IOLog:
        t = np.arange(0.0, trajectory.duration, self.tf.sample_time)
        u = np.asarray(trajectory.fn(t), dtype=float)
        y = self.respond(u)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > self.divergence_bound:
            raise BaselineDiverged(f"baseline diverged on {trajectory.trajectory_id}")
        return IOLog(u=u, y=y, dt=self.tf.sample_time, trajectory_id=trajectory.trajectory_id)


def collect_baseline_data(baseline, trajectories) -> list:
    """Log every trajectory through the baseline; diverged runs abort."""
    return [baseline.log(traj) for traj in trajectories]


# ---------------------------------------------------------------------------
# dataset assembly

@dataclass
class TrainingDataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: list
    source_ids: list
    sample_time: float

    def __post_init__(self):
        if len(self.X) != len(self.y):
            raise ValueError("feature and label row counts differ")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ValueError("dataset contains non-finite entries")

    def to_csv(self, path):
        header = ",".join(self.feature_names + ["label"])
        data = np.column_stack([self.X, self.y])
        np.savetxt(path, data, delimiter=",", header=header, comments="")


def _rows_for_log(selection, log: IOLog, skip: int):
    y_offs = selection.y_offsets
    v_offs = selection.vel_offsets
    u_offs = selection.u_offsets
    all_offs = list(y_offs) + list(v_offs) + list(u_offs) + [0]
    lo = max(0, -min(all_offs)) + skip
    hi = len(log.y) - 1 - max(all_offs)
    if hi < lo:
        return None
    ks = np.arange(lo, hi + 1)
    cols = [log.y[ks + o] for o in y_offs]
    cols += [log.y_vel[ks + o] for o in v_offs]
    cols += [log.u[ks + o] for o in u_offs]
    X = np.column_stack(cols)
    labels = log.u[ks].copy()
    if selection.relative:
        n_y, n_v = len(y_offs), len(v_offs)
        X[:, :n_y] -= log.y[ks, None]
        if n_v:
            X[:, n_y : n_y + n_v] -= log.y_vel[ks, None]
        if len(u_offs):
            X[:, n_y + n_v :] -= log.y[ks, None]
        labels -= log.y[ks]
    return X, labels


def build_features(
    selection,
    logs,
    dataset_size: Optional[int] = None,
    seed: int = 0,
    transient_skip: float = 2.0,
) -> TrainingDataset:
    """One row per admissible index; boundary windows are dropped.

    The first ``transient_skip`` seconds of each log are discarded to
    remove startup transients.  When ``dataset_size`` is set, rows are
    subsampled with equal per-log proportions using a seeded shuffle.
    """
    if not logs:
        raise ValueError("no logs supplied")
    per_log = []
    for log in logs:
        skip = int(round(transient_skip / log.dt))
        rows = _rows_for_log(selection, log, skip)
        if rows is None:
            raise LogTooShort(
                f"log {log.trajectory_id!r} has no admissible rows for {selection}"
            )
        per_log.append((log, *rows))

    rng = np.random.default_rng(seed)
    if dataset_size is not None:
        share = max(1, dataset_size // len(per_log))
        sampled = []
        for log, X, labels in per_log:
            take = min(share, len(X))
            idx = rng.permutation(len(X))[:take]
            idx.sort()
            sampled.append((log, X[idx], labels[idx]))
        per_log = sampled

    X = np.vstack([X for _, X, _ in per_log])
    y = np.concatenate([lab for _, _, lab in per_log])
    ids = [log.trajectory_id for log, _, _ in per_log]
    return TrainingDataset(X, y, feature_names(selection), ids, per_log[0][0].dt)


# ---------------------------------------------------------------------------
# trained generator

@dataclass
class ReferenceGenerator:
    """Trained inverse packaged with its selection and normalization."""

    selection: object
    net: FeedforwardNetwork
    x_scaler: FeatureScaler
    y_scaler: FeatureScaler
    sample_time: float
    metadata: dict = field(default_factory=dict)

    def _predict(self, X):
        out = forward_batch(self.net, self.x_scaler.transform(X))
        return self.y_scaler.inverse_transform(out)[:, 0]

    def generate(self, window, past=None, vel_window=None, anchor=None, vel_anchor=None):
        """One reference sample from a desired-output window.

        ``window`` holds the y-template samples in offset order; selections
        with reference features need ``past`` (own previous outputs, oldest
        first), and relative selections need the anchors they difference
        against.
        """
        sel = self.selection
        window = np.asarray(window, dtype=float)
        if window.shape != (len(sel.y_offsets),):
            raise WindowLength(
                f"expected window of {len(sel.y_offsets)} samples, got {window.shape}"
            )
        cols = list(window)
        if sel.vel_offsets:
            vel_window = np.asarray(vel_window, dtype=float)
            if vel_window.shape != (len(sel.vel_offsets),):
                raise WindowLength(
                    f"expected velocity window of {len(sel.vel_offsets)} samples"
                )
            cols += list(vel_window)
        if sel.u_offsets:
            past = np.asarray(past, dtype=float)
            if past.shape != (len(sel.u_offsets),):
                raise WindowLength(f"expected {len(sel.u_offsets)} past references")
            cols += list(past)
        x = np.array(cols)
        if sel.relative:
            if anchor is None:
                raise WindowLength("relative selection requires an anchor sample")
            n_y = len(sel.y_offsets)
            n_v = len(sel.vel_offsets)
            x[:n_y] -= anchor
            if n_v:
                x[n_y : n_y + n_v] -= 0.0 if vel_anchor is None else vel_anchor
            if sel.u_offsets:
                x[n_y + n_v :] -= anchor
            return float(anchor + self._predict(x[None, :])[0])
        return float(self._predict(x[None, :])[0])

    def shape_sequence(self, y_d, y_d_vel=None) -> np.ndarray:
        """Whole-trajectory reference from desired samples at the module rate.

        Windows past either end reuse the edge samples.  Selections with
        reference features run sequentially on their own output history,
        seeded with the first desired sample.
        """
        sel = self.selection
        y_d = np.asarray(y_d, dtype=float)
        L = len(y_d)
        if L == 0:
            return np.zeros(0)
        if y_d_vel is None:
            y_d_vel = (
                np.gradient(y_d, self.sample_time) if L > 1 else np.zeros_like(y_d)
            )
        max_off = max(list(sel.y_offsets) + list(sel.vel_offsets) + [0])
        min_off = min(list(sel.y_offsets) + list(sel.u_offsets) + [0])
        pad_lo, pad_hi = -min_off, max_off
        yp = np.concatenate([np.full(pad_lo, y_d[0]), y_d, np.full(pad_hi, y_d[-1])])
        vp = np.concatenate(
            [np.full(pad_lo, y_d_vel[0]), y_d_vel, np.full(pad_hi, y_d_vel[-1])]
        )
        ks = np.arange(L) + pad_lo

        if not sel.u_offsets:
            cols = [yp[ks + o] for o in sel.y_offsets]
            cols += [vp[ks + o] for o in sel.vel_offsets]
            X = np.column_stack(cols)
            if sel.relative:
                n_y, n_v = len(sel.y_offsets), len(sel.vel_offsets)
                X[:, :n_y] -= y_d[:, None]
                if n_v:
                    X[:, n_y:] -= y_d_vel[:, None]
                return y_d + self._predict(X)
            return self._predict(X)

        # own-reference feedback: strictly sequential
        u_hist = np.full(pad_lo + L, y_d[0])
        out = np.zeros(L)
        for i in range(L):
            k = ks[i]
            window = yp[[k + o for o in sel.y_offsets]]
            vel_w = vp[[k + o for o in sel.vel_offsets]] if sel.vel_offsets else None
            past = u_hist[[k + o for o in sel.u_offsets]]
            if sel.relative:
                val = self.generate(
                    window, past=past, vel_window=vel_w,
                    anchor=y_d[i], vel_anchor=y_d_vel[i],
                )
            else:
                val = self.generate(window, past=past, vel_window=vel_w)
            if not math.isfinite(val):
                # unstable learned inverse: freeze the explosion rather than
                # propagate NaN through downstream feature windows
                prev = u_hist[k - 1]
                val = math.copysign(1e9, prev) if math.isfinite(prev) else 1e9
            out[i] = val
            u_hist[k] = val
        return out

    def output_bound(self, input_bound: float) -> float:
        """Analytic bound on |generated reference| for bounded inputs."""
        scaled = (input_bound + np.max(np.abs(self.x_scaler.mean_))) / np.min(
            self.x_scaler.scale_
        )
        raw = self.net.output_bound(scaled)
        return float(
            raw * self.y_scaler.scale_[0] + abs(self.y_scaler.mean_[0])
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "network": json.loads(
                    self.net.to_json(
                        norm_stats={
                            "x": self.x_scaler.stats(),
                            "y": self.y_scaler.stats(),
                        }
                    )
                ),
                "selection": selection_descriptor(self.selection),
                "sample_time": self.sample_time,
                "metadata": self.metadata,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str):
        obj = json.loads(text)
        net, stats = FeedforwardNetwork.from_json(json.dumps(obj["network"]))
        return cls(
            selection=selection_from_descriptor(obj["selection"]),
            net=net,
            x_scaler=FeatureScaler.from_stats(stats["x"]),
            y_scaler=FeatureScaler.from_stats(stats["y"]),
            sample_time=obj["sample_time"],
            metadata=obj.get("metadata", {}),
        )


def train_inverse(
    selection,
    logs,
    hidden=(5, 5),
    activation="tanh",
    config: Optional[TrainingConfig] = None,
    dataset_size: Optional[int] = None,
    transient_skip: float = 2.0,
) -> ReferenceGenerator:
    """Assemble the dataset, fit the network, and package the generator."""
    config = config or TrainingConfig()
    dataset = build_features(
        selection, logs, dataset_size=dataset_size, seed=config.seed,
        transient_skip=transient_skip,
    )
    x_scaler = FeatureScaler().fit(dataset.X)
    y_scaler = FeatureScaler().fit(dataset.y[:, None])
    net = init_network(
        [dataset.X.shape[1], *hidden, 1], activation, config.seed
    )
    best, history = train(
        net,
        x_scaler.transform(dataset.X),
        y_scaler.transform(dataset.y[:, None]),
        config,
    )
    return ReferenceGenerator(
        selection=selection,
        net=best,
        x_scaler=x_scaler,
        y_scaler=y_scaler,
        sample_time=dataset.sample_time,
        metadata={
            "rows": int(len(dataset.X)),
            "sources": dataset.source_ids,
            "best_epoch": history.best_epoch,
            "val_loss": history.val_loss[history.best_epoch - 1]
            if history.val_loss
            else None,
            "seed": config.seed,
        },
    )


# ---------------------------------------------------------------------------
# reference sources for the closed-loop simulator

def baseline_source(traj_fn):
    """The raw desired trajectory as reference (no inverse)."""
    return lambda t: np.asarray(traj_fn(t), dtype=float)


def tf_inverse_source(traj_fn, inverse_tf: DiscreteTransferFunction):
    """Model-based inverse filtering of the desired trajectory."""

    def source(t):
        y_d = np.asarray(traj_fn(t), dtype=float)
        return simulate(inverse_tf, y_d, preview=inverse_tf.preview)

    return source


def generator_source(traj_fn, generator: ReferenceGenerator):
    """Learned inverse shaping of the desired trajectory."""

    def source(t):
        return generator.shape_sequence(np.asarray(traj_fn(t), dtype=float))

    return source


# ---------------------------------------------------------------------------
# smoothness bound behind the window-only approximation

def taylor_correlation_bound(amplitude: float, period: float, dt: float, p: int) -> float:
    """Closed-form bound on |u(k+p) - u(k)| for a sinusoid: A(e^{2 pi p dt / T} - 1)."""
    if period <= 0 or dt <= 0:
        raise ValueError("period and dt must be positive")
    if p < 0:
        raise ValueError("p must be non-negative")
    return amplitude * (math.exp(2 * math.pi * p * dt / period) - 1.0)
