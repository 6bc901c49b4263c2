"""Scenario runner: baseline vs. model-based vs. learned inverses.

Each scenario produces time-aligned (desired, reference, output) traces
plus an RMS tracking error over a steady-state window.  Divergence is a
tolerated outcome: the result is flagged, its RMS becomes infinite, and
comparisons against it read as maximal degradation.  Exports are
deterministic for fixed seeds so summaries can be diffed byte-for-byte.
"""

import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptyWindow
from .invlearn import (
    PendulumBaseline,
    ReferenceGenerator,
    Trajectory,
    baseline_source,
    generator_source,
    sinusoid,
    tf_inverse_source,
)
from .polylti import DiscreteTransferFunction, simulate

METHOD_BASELINE = "baseline"
METHOD_M1 = "M1_exact_dnn"
METHOD_M2 = "M2_zos"
METHOD_M3 = "M3_approx_dnn"
METHOD_ABLATION = "ablation_past_u"


@dataclass
class ExperimentResult:
    scenario: str
    method: str
    t: np.ndarray
    y_d: np.ndarray
    u: np.ndarray
    y: np.ndarray
    rms: float
    diverged: bool
    metadata: dict = field(default_factory=dict)


def rms_error(y, y_d, t=None, skip: float = 0.0) -> float:
    """Root-mean-square tracking error over the window t >= skip.

    Multi-dimensional traces use the per-sample Euclidean error norm.
    """
    y = np.asarray(y, dtype=float)
    y_d = np.asarray(y_d, dtype=float)
    if y.shape != y_d.shape:
        raise ValueError("trace shapes differ")
    if t is None:
        mask = np.ones(len(y), dtype=bool)
    else:
        mask = np.asarray(t) >= skip
    if not np.any(mask):
        raise EmptyWindow(f"no samples at or after t={skip}")
    err = y[mask] - y_d[mask]
    if err.ndim == 1:
        return float(np.sqrt(np.mean(err**2)))
    return float(np.sqrt(np.mean(np.sum(err**2, axis=1))))


def reduction_pct(rms_method: float, rms_baseline: float) -> float:
    """100 * (1 - rms/rms_baseline); -inf when the method diverged."""
    if not math.isfinite(rms_method):
        return -math.inf
    return 100.0 * (1.0 - rms_method / rms_baseline)


# ---------------------------------------------------------------------------
# pendulum scenarios

def _pendulum_result(scenario, method, baseline, source, traj_fn, duration, skip, meta):
    trace = baseline.run(source, duration)
    y_d = np.asarray(traj_fn(trace.t), dtype=float)
    rms = math.inf if trace.diverged else rms_error(trace.y, y_d, trace.t, skip)
    return ExperimentResult(
        scenario=scenario,
        method=method,
        t=trace.t,
        y_d=y_d,
        u=trace.u_ref_pos,
        y=trace.y,
        rms=rms,
        diverged=trace.diverged,
        metadata={**meta, "diverged_at": trace.diverged_at},
    )


def run_pendulum_sweep(
    baseline: PendulumBaseline,
    generator: ReferenceGenerator,
    periods,
    amplitude: float = 2.5,
    skip: float = 5.0,
    scenario: str = "pendulum_sweep",
) -> list:
    """Baseline vs. learned inverse across test periods (one sinusoid each)."""
    results = []
    for T in periods:
        traj = sinusoid(amplitude, T)
        duration = 2 * T + skip
        meta = {"period": T, "amplitude": amplitude}
        base = _pendulum_result(
            scenario, METHOD_BASELINE, baseline, baseline_source(traj), traj,
            duration, skip, meta,
        )
        learned = _pendulum_result(
            scenario, METHOD_M3, baseline, generator_source(traj, generator), traj,
            duration, skip, meta,
        )
        learned.metadata["reduction_pct"] = reduction_pct(learned.rms, base.rms)
        results += [base, learned]
    return results


def run_ablation(
    baseline: PendulumBaseline,
    augmented_generator: ReferenceGenerator,
    approx_generator: ReferenceGenerator,
    trajectory_fn,
    duration: float = 60.0,
    skip: float = 5.0,
    scenario: str = "ablation",
) -> list:
    """Past-reference ablation: the augmented generator is expected to diverge."""
    results = [
        _pendulum_result(
            scenario, METHOD_BASELINE, baseline, baseline_source(trajectory_fn),
            trajectory_fn, duration, skip, {},
        ),
        _pendulum_result(
            scenario, METHOD_M3, baseline,
            generator_source(trajectory_fn, approx_generator),
            trajectory_fn, duration, skip, {},
        ),
        _pendulum_result(
            scenario, METHOD_ABLATION, baseline,
            generator_source(trajectory_fn, augmented_generator),
            trajectory_fn, duration, skip, {},
        ),
    ]
    return results


def run_reference_methods(
    baseline: PendulumBaseline,
    methods,
    trajectory_fn,
    duration: float,
    skip: float = 5.0,
    scenario: str = "methods",
) -> list:
    """Baseline plus named reference sources on one trajectory.

    ``methods`` maps method tags to reference-source factories taking the
    trajectory function (e.g. a learned generator or an inverse filter).
    """
    base = _pendulum_result(
        scenario, METHOD_BASELINE, baseline, baseline_source(trajectory_fn),
        trajectory_fn, duration, skip, {},
    )
    results = [base]
    for method, factory in methods.items():
        res = _pendulum_result(
            scenario, method, baseline, factory(trajectory_fn),
            trajectory_fn, duration, skip, {},
        )
        res.metadata["reduction_pct"] = reduction_pct(res.rms, base.rms)
        results.append(res)
    return results


# ---------------------------------------------------------------------------
# surrogate-axis scenarios

def _chain_result(scenario, method, surrogate, refs, y_d, skip, bound, meta):
    dt = surrogate.sample_time
    t = np.arange(len(y_d)) * dt
    refs = np.asarray(refs, dtype=float)
    bad = ~np.isfinite(refs) | (np.abs(refs) > bound)
    diverged = bool(np.any(bad))
    if diverged:
        cut = int(np.argmax(bad))
        refs = refs[:cut]
        y = simulate(surrogate, refs) if cut else np.zeros(0)
        t, y_d = t[:cut], y_d[:cut]
    else:
        y = simulate(surrogate, refs)
        over = ~np.isfinite(y) | (np.abs(y) > bound)
        if np.any(over):
            diverged = True
            cut = int(np.argmax(over))
            refs, y, t, y_d = refs[:cut], y[:cut], t[:cut], y_d[:cut]
    rms = math.inf if diverged else rms_error(y, y_d, t, skip)
    return ExperimentResult(
        scenario=scenario, method=method, t=t, y_d=y_d, u=refs, y=y,
        rms=rms, diverged=diverged, metadata=dict(meta),
    )


def run_three_way_comparison(
    surrogate: DiscreteTransferFunction,
    m1_generator: Optional[ReferenceGenerator],
    zos_tf: DiscreteTransferFunction,
    m3_generator: ReferenceGenerator,
    trajectories,
    skip: float = 5.0,
    divergence_bound: float = 1e3,
    scenario: str = "three_way",
) -> list:
    """Baseline and the three inversion chains on each test trajectory."""
    results = []
    dt = surrogate.sample_time
    for idx, traj in enumerate(trajectories):
        t = np.arange(0.0, traj.duration, dt)
        y_d = np.asarray(traj.fn(t), dtype=float)
        meta = {"trajectory": traj.trajectory_id, "index": idx}
        base = _chain_result(
            scenario, METHOD_BASELINE, surrogate, y_d, y_d, skip, divergence_bound, meta
        )
        rows = [base]
        chains = []
        if m1_generator is not None:
            chains.append((METHOD_M1, m1_generator.shape_sequence(y_d)))
        chains.append(
            (METHOD_M2, simulate(zos_tf, y_d, preview=zos_tf.preview))
        )
        chains.append((METHOD_M3, m3_generator.shape_sequence(y_d)))
        for method, refs in chains:
            res = _chain_result(
                scenario, method, surrogate, refs, y_d, skip, divergence_bound, meta
            )
            res.metadata["reduction_pct"] = reduction_pct(res.rms, base.rms)
            rows.append(res)
        results += rows
    return results


def synth_drawn_trajectories(
    count: int,
    duration: float,
    seed: int,
    amplitude: float = 1.0,
    min_period: float = 4.0,
    components=(3, 6),
) -> list:
    """Hand-drawn-style test trajectories: band-limited random sinusoid sums.

    Each trajectory is a sum of 3..6 random-phase sinusoids with periods of
    at least ``min_period``, scaled to the requested amplitude and eased in
    from rest over the first few seconds.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        n_comp = int(rng.integers(components[0], components[1] + 1))
        periods = rng.uniform(min_period, duration / 2.0, n_comp)
        phases = rng.uniform(0, 2 * np.pi, n_comp)
        weights = rng.uniform(0.3, 1.0, n_comp)

        def make(periods=periods, phases=phases, weights=weights):
            def raw(t):
                t = np.asarray(t, dtype=float)
                return sum(
                    w * np.sin(2 * np.pi * t / p + ph)
                    for w, p, ph in zip(weights, periods, phases)
                )

            offset = raw(0.0)

            def fn(t):
                t = np.asarray(t, dtype=float)
                ramp = np.clip(t / (2 * min_period), 0.0, 1.0)
                ramp = ramp * ramp * (3 - 2 * ramp)
                return ramp * (raw(t) - offset)

            # normalize peak amplitude on a dense probe
            probe = fn(np.linspace(0, duration, 2048))
            scale = amplitude / max(np.max(np.abs(probe)), 1e-9)

            def scaled(t):
                return scale * fn(t)

            return scaled

        out.append(Trajectory(f"drawn_{i}", make(), duration))
    return out


# ---------------------------------------------------------------------------
# export

def _summary_row(result: ExperimentResult, seed: int):
    return {
        "scenario": result.scenario,
        "method": result.method,
        "rms": None if result.diverged else result.rms,
        "reduction_pct": (
            None
            if result.method == METHOD_BASELINE
            or result.metadata.get("reduction_pct") in (None, -math.inf)
            else result.metadata["reduction_pct"]
        ),
        "diverged": result.diverged,
        "seed": seed,
        "trajectory": result.metadata.get("trajectory")
        or result.metadata.get("period"),
    }


def export_results(results, out_dir, seed: int = 0) -> dict:
    """Write per-result trace CSVs and a deterministic summary JSON."""
    os.makedirs(out_dir, exist_ok=True)
    summary = []
    for idx, res in enumerate(results):
        name = f"{res.scenario}__{res.method}__{idx:03d}.csv"
        path = os.path.join(out_dir, name)
        y_d = res.y_d if res.y_d.ndim > 1 else res.y_d[:, None]
        y = res.y if res.y.ndim > 1 else res.y[:, None]
        dims = y_d.shape[1]
        header = (
            ["t"]
            + [f"y_d{i+1}" for i in range(dims)]
            + ["u"]
            + [f"y{i+1}" for i in range(dims)]
        )
        u = res.u if res.u.ndim > 1 else res.u[:, None]
        data = np.column_stack([res.t, y_d, u, y])
        np.savetxt(path, data, delimiter=",", header=",".join(header), comments="")
        row = _summary_row(res, seed)
        row["trace_file"] = name
        summary.append(row)
    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return {"summary": summary_path, "count": len(summary)}
