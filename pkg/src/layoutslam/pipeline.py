"""End-to-end orchestration: simulate, front end, graph, three solve stages, evaluation.

Stages are ``reg`` (registration: odometry integrated in the aligned frame),
``ls`` (sparse least squares over poses and plane slots) and ``convex``
(L1 equivalence selection, thresholding and merged re-solve). Each later
stage includes the earlier ones.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import chi2

from . import config as config_mod
from .export import export_map, map_from_dict
from .frontend import entropy_compass, horizontal_points, process_frame, temporal_correspondences
from .geometry import CorrespondenceEdge, SegmentObservation, wrap_yaw, yaw_rotation
from .graph import (
    FactorGraph,
    Triplets,
    assemble_measurement_system,
    build_equivalence_matrix,
    build_graph,
    build_topology_constraints,
    generate_hypotheses,
    slot_offsets,
    system_to_json,
)
from .sim import (
    DepthImage,
    Scenario,
    render_depth_frame,
    simulate_odometry,
    simulate_range_measurements,
    simulate_yaw_deltas,
)
from .solver import (
    LayoutStructure,
    ResolvedModel,
    collapse_and_resolve,
    compute_delta,
    model_extents,
    solve_inequality_ls,
    solve_least_squares,
    solve_sparse_selection,
    threshold_equivalences,
)

log = logging.getLogger(__name__)

STAGES = ("reg", "ls", "convex")
DRIFT_KEYS = ("raw", "compass", "least_squares", "convex")
OUTPUT_FILES = ("report.json", "map.svg", "map.json", "segments.json", "system.json", "solution.json")


class PipelineError(RuntimeError):
    """A stage failure; ``stage`` names where it happened."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class _stage:
    """Context manager that re-raises any failure tagged with the stage name."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, PipelineError):
            raise PipelineError(self.name, exc) from exc
        return False


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


@dataclass
class SimulationData:
    mode: str
    positions: np.ndarray  # ground truth (n, 3)
    yaws: np.ndarray  # ground truth (n,)
    closed: bool
    odometry: np.ndarray  # aligned-frame translations (n-1, 3)
    body_odometry: np.ndarray  # sensor-frame translations (n-1, 3)
    yaw_deltas: np.ndarray  # (n-1,)
    observed_planes: list[tuple[int, float, int]]  # (axis, offset, facing) keys seen by the sensor
    observations: list[SegmentObservation] = field(default_factory=list)
    frames: list[DepthImage] = field(default_factory=list)

    @property
    def n_frames(self) -> int:
        return len(self.positions)


def _body_translations(odometry: np.ndarray, yaws: np.ndarray) -> np.ndarray:
    out = np.empty_like(odometry)
    for i, t in enumerate(odometry):
        out[i] = yaw_rotation(-yaws[i]) @ t
    return out


def simulate(scn: Scenario) -> SimulationData:
    """Odometry, yaw increments and either range observations or depth frames."""
    traj = scn.trajectory
    odo = simulate_odometry(traj, scn.noise)
    yaws = traj.yaws()
    sim = SimulationData(
        mode=scn.mode,
        positions=traj.positions(),
        yaws=yaws,
        closed=traj.closed,
        odometry=odo,
        body_odometry=_body_translations(odo, yaws),
        yaw_deltas=simulate_yaw_deltas(traj, scn.noise),
        observed_planes=[],
    )
    keys = set()
    if scn.mode == "range":
        sim.observations = simulate_range_measurements(scn.world, traj, scn.noise, scn.sensor)
        keys = {scn.world.planes[o.source_plane].key for o in sim.observations}
    else:
        min_pixels = scn.config.get("frontend", {}).get("min_inliers", 50)
        for i, pose in enumerate(traj.poses):
            image, hit = render_depth_frame(
                scn.world, pose, scn.intrinsics, scn.sensor.max_range, scn.noise, i, return_hits=True
            )
            sim.frames.append(image)
            idx, counts = np.unique(hit[hit >= 0], return_counts=True)
            keys |= {scn.world.planes[j].key for j, c in zip(idx, counts) if c >= min_pixels}
    sim.observed_planes = sorted(keys)
    return sim


def _fmt(v: float) -> str:
    return repr(float(v))


def write_simulation(sim: SimulationData, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "mode": sim.mode,
        "closed": sim.closed,
        "ground_truth": np.column_stack([sim.positions, sim.yaws]).tolist(),
        "observed_planes": [list(k) for k in sim.observed_planes],
    }
    (out / "simulation.json").write_text(json.dumps(meta, indent=1) + "\n")
    with open(out / "odometry.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "tx", "ty", "tz", "bx", "by", "bz", "dyaw"])
        for i in range(len(sim.odometry)):
            row = list(sim.odometry[i]) + list(sim.body_odometry[i]) + [sim.yaw_deltas[i]]
            w.writerow([i] + [_fmt(v) for v in row])
    if sim.mode == "range":
        obs = [o.to_dict() for o in sim.observations]
        (out / "observations.json").write_text(json.dumps(obs, indent=1) + "\n")
    else:
        frames = out / "frames"
        frames.mkdir(exist_ok=True)
        for f in sim.frames:
            f.save(frames / f"frame_{f.frame_index:05d}.bin")


def read_simulation(out: Path) -> SimulationData:
    meta = json.loads((out / "simulation.json").read_text())
    gt = np.asarray(meta["ground_truth"], dtype=float).reshape(-1, 4)
    with open(out / "odometry.csv", newline="") as fh:
        rows = [list(map(float, r[1:])) for r in list(csv.reader(fh))[1:]]
    arr = np.asarray(rows, dtype=float).reshape(-1, 7)
    sim = SimulationData(
        mode=meta["mode"],
        positions=gt[:, :3].copy(),
        yaws=gt[:, 3].copy(),
        closed=bool(meta["closed"]),
        odometry=arr[:, 0:3].copy(),
        body_odometry=arr[:, 3:6].copy(),
        yaw_deltas=arr[:, 6].copy(),
        observed_planes=[(int(a), float(o), int(f)) for a, o, f in meta["observed_planes"]],
    )
    if sim.mode == "range":
        data = json.loads((out / "observations.json").read_text())
        sim.observations = [SegmentObservation.from_dict(d) for d in data]
    else:
        sim.frames = [DepthImage.load(out / "frames" / f"frame_{i:05d}.bin") for i in range(sim.n_frames)]
    return sim


# ---------------------------------------------------------------------------
# Front end
# ---------------------------------------------------------------------------


@dataclass
class FrontendResult:
    yaws: np.ndarray  # fused absolute yaw per frame
    odometry: np.ndarray  # aligned-frame translations used by the back end
    segments: list[SegmentObservation]
    edges: list[CorrespondenceEdge]


def _segment_edges(segments, odometry, n_frames, params) -> list[CorrespondenceEdge]:
    by_frame: dict[int, list[SegmentObservation]] = {}
    for s in segments:
        by_frame.setdefault(s.frame_index, []).append(s)
    edges = []
    for i in range(n_frames - 1):
        edges += temporal_correspondences(
            by_frame.get(i, []), by_frame.get(i + 1, []), odometry[i], params.overlap_min, params.match_gate
        )
    return edges


def run_frontend(sim: SimulationData, cfg: dict) -> FrontendResult:
    """Segments, correspondences and aligned odometry.

    In range mode the observations already live in the aligned frame, which
    corresponds to a compass that is exact. In depth mode every frame is
    oriented by the entropy compass, searched in a narrow window around the
    dead-reckoned prediction, and the sensor-frame odometry is rotated by the
    fused yaw.
    """
    params = config_mod.frontend_params(cfg)
    n = sim.n_frames
    if sim.mode == "range":
        segs = list(sim.observations)
        return FrontendResult(sim.yaws.copy(), sim.odometry.copy(), segs, _segment_edges(segs, sim.odometry, n, params))
    f = cfg["frontend"]
    fine_r, fine_step = math.radians(f["compass_radius_deg"]), math.radians(f["compass_step_deg"])
    yaws = np.zeros(n)
    segs: list[SegmentObservation] = []
    for i, frame in enumerate(sim.frames):
        pts = horizontal_points(frame)
        if i == 0:
            center = math.radians(f["initial_yaw_deg"])
            coarse = entropy_compass(pts, center, math.radians(45.0), math.radians(1.0), params.histogram_bin)
            center = center if coarse is None else coarse
            radius = math.radians(1.0)
        else:
            center = yaws[i - 1] + sim.yaw_deltas[i - 1]
            radius = fine_r
        est = entropy_compass(pts, center, radius, fine_step, params.histogram_bin)
        yaws[i] = wrap_yaw(center if est is None else est)
        _, found = process_frame(frame, yaws[i], params, first_id=len(segs))
        segs += found
    odo = np.array([yaw_rotation(yaws[i]) @ t for i, t in enumerate(sim.body_odometry)]).reshape(-1, 3)
    return FrontendResult(yaws, odo, segs, _segment_edges(segs, odo, n, params))


# ---------------------------------------------------------------------------
# Back end
# ---------------------------------------------------------------------------


def integrate(origin, translations) -> np.ndarray:
    t = np.asarray(translations, dtype=float).reshape(-1, 3)
    return np.vstack([np.asarray(origin, dtype=float), np.asarray(origin, dtype=float) + np.cumsum(t, axis=0)])


def raw_trajectory(sim: SimulationData) -> np.ndarray:
    """Dead reckoning: sensor-frame odometry rotated by integrated yaw increments."""
    pos = [sim.positions[0].copy()]
    yaw = float(sim.yaws[0])
    for i, t in enumerate(sim.body_odometry):
        pos.append(pos[-1] + yaw_rotation(yaw) @ t)
        yaw += float(sim.yaw_deltas[i])
    return np.array(pos)


def slot_structures(graph: FactorGraph, xi) -> list[LayoutStructure]:
    offs = slot_offsets(graph, xi)
    return [LayoutStructure(s.axis, s.facing, float(offs[s.slot_id]), [s.slot_id]) for s in graph.slots]


def noise_delta(system, confidence: float) -> float:
    """Residual bound from the sensor model: the chi-square quantile over the weighted measurement rows.

    Only meaningful when rows are weighted by their inverse noise sigma; the
    anchor rows are excluded because the true start is known exactly.
    """
    m = sum(1 for k in system.row_kind if k != "anchor")
    return float(np.sqrt(chi2.ppf(confidence, m)))


def registration_xi(graph: FactorGraph, positions: np.ndarray) -> np.ndarray:
    """Parameter vector with poses from registration and each slot at its mean observed offset."""
    sums = np.zeros(len(graph.slots))
    counts = np.zeros(len(graph.slots))
    for f in graph.range_factors:
        sums[f.slot] += positions[f.frame, int(f.axis)] + f.d
        counts[f.slot] += 1
    return np.concatenate([positions.reshape(-1), sums / np.maximum(counts, 1)])


def _with_extents(graph, xi, structures) -> list[LayoutStructure]:
    model = ResolvedModel(np.asarray(xi), structures, 0.0, 0.0)
    return model_extents(xi, graph, model)


def reconstruct(sim: SimulationData, cfg: dict, stage: str = "convex") -> tuple[dict, dict]:
    """Run the front end and solve up to ``stage``.

    Returns ``(solution, artifacts)``. ``solution`` is JSON-ready and holds
    everything evaluation needs; ``artifacts`` holds the graph, system and
    matrices for writing ``segments.json`` and ``system.json``.
    """
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")
    s_cfg = cfg["solver"]
    timing = {}
    warnings: list[str] = []
    origin = sim.positions[0]

    with _stage("frontend"):
        t0 = time.perf_counter()
        fe = run_frontend(sim, cfg)
        timing["frontend"] = time.perf_counter() - t0
    with _stage("graph"):
        graph = build_graph(fe.segments, fe.edges, fe.odometry)
    traj = {"raw": raw_trajectory(sim), "compass": integrate(origin, fe.odometry)}
    xi_reg = registration_xi(graph, traj["compass"])
    structures = slot_structures(graph, xi_reg)
    final_xi = xi_reg
    artifacts = {"graph": graph, "frontend": fe, "system": None, "E": None, "D": None, "model": None}
    solution = {
        "stage": stage,
        "n_frames": graph.n_frames,
        "n_segments": len(fe.segments),
        "n_edges": len(fe.edges),
        "initial_segments": len(graph.slots),
        "fused_yaws": fe.yaws.tolist(),
        "least_squares": None,
        "convex": None,
    }

    if stage in ("ls", "convex"):
        with _stage("least_squares"):
            weighted = s_cfg["weighted"] or s_cfg["delta_mode"] == "noise"
            noise = cfg["noise"]
            system = assemble_measurement_system(
                graph,
                anchor_weight=s_cfg["anchor_weight"],
                origin=origin,
                range_sigma=noise["range_sigma"] if weighted else None,
                odom_sigma=noise["odom_sigma"] if weighted else None,
            )
            A, b = system.weighted()
            names = [system.index.name(c) for c in range(system.index.dim)]
            t0 = time.perf_counter()
            xi_ls = solve_least_squares(A, b, names)
            timing["least_squares"] = time.perf_counter() - t0
            res_ls = float(np.linalg.norm(A @ xi_ls - b))
        artifacts["system"] = system
        traj["least_squares"] = xi_ls[: 3 * graph.n_frames].reshape(-1, 3)
        structures = slot_structures(graph, xi_ls)
        final_xi = xi_ls
        solution["least_squares"] = {"residual": res_ls, "xi": xi_ls.tolist()}

    if stage == "convex":
        with _stage("convex"):
            eps, mu = s_cfg["epsilon"], s_cfg["mu"]
            index = system.index
            hyps = generate_hypotheses(graph, xi_ls, s_cfg["max_gap"])
            E = build_equivalence_matrix(hyps, index).tocsr()
            D = build_topology_constraints(graph, index).tocsr()
            artifacts["E"], artifacts["D"] = E, D
            if s_cfg["delta_mode"] == "noise":
                delta = noise_delta(system, s_cfg["noise_confidence"])
            else:
                delta = compute_delta(res_ls, eps)
            t0 = time.perf_counter()
            x_min, _ = solve_inequality_ls(A, b, D if D.shape[0] else None)
            r_min = float(np.linalg.norm(A @ x_min - b))
            if r_min > delta:
                raised = compute_delta(r_min, eps)
                warnings.append(
                    f"topology constraints raise the minimum residual to {r_min:.6g}; "
                    f"delta increased from {delta:.6g} to {raised:.6g}"
                )
                delta = raised
            sol = solve_sparse_selection(E, A, b, delta, D, max_iter=s_cfg["max_iter"])
            if not sol.converged:
                warnings.append("selection solver did not certify optimality; result is approximate")
            merge = threshold_equivalences(E, sol.xi, mu, hyps, len(graph.slots))
            model = collapse_and_resolve(graph, merge.classes, A, b, D)
            timing["convex"] = time.perf_counter() - t0
            if model.residual > delta * s_cfg["warn_ratio"] + 1e-9:
                warnings.append(
                    f"merged model residual {model.residual:.6g} exceeds {s_cfg['warn_ratio']:g} x delta "
                    f"({delta:.6g}); some accepted equivalences are likely false"
                )
        artifacts["selection"], artifacts["model"], artifacts["hypotheses"] = sol, model, hyps
        traj["convex"] = model.positions(graph.n_frames)
        structures = model.structures
        final_xi = model.xi
        solution["convex"] = {
            "epsilon": eps,
            "delta_mode": s_cfg["delta_mode"],
            "mu": mu,
            "max_gap": s_cfg["max_gap"],
            "delta": delta,
            "hypotheses": [h.to_dict() for h in hyps],
            "accepted": merge.accepted,
            "classes": merge.classes,
            "selection": sol.to_dict(),
            "gaps": np.abs(E @ sol.xi).tolist(),
            "residual_final": model.residual,
            "xi": model.xi.tolist(),
            "max_ineq_violation": model.max_ineq_violation,
        }

    structures = _with_extents(graph, final_xi, structures)
    solution["structures"] = [s.to_dict() for s in structures]
    solution["trajectories"] = {k: v.tolist() for k, v in traj.items()}
    solution["warnings"] = warnings
    solution["timing"] = timing
    artifacts["structures"] = structures
    artifacts["positions"] = traj[{"reg": "compass", "ls": "least_squares", "convex": "convex"}[stage]]
    for w in warnings:
        log.warning(w)
    return solution, artifacts


def write_reconstruction(solution: dict, artifacts: dict, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    fe = artifacts["frontend"]
    seg = {"segments": [s.to_dict() for s in fe.segments], "edges": [e.to_dict() for e in fe.edges]}
    (out / "segments.json").write_text(json.dumps(seg, indent=1) + "\n")
    if artifacts["system"] is not None:
        E = D = None
        if artifacts["E"] is not None:
            E = Triplets.from_lists(*_coo(artifacts["E"]))
            D = Triplets.from_lists(*_coo(artifacts["D"]))
        (out / "system.json").write_text(system_to_json(artifacts["system"], E, D) + "\n")
    (out / "solution.json").write_text(json.dumps(solution, indent=1, sort_keys=True) + "\n")
    write_map(artifacts["structures"], artifacts["positions"], out)


def _coo(M):
    c = M.tocoo()
    return c.row, c.col, c.data, c.shape


def write_map(structures, positions, out: Path) -> None:
    (out / "map.json").write_text(export_map(structures, positions, "json"))
    (out / "map.svg").write_text(export_map(structures, positions, "svg"))


def read_map(out: Path) -> tuple[list[LayoutStructure], np.ndarray]:
    return map_from_dict(json.loads((out / "map.json").read_text()))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def compute_drift(positions, closed: bool = True) -> float | None:
    """Endpoint drift ``||p_last - p_first||``; None when the ground-truth path is not a loop."""
    if not closed:
        return None
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    return float(np.linalg.norm(pos[-1] - pos[0]))


def path_length(positions) -> float:
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    return float(np.linalg.norm(np.diff(pos, axis=0), axis=1).sum())


def surface_distance_check(
    structures: Sequence[LayoutStructure],
    pairs: Sequence[tuple[int, int]],
    truth: Sequence[float],
) -> list[dict]:
    """Compare model distances ``|offset_a - offset_b|`` against ground-truth distances.

    Each pair names two structure ids that must share an axis.
    """
    if len(pairs) != len(truth):
        raise ValueError("need one ground-truth distance per pair")
    rows = []
    for (i, j), gt in zip(pairs, truth):
        a, b = structures[i], structures[j]
        if a.axis != b.axis:
            raise ValueError(f"structures {i} and {j} lie on different axes")
        model = abs(a.offset - b.offset)
        rows.append(
            {
                "a": int(i),
                "b": int(j),
                "axis": a.axis.label,
                "ground_truth": float(gt),
                "model": model,
                "delta": model - float(gt),
                "relative_error": abs(model - float(gt)) / float(gt) if gt else 0.0,
            }
        )
    return rows


def match_structures(
    structures: Sequence[LayoutStructure],
    planes: Sequence[tuple[int, float, int]],
    tolerance: float,
    weights: Sequence[int] | None = None,
) -> dict[int, int]:
    """Map each ground-truth plane index to its best-supported structure within ``tolerance``.

    A structure is a candidate for the nearest plane of its axis and facing;
    among candidates for one plane the heaviest wins (ties to lower id).
    """
    weights = weights if weights is not None else [1] * len(structures)
    best: dict[int, int] = {}
    for k, s in enumerate(structures):
        cands = [(abs(p[1] - s.offset), j) for j, p in enumerate(planes) if p[0] == int(s.axis) and p[2] == s.facing]
        if not cands:
            continue
        dist, j = min(cands)
        if dist > tolerance:
            continue
        if j not in best or weights[k] > weights[best[j]]:
            best[j] = k
    return best


@dataclass
class ReconstructionReport:
    scenario: str
    mode: str
    stage: str
    seed: int
    n_frames: int
    n_segments: int
    path_length: float
    drift: dict
    initial_segments: int
    final_structures: int
    ground_truth_planes: int
    complexity_reduction: float
    hypotheses_considered: int | None
    hypotheses_accepted: int | None
    delta: float | None
    residual_least_squares: float | None
    residual_final: float | None
    solver_converged: bool | None
    kkt: dict | None
    surface_distances: list = field(default_factory=list)
    mean_relative_error: float | None = None
    warnings: list = field(default_factory=list)
    optimization_seconds: float = 0.0

    def to_dict(self, include_timing: bool = False) -> dict:
        d = asdict(self)
        if not include_timing:
            d.pop("optimization_seconds")
        return d

    def to_json(self) -> str:
        """Deterministic serialization: sorted keys, wall time omitted, floats rounded to 1e-10."""
        return json.dumps(_rounded(self.to_dict()), indent=1, sort_keys=True) + "\n"


def _rounded(obj):
    if isinstance(obj, float):
        return round(obj, 10) + 0.0
    if isinstance(obj, dict):
        return {k: _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    return obj


def evaluate(sim: SimulationData, solution: dict, cfg: dict) -> ReconstructionReport:
    """Score a reconstruction against simulator truth."""
    ev = cfg["evaluation"]
    structures = [LayoutStructure.from_dict(s) for s in solution["structures"]]
    traj = {k: np.asarray(v) for k, v in solution["trajectories"].items()}
    drift = {k: (compute_drift(traj[k], sim.closed) if k in traj else None) for k in DRIFT_KEYS}

    weights = [len(s.slots) for s in structures]
    planes = sim.observed_planes
    matched = match_structures(structures, planes, ev["match_tolerance"], weights)
    pairs, truth = [], []
    for i in range(len(planes)):
        for j in range(i + 1, len(planes)):
            if planes[i][0] != planes[j][0] or i not in matched or j not in matched:
                continue
            gt = abs(planes[i][1] - planes[j][1])
            if gt >= ev["min_pair_distance"]:
                pairs.append((matched[i], matched[j]))
                truth.append(gt)
    rows = surface_distance_check(structures, pairs, truth)
    mre = float(np.mean([r["relative_error"] for r in rows])) if rows else None

    initial = solution["initial_segments"]
    final = len(structures)
    cv = solution.get("convex")
    ls = solution.get("least_squares")
    warnings = list(solution["warnings"])
    if ev["adversarial"] and not warnings:
        warnings.append("adversarial scenario produced no solver warning")
    return ReconstructionReport(
        scenario=cfg["name"],
        mode=sim.mode,
        stage=solution["stage"],
        seed=int(cfg["noise"]["seed"]),
        n_frames=sim.n_frames,
        n_segments=solution["n_segments"],
        path_length=path_length(sim.positions),
        drift=drift,
        initial_segments=initial,
        final_structures=final,
        ground_truth_planes=len(planes),
        complexity_reduction=100.0 * (1.0 - final / initial) if initial else 0.0,
        hypotheses_considered=len(cv["hypotheses"]) if cv else None,
        hypotheses_accepted=len(cv["accepted"]) if cv else None,
        delta=cv["delta"] if cv else None,
        residual_least_squares=ls["residual"] if ls else None,
        residual_final=cv["residual_final"] if cv else (ls["residual"] if ls else None),
        solver_converged=cv["selection"]["converged"] if cv else None,
        kkt=cv["selection"]["kkt"] if cv else None,
        surface_distances=rows,
        mean_relative_error=mre,
        warnings=warnings,
        optimization_seconds=float(sum(solution["timing"].get(k, 0.0) for k in ("least_squares", "convex"))),
    )


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------


def apply_overrides(cfg: dict, seed=None, epsilon=None, mu=None, max_gap=None) -> dict:
    cfg = json.loads(json.dumps(cfg))
    if seed is not None:
        cfg["noise"]["seed"] = int(seed)
    for key, val in (("epsilon", epsilon), ("mu", mu), ("max_gap", max_gap)):
        if val is not None:
            cfg["solver"][key] = float(val)
    config_mod.validate_config(cfg)
    return cfg


def run_pipeline(
    config,
    out_dir=None,
    stage: str = "convex",
    seed: int | None = None,
    epsilon: float | None = None,
    mu: float | None = None,
    max_gap: float | None = None,
) -> ReconstructionReport:
    """Simulate, reconstruct and evaluate one scenario.

    ``config`` is a path, a bundled scenario name, or a config dict. With
    ``out_dir`` every artifact is written there.
    """
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")
    with _stage("config"):
        cfg = apply_overrides(config_mod.load_config(config), seed, epsilon, mu, max_gap)
        scn = config_mod.build_scenario(cfg)
    with _stage("simulate"):
        sim = simulate(scn)
    solution, artifacts = reconstruct(sim, cfg, stage)
    with _stage("evaluate"):
        report = evaluate(sim, solution, cfg)
    if out_dir is not None:
        out = Path(out_dir)
        write_simulation(sim, out)
        write_reconstruction(solution, artifacts, out)
        (out / "report.json").write_text(report.to_json())
    return report


def format_report(report: ReconstructionReport) -> str:
    """Human-readable summary in the style of the drift and complexity tables."""
    def f(v, unit=""):
        return "n/a" if v is None else f"{v:.3f}{unit}"

    d = report.drift
    lines = [
        f"scenario {report.scenario} ({report.mode}, stage {report.stage}, seed {report.seed})",
        f"frames {report.n_frames}, path length {report.path_length:.2f} m, segments {report.n_segments}",
        "drift [m]  raw {}  compass {}  least-squares {}  convex {}".format(
            f(d["raw"]), f(d["compass"]), f(d["least_squares"]), f(d["convex"])
        ),
        f"layout segments {report.initial_segments} -> {report.final_structures} "
        f"(ground truth {report.ground_truth_planes}), reduction {report.complexity_reduction:.1f}%",
    ]
    if report.hypotheses_considered is not None:
        lines.append(f"hypotheses {report.hypotheses_considered}, accepted {report.hypotheses_accepted}")
    if report.mean_relative_error is not None:
        lines.append(
            f"surface distances: {len(report.surface_distances)} pairs, "
            f"mean relative error {100 * report.mean_relative_error:.2f}%"
        )
    lines.append(f"optimization time {report.optimization_seconds:.2f} s")
    lines += [f"warning: {w}" for w in report.warnings]
    return "\n".join(lines)
