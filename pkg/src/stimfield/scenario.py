"""Scenario configs and the solve / activation / compare / optimize pipeline.

A scenario is a single JSON file with explicit units in its key names.  The
dual-lead stimulation setting is the source of truth; the single-lead and
geometry-aware arms are derived from it:

* ``single_<lead>``: only that lead's conductors exist in the domain and its
  contacts keep their dual roles (the independent model).
* ``induced_<lead>``: full dual geometry, that lead's contacts keep their
  roles, every contact of the other lead floats (isolates the induced-charge
  effect on the inactive lead).

All artifacts are deterministic byte-for-byte for a fixed config in serial
mode; worker threads only change wall time, not results.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import kernels
from .activation import (
    ORIENT_FIXED,
    ORIENT_WORST_PERPENDICULAR,
    ActivationField,
    AxonPolicy,
    EvaluationGrid,
    ThresholdTable,
    evaluate_activation,
    threshold_for,
)
from .conductivity import (
    TissueTable,
    heterogeneity_box_center,
    isotropic_from_labels,
    restrict_heterogeneity_box,
    tensor_from_diffusion,
)
from .errors import ConfigError
from .geometry import (
    ROLE_ANODE,
    ROLE_CATHODE,
    ContactAssignment,
    ContactSpec,
    LeadSpec,
    StimulationSetting,
    lead_3387_like,
    lowest_contact_midpoint,
    voxelize_leads,
)
from .optimizer import (
    ContactConfiguration,
    OptimizationSpec,
    UnitSolutionBank,
    default_feasible_set,
    strategy1_optimize,
    strategy2_enumerate,
)
from .solver import (
    SolverConfig,
    assemble,
    contact_net_current,
    solve,
    total_driven_current,
)
from .volume import (
    MaskVolume,
    ScalarVolume,
    TensorVolume,
    VoxelGrid,
    load_volume,
    save_volume,
)
from .vta import (
    TargetSpec,
    combined_af_vta,
    combined_ef_vta,
    compare_to_dual,
    coverage_report,
    superpose_vtas,
    target_from_mask_volume,
    threshold_vta,
    write_comparison_csv,
    write_coverage_csv,
)


@dataclass
class Scenario:
    config_path: Path
    config_digest: str
    output_dir: Path
    spacing_mm: float
    padding_mm: float
    leads: list
    setting: StimulationSetting
    conductivity_cfg: dict
    eval_grid: EvaluationGrid
    axon_policy: AxonPolicy
    ef_table: ThresholdTable
    af_table: ThresholdTable
    solver_cfg: SolverConfig
    threads: int
    run_induced_arms: bool
    target_path: Path | None
    optimization_cfg: dict | None


def _need(cfg: dict, key: str, path: str):
    if key not in cfg:
        raise ConfigError(f"{path}.{key}", "missing required field")
    return cfg[key]


def _vec3(value, path: str) -> tuple:
    try:
        v = tuple(float(x) for x in value)
    except (TypeError, ValueError):
        raise ConfigError(path, f"expected 3 numbers, got {value!r}") from None
    if len(v) != 3:
        raise ConfigError(path, f"expected 3 numbers, got {len(v)}")
    return v


def _parse_lead(cfg: dict, index: int) -> LeadSpec:
    path = f"leads[{index}]"
    name = _need(cfg, "name", path)
    tip = _vec3(_need(cfg, "tip_mm", path), f"{path}.tip_mm")
    axis = _vec3(_need(cfg, "axis", path), f"{path}.axis")
    axis_arr = np.asarray(axis)
    norm = np.linalg.norm(axis_arr)
    if norm == 0:
        raise ConfigError(f"{path}.axis", "axis must be non-zero")
    axis = tuple(axis_arr / norm)
    try:
        if "contacts" in cfg:
            contacts = tuple(
                ContactSpec(float(c["offset_mm"]), float(c["height_mm"]), int(c["id"]))
                for c in cfg["contacts"]
            )
            return LeadSpec(name, tip, axis, float(_need(cfg, "shaft_radius_mm", path)),
                            contacts, float(_need(cfg, "insulated_length_mm", path)))
        template = cfg.get("template", {})
        return lead_3387_like(
            name, tip, axis,
            shaft_radius=float(template.get("shaft_radius_mm", 0.635)),
            contact_height=float(template.get("contact_height_mm", 1.5)),
            contact_gap=float(template.get("contact_gap_mm", 1.5)),
            first_offset=float(template.get("first_offset_mm", 1.5)),
            n_contacts=int(template.get("n_contacts", 4)),
            insulated_length=float(template.get("insulated_length_mm", 40.0)),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def _parse_setting(cfg: dict, leads) -> StimulationSetting:
    lead_names = {lead.name for lead in leads}
    assignments = {}
    contacts = _need(cfg, "contacts", "stimulation")
    for i, entry in enumerate(contacts):
        path = f"stimulation.contacts[{i}]"
        lead = _need(entry, "lead", path)
        if lead not in lead_names:
            raise ConfigError(f"{path}.lead", f"unknown lead {lead!r}")
        cid = int(_need(entry, "contact", path))
        role = _need(entry, "role", path)
        try:
            if role == ROLE_CATHODE:
                assignments[(lead, cid)] = ContactAssignment(
                    ROLE_CATHODE, float(_need(entry, "voltage_v", path)))
            else:
                assignments[(lead, cid)] = ContactAssignment(role)
        except ValueError as exc:
            raise ConfigError(path, str(exc)) from None
    try:
        return StimulationSetting(assignments,
                                  float(cfg.get("pulse_width_us", 60.0)))
    except ValueError as exc:
        raise ConfigError("stimulation", str(exc)) from None


def load_scenario(config_path, output_dir=None) -> Scenario:
    config_path = Path(config_path)
    try:
        raw = config_path.read_bytes()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {config_path}: {exc}") from None
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from None

    domain = _need(cfg, "domain", "")
    spacing = float(_need(domain, "spacing_mm", "domain"))
    padding = float(domain.get("padding_mm", 20.0))
    if spacing <= 0:
        raise ConfigError("domain.spacing_mm", "must be positive")
    if padding <= 0:
        raise ConfigError("domain.padding_mm", "must be positive")

    leads_cfg = _need(cfg, "leads", "")
    if not leads_cfg:
        raise ConfigError("leads", "at least one lead is required")
    leads = [_parse_lead(lc, i) for i, lc in enumerate(leads_cfg)]
    names = [lead.name for lead in leads]
    if len(set(names)) != len(names):
        raise ConfigError("leads", "lead names must be unique")

    setting = _parse_setting(_need(cfg, "stimulation", ""), leads)

    cond = cfg.get("conductivity", {"mode": "homogeneous", "sigma_s_per_mm": 1.0e-4})
    mode = _need(cond, "mode", "conductivity")
    if mode == "homogeneous":
        sigma = float(_need(cond, "sigma_s_per_mm", "conductivity"))
        if sigma <= 0:
            raise ConfigError("conductivity.sigma_s_per_mm", "must be positive")
    elif mode == "tissue_model":
        labels = Path(_need(cond, "labels_volume", "conductivity"))
        if not labels.is_absolute():
            labels = config_path.parent / labels
        if not labels.exists():
            raise ConfigError("conductivity.labels_volume", f"file not found: {labels}")
        cond = dict(cond, labels_volume=str(labels))
        if "diffusion_volume" in cond:
            dvol = Path(cond["diffusion_volume"])
            if not dvol.is_absolute():
                dvol = config_path.parent / dvol
            if not dvol.exists():
                raise ConfigError("conductivity.diffusion_volume",
                                  f"file not found: {dvol}")
            cond = dict(cond, diffusion_volume=str(dvol))
    else:
        raise ConfigError("conductivity.mode", f"unknown mode {mode!r}")

    eval_cfg = cfg.get("evaluation", {})
    center_cfg = eval_cfg.get("center", "lowest_contacts")
    if center_cfg == "lowest_contacts":
        center = tuple(lowest_contact_midpoint(leads))
    else:
        center = _vec3(center_cfg, "evaluation.center")
    try:
        eval_grid = EvaluationGrid(center,
                                   float(eval_cfg.get("side_mm", 20.0)),
                                   float(eval_cfg.get("spacing_mm", 0.4)))
    except ValueError as exc:
        raise ConfigError("evaluation", str(exc)) from None

    axon_cfg = cfg.get("axons", {})
    orientation = axon_cfg.get("orientation", ORIENT_WORST_PERPENDICULAR)
    try:
        if isinstance(orientation, dict) and "fixed" in orientation:
            direction = np.asarray(_vec3(orientation["fixed"], "axons.orientation.fixed"))
            direction = tuple(direction / np.linalg.norm(direction))
            policy = AxonPolicy(float(axon_cfg.get("length_mm", 1.0)),
                                float(axon_cfg.get("step_mm", 0.1)),
                                ORIENT_FIXED, direction=direction)
        else:
            policy = AxonPolicy(float(axon_cfg.get("length_mm", 1.0)),
                                float(axon_cfg.get("step_mm", 0.1)),
                                str(orientation))
    except ValueError as exc:
        raise ConfigError("axons", str(exc)) from None

    thr = _need(cfg, "thresholds", "")
    try:
        ef_table = ThresholdTable("EF", [tuple(p) for p in
                                         _need(thr, "ef_v_per_mm", "thresholds")["pairs"]])
        af_table = ThresholdTable("AF", [tuple(p) for p in
                                         _need(thr, "af_v_per_mm2", "thresholds")["pairs"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("thresholds", str(exc)) from None

    solver_cfg_raw = cfg.get("solver", {})
    try:
        solver_cfg = SolverConfig(
            relative_tolerance=float(solver_cfg_raw.get("relative_tolerance", 1e-8)),
            max_iterations=int(solver_cfg_raw.get("max_iterations", 20000)),
            preconditioner=str(solver_cfg_raw.get("preconditioner", "diagonal")),
        )
    except ValueError as exc:
        raise ConfigError("solver", str(exc)) from None

    target_path = None
    if "targets" in cfg:
        target_path = Path(_need(cfg["targets"], "mask_volume", "targets"))
        if not target_path.is_absolute():
            target_path = config_path.parent / target_path
        if not target_path.exists():
            raise ConfigError("targets.mask_volume", f"file not found: {target_path}")

    opt_cfg = cfg.get("optimization")
    if opt_cfg is not None:
        if target_path is None:
            raise ConfigError("optimization", "optimization requires targets.mask_volume")
        metric = opt_cfg.get("metric", "EF")
        if metric not in ("EF", "AF"):
            raise ConfigError("optimization.metric", f"must be 'EF' or 'AF', got {metric!r}")
        strategy = opt_cfg.get("strategy", "strategy2")
        if strategy not in ("strategy1", "strategy2", "both"):
            raise ConfigError("optimization.strategy", f"unknown strategy {strategy!r}")

    out_dir = Path(output_dir) if output_dir is not None else Path(
        cfg.get("output_dir", "stimfield_out"))
    if not out_dir.is_absolute():
        out_dir = config_path.parent / out_dir

    return Scenario(
        config_path=config_path,
        config_digest=hashlib.sha256(raw).hexdigest(),
        output_dir=out_dir,
        spacing_mm=spacing,
        padding_mm=padding,
        leads=leads,
        setting=setting,
        conductivity_cfg=cond,
        eval_grid=eval_grid,
        axon_policy=policy,
        ef_table=ef_table,
        af_table=af_table,
        solver_cfg=solver_cfg,
        threads=int(cfg.get("threads", 1)),
        run_induced_arms=bool(cfg.get("arms", {}).get("geometry_aware_singles",
                                                      len(leads) > 1)),
        target_path=target_path,
        optimization_cfg=opt_cfg,
    )


def domain_grid(scenario: Scenario, leads=None) -> VoxelGrid:
    """Axis-aligned grid covering all contact spans plus the padding margin."""
    leads = scenario.leads if leads is None else leads
    pts = []
    radius = 0.0
    for lead in leads:
        tip = np.asarray(lead.tip_position)
        axis = np.asarray(lead.axis)
        pts.append(tip)
        radius = max(radius, lead.shaft_radius)
        for c in lead.contacts:
            pts.append(tip + c.axial_offset * axis)
            pts.append(tip + (c.axial_offset + c.height) * axis)
    pts = np.asarray(pts)
    lo = pts.min(axis=0) - radius - scenario.padding_mm
    hi = pts.max(axis=0) + radius + scenario.padding_mm
    h = scenario.spacing_mm
    dims = tuple(int(np.ceil((hi[a] - lo[a]) / h)) + 1 for a in range(3))
    return VoxelGrid(dims, (h, h, h), tuple(lo))


def conductivity_field(scenario: Scenario, grid: VoxelGrid, leads):
    cfg = scenario.conductivity_cfg
    if cfg["mode"] == "homogeneous":
        return ScalarVolume(grid, np.full(grid.dims, float(cfg["sigma_s_per_mm"])))

    labels = load_volume(cfg["labels_volume"])
    if not isinstance(labels, ScalarVolume):
        raise ConfigError("conductivity.labels_volume", "must be a scalar label volume")
    if labels.grid != grid:
        labels = _resample_labels(labels, grid)
    table_cfg = cfg.get("table", {})
    table = TissueTable(table_cfg["values"], table_cfg["codes"]) if table_cfg \
        else TissueTable()
    sigma_iso = isotropic_from_labels(labels, table)

    if "diffusion_volume" not in cfg:
        return sigma_iso

    diffusion = load_volume(cfg["diffusion_volume"])
    if not isinstance(diffusion, TensorVolume):
        raise ConfigError("conductivity.diffusion_volume", "must be a tensor volume")
    diffusion.assert_psd(tol=1e-12 * float(np.max(np.abs(diffusion.values))))
    if diffusion.grid != grid:
        raise ConfigError("conductivity.diffusion_volume",
                          "diffusion grid must match the domain grid")
    tensor, fallback = tensor_from_diffusion(sigma_iso, diffusion)
    box = cfg.get("heterogeneity_box")
    if box:
        center_cfg = box.get("center", "lowest_contacts")
        center = (heterogeneity_box_center(leads) if center_cfg == "lowest_contacts"
                  else np.asarray(_vec3(center_cfg, "conductivity.heterogeneity_box.center")))
        tensor = restrict_heterogeneity_box(
            tensor, center,
            float(box.get("half_width_mm", 25.0)),
            float(box["background_s_per_mm"]),
        )
    return TensorVolume(grid, tensor.values)


def _resample_labels(labels: ScalarVolume, grid: VoxelGrid) -> ScalarVolume:
    """Nearest-neighbor label lookup at domain voxel centers."""
    cx = grid.axis_centers(0)
    cy = grid.axis_centers(1)
    cz = grid.axis_centers(2)
    zz, yy, xx = np.meshgrid(cz, cy, cx, indexing="ij")
    pts = np.stack([xx, yy, zz], axis=-1).reshape(-1, 3)
    idx = np.rint(labels.grid.world_to_index(pts)).astype(np.int64)
    dims = np.asarray(labels.grid.dims)
    idx = np.clip(idx, 0, dims - 1)
    vals = labels.values[idx[:, 0], idx[:, 1], idx[:, 2]]
    return ScalarVolume(grid, vals.reshape(grid.dims[::-1]).transpose(2, 1, 0))


def _setting_for_lead(scenario: Scenario, lead_name: str) -> StimulationSetting:
    kept = {k: v for k, v in scenario.setting.assignments.items() if k[0] == lead_name}
    return StimulationSetting(kept, scenario.setting.pulse_width_us)


def _solve_arm(scenario: Scenario, leads, setting):
    grid = domain_grid(scenario)
    conductors = voxelize_leads(grid, leads)
    sigma = conductivity_field(scenario, grid, leads)
    system = assemble(grid, sigma, conductors, setting)
    solution = solve(system, scenario.solver_cfg)
    return system, solution


def run_solves(scenario: Scenario) -> dict:
    """All experiment arms: dual, per-lead single, optional induced arms."""
    arms = {}
    arms["dual"] = _solve_arm(scenario, scenario.leads, scenario.setting)
    if len(scenario.leads) > 1:
        for lead in scenario.leads:
            arms[f"single_{lead.name}"] = _solve_arm(
                scenario, [lead], _setting_for_lead(scenario, lead.name))
        if scenario.run_induced_arms:
            for lead in scenario.leads:
                arms[f"induced_{lead.name}"] = _solve_arm(
                    scenario, scenario.leads, _setting_for_lead(scenario, lead.name))
    return arms


def solution_sidecar(system, solution) -> str:
    lines = [
        f"iterations={solution.iterations}",
        f"residual_norm={solution.residual_norm!r}",
    ]
    driven = total_driven_current(solution, system)
    lines.append(f"total_driven_current_A={driven!r}")
    for key in system.conductor_keys:
        role = "floating" if key in system.floating_keys else "driven"
        u = solution.conductor_potentials[key]
        i = contact_net_current(solution, system, key)
        lines.append(f"contact={key[0]}:{key[1]} role={role} "
                     f"potential_V={u!r} net_current_A={i!r}")
    return "\n".join(lines) + "\n"


def activation_volume(field: ActivationField) -> TensorVolume:
    """Pack (Ex, Ey, Ez, EF-norm, AF-Max, 0) into a 6-component volume."""
    grid = field.eval_grid
    packed = np.zeros((field.n_nodes, 6), dtype=np.float64)
    packed[:, 0:3] = field.ef
    packed[:, 3] = field.ef_norm
    packed[:, 4] = field.af_max
    values = np.stack(
        [grid.node_values_to_array(packed[:, c]) for c in range(6)], axis=-1
    )
    return TensorVolume(grid.as_voxel_grid(), values)


def run_activations(scenario: Scenario, arms: dict) -> dict:
    """Evaluate activation per arm; single/induced arms reuse the dual axons."""
    threads = scenario.threads
    fields = {}
    dual_field = evaluate_activation(
        arms["dual"][1], scenario.eval_grid, scenario.axon_policy,
        scenario.leads, threads=threads,
    )
    fields["dual"] = dual_field
    for name, (_, solution) in arms.items():
        if name == "dual":
            continue
        fields[name] = evaluate_activation(
            solution, scenario.eval_grid, scenario.axon_policy, scenario.leads,
            directions=dual_field.axon_dirs, threads=threads,
        )
    return fields


def build_masks(scenario: Scenario, fields: dict) -> dict:
    pw = scenario.setting.pulse_width_us
    ef_th = threshold_for(scenario.ef_table, pw)
    af_th = threshold_for(scenario.af_table, pw)
    masks = {}
    masks["dual_EF"] = threshold_vta(fields["dual"], "EF", ef_th, "dual_EF")
    masks["dual_AF"] = threshold_vta(fields["dual"], "AF", af_th, "dual_AF")
    single_names = [n for n in fields if n.startswith("single_")]
    if len(single_names) == 2:
        f1, f2 = fields[single_names[0]], fields[single_names[1]]
        s1_ef = threshold_vta(f1, "EF", ef_th, f"{single_names[0]}_EF")
        s2_ef = threshold_vta(f2, "EF", ef_th, f"{single_names[1]}_EF")
        s1_af = threshold_vta(f1, "AF", af_th, f"{single_names[0]}_AF")
        s2_af = threshold_vta(f2, "AF", af_th, f"{single_names[1]}_AF")
        masks["V_EF"] = superpose_vtas(s1_ef, s2_ef)
        masks["V_AF"] = superpose_vtas(s1_af, s2_af)
        masks["C_EF"] = combined_ef_vta(f1, f2, ef_th)
        masks["C_AF"] = combined_af_vta(f1, f2, af_th)
    return masks


def load_target(scenario: Scenario) -> TargetSpec | None:
    if scenario.target_path is None:
        return None
    vol = load_volume(scenario.target_path)
    if not isinstance(vol, MaskVolume):
        raise ConfigError("targets.mask_volume", "must be a mask volume")
    return target_from_mask_volume(vol, scenario.eval_grid)


def write_manifest(scenario: Scenario, out_dir: Path, arms: dict, extra=None) -> None:
    manifest = {
        "config_digest_sha256": scenario.config_digest,
        "package_version": __version__,
        "kernel_backend": kernels.backend_name(),
        "threads": scenario.threads,
        "solver": {
            "relative_tolerance": scenario.solver_cfg.relative_tolerance,
            "max_iterations": scenario.solver_cfg.max_iterations,
            "preconditioner": scenario.solver_cfg.preconditioner,
        },
        "arms": {
            name: {
                "iterations": solution.iterations,
                "residual_norm": solution.residual_norm,
                "unknowns": system.n_unknowns,
                "floating_potentials_V": {
                    f"{k[0]}:{k[1]}": solution.conductor_potentials[k]
                    for k in sorted(system.floating_keys)
                },
            }
            for name, (system, solution) in sorted(arms.items())
        },
    }
    if extra:
        manifest.update(extra)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def stage_solve(scenario: Scenario) -> dict:
    arms = run_solves(scenario)
    out = scenario.output_dir
    out.mkdir(parents=True, exist_ok=True)
    for name, (system, solution) in arms.items():
        save_volume(solution.potential, out / f"potential_{name}.vol")
        (out / f"solution_{name}.txt").write_text(solution_sidecar(system, solution))
    write_manifest(scenario, out, arms)
    return arms


def stage_activation(scenario: Scenario, arms=None) -> dict:
    arms = arms if arms is not None else stage_solve(scenario)
    fields = run_activations(scenario, arms)
    out = scenario.output_dir
    for name, field in fields.items():
        save_volume(activation_volume(field), out / f"activation_{name}.vol")
    return fields


def stage_compare(scenario: Scenario):
    arms = stage_solve(scenario)
    fields = stage_activation(scenario, arms)
    masks = build_masks(scenario, fields)
    out = scenario.output_dir
    for name, mask in masks.items():
        save_volume(mask.as_volume(), out / f"vta_{name.lower()}.vol")

    reports = []
    coverage_rows = []
    target = load_target(scenario)
    for metric in ("EF", "AF"):
        if f"V_{metric}" not in masks:
            continue
        dual = masks[f"dual_{metric}"]
        methods = [dual, masks[f"V_{metric}"], masks[f"C_{metric}"]]
        reports.append(compare_to_dual(dual, methods))
        if target is not None:
            coverage_rows.append(coverage_report(methods, target, dual))
    if reports:
        write_comparison_csv(out / "comparison.csv", *reports)
    if coverage_rows:
        write_coverage_csv(out / "coverage.csv", *coverage_rows)
    write_manifest(scenario, out, arms, extra={
        "masks": {name: mask.count for name, mask in sorted(masks.items())},
    })
    return arms, fields, masks


def build_unit_bank(scenario: Scenario, mode: str, configs) -> UnitSolutionBank:
    """One unit solve per configuration: cathodes at -1 V, anodes grounded,
    everything else floating; single-lead mode drops the other leads."""
    grid = domain_grid(scenario)
    fields = {}
    dual_dirs = None
    for config in configs:
        assignments = {k: ContactAssignment(ROLE_CATHODE, -1.0) for k in config.cathodes}
        assignments.update({k: ContactAssignment(ROLE_ANODE) for k in config.anodes})
        setting = StimulationSetting(assignments, scenario.setting.pulse_width_us)
        if mode == "single_lead":
            lead_names = {k[0] for k in config.cathodes + config.anodes}
            leads = [lead for lead in scenario.leads if lead.name in lead_names]
        else:
            leads = scenario.leads
        conductors = voxelize_leads(grid, leads)
        sigma = conductivity_field(scenario, grid, leads)
        system = assemble(grid, sigma, conductors, setting)
        solution = solve(system, scenario.solver_cfg)
        field = evaluate_activation(
            solution, scenario.eval_grid, scenario.axon_policy, scenario.leads,
            directions=dual_dirs, threads=scenario.threads,
        )
        if dual_dirs is None:
            dual_dirs = field.axon_dirs
        fields[config] = field
    return UnitSolutionBank(fields, geometry_mode=mode)


def stage_optimize(scenario: Scenario):
    cfg = scenario.optimization_cfg
    if cfg is None:
        raise ConfigError("optimization", "no optimization section in the config")
    target = load_target(scenario)
    metric = cfg.get("metric", "EF")
    table = scenario.ef_table if metric == "EF" else scenario.af_table
    threshold = threshold_for(table, scenario.setting.pulse_width_us)
    spec = OptimizationSpec(
        metric=metric,
        threshold=threshold,
        theta=float(cfg.get("theta", 0.5)),
        target=target,
        lambda_max=float(cfg.get("lambda_max_v", 10.0)),
        lambda_step=float(cfg.get("lambda_step_v", 0.1)),
    )
    mode = cfg.get("bank_geometry", "dual_geometry")
    out = scenario.output_dir
    out.mkdir(parents=True, exist_ok=True)
    strategy = cfg.get("strategy", "strategy2")
    results = {}

    if strategy in ("strategy2", "both"):
        configs = default_feasible_set(scenario.leads,
                                       cross_lead=bool(cfg.get("cross_lead_pairs", False)))
        bank = build_unit_bank(scenario, mode, configs)
        result = strategy2_enumerate(bank, spec, configs)
        _write_ranking_csv(out / "ranking_strategy2.csv", result)
        _write_winner(out / "winner_strategy2.txt", result)
        results["strategy2"] = result

    if strategy in ("strategy1", "both"):
        contact_keys = [(lead.name, c.contact_id)
                        for lead in scenario.leads for c in lead.contacts]
        configs = [ContactConfiguration((k,)) for k in contact_keys]
        bank2 = build_unit_bank(scenario, mode, configs)
        fields = {cfg2.cathodes[0]: f for cfg2, f in bank2.fields.items()}
        bank1 = UnitSolutionBank(fields, geometry_mode=mode)
        result = strategy1_optimize(bank1, spec)
        _write_ranking_csv(out / "ranking_strategy1.csv", result)
        _write_winner(out / "winner_strategy1.txt", result)
        results["strategy1"] = result

    return results


def _write_ranking_csv(path: Path, result) -> None:
    import csv

    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config", "lambda_v", "objective", "coverage_pct"])
        for entry in result.ranked:
            writer.writerow([
                entry.label,
                "" if entry.lam is None else f"{entry.lam:.9g}",
                f"{entry.objective:.9g}",
                f"{100.0 * entry.coverage_fraction:.6f}",
            ])
        for label in result.infeasible_labels:
            writer.writerow([label, "infeasible", "", ""])


def _write_winner(path: Path, result) -> None:
    if not result.feasible:
        Path(path).write_text("infeasible: no configuration satisfies the constraint\n")
        return
    best = result.best
    lines = [
        f"winner={best.label}",
        f"objective={best.objective:.9g}",
        f"coverage_pct={100.0 * best.coverage_fraction:.6f}",
    ]
    if best.lam is not None:
        lines.insert(1, f"lambda_v={best.lam:.9g}")
    if result.notes:
        lines.append(f"notes={result.notes}")
    Path(path).write_text("\n".join(lines) + "\n")


def emit_slice(volume_path, axis: str, index: int, out_path, component: int = 0):
    """Write one slice as an 8-bit PGM plus a CSV of the raw values."""
    vol = load_volume(volume_path)
    axis_idx = {"x": 0, "y": 1, "z": 2}.get(axis)
    if axis_idx is None:
        raise ValueError(f"axis must be x, y, or z, got {axis!r}")
    values = vol.values.astype(np.float64)
    if values.ndim == 4:
        if not 0 <= component < values.shape[3]:
            raise ValueError(f"component {component} out of range")
        values = values[..., component]
    if not 0 <= index < vol.grid.dims[axis_idx]:
        raise ValueError(
            f"index {index} out of range for axis {axis} with {vol.grid.dims[axis_idx]} voxels"
        )
    plane = np.take(values, index, axis=axis_idx)

    lo, hi = float(plane.min()), float(plane.max())
    if hi > lo:
        img = np.rint(255.0 * (plane - lo) / (hi - lo)).astype(np.uint8)
    else:
        img = np.zeros(plane.shape, dtype=np.uint8)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    width, height = img.shape[0], img.shape[1]
    header = f"P5\n{width} {height}\n255\n".encode()
    out_path.write_bytes(header + img.T.tobytes())

    csv_path = out_path.with_suffix(".csv")
    np.savetxt(csv_path, plane.T, delimiter=",", fmt="%.9g")
    return out_path, csv_path
