"""Programming optimization over a bank of unit-stimulus activation fields.

Two strategies are implemented on top of precomputed unit solutions:

* Amplitude optimization: minimize the summed metric outside the target over
  a non-negative amplitude vector (one entry per contact), subject to the
  metric reaching threshold on at least a fraction theta of the target
  nodes.  Multi-contact metric values superpose the unit physical quantities
  (EF vectors, tangential AFs), never the unit metric values, since norms and
  maxima are not additive.  The search is coordinate descent on a discrete
  amplitude grid with multi-starts, so the result is a grid-resolution
  optimum.
* Configuration enumeration: for every feasible contact configuration the
  minimal amplitude satisfying the coverage constraint follows in closed
  form from linearity (threshold divided by the k-th largest unit metric
  value on the target); configurations are then ranked by the objective at
  that amplitude.

``brute_force_oracle`` re-derives both results exhaustively (bisection for
the amplitude, full grid or enumeration for the search) and exists for
verification.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .activation import ActivationField
from .errors import InfeasibleError
from .vta import TargetSpec

ORACLE_MAX_CONTACTS = 4
ORACLE_MAX_COMBINATIONS = 10_000


@dataclass(frozen=True)
class ContactConfiguration:
    """Cathode set plus optional anode set, drawn from the feasible family."""

    cathodes: tuple
    anodes: tuple = ()

    def __post_init__(self):
        cath = tuple(tuple(k) for k in self.cathodes)
        ano = tuple(tuple(k) for k in self.anodes)
        if not cath:
            raise ValueError("a configuration needs at least one cathode")
        if set(cath) & set(ano):
            raise ValueError("a contact cannot be cathode and anode at once")
        object.__setattr__(self, "cathodes", cath)
        object.__setattr__(self, "anodes", ano)

    def label(self) -> str:
        parts = [f"-{lead}:{cid}" for lead, cid in self.cathodes]
        parts += [f"+{lead}:{cid}" for lead, cid in self.anodes]
        return " ".join(parts)

    def sort_key(self):
        return (self.cathodes, self.anodes)


@dataclass(frozen=True)
class UnitSolutionBank:
    """Unit-amplitude activation fields keyed by contact or configuration.

    ``geometry_mode`` records whether the unit solves used the lead alone
    ('single_lead') or the full geometry with the other lead floating
    ('dual_geometry').
    """

    fields: dict
    geometry_mode: str = "dual_geometry"
    metric_note: str = ""

    def __post_init__(self):
        object.__setattr__(self, "fields", dict(self.fields))
        if not self.fields:
            raise ValueError("unit solution bank is empty")
        grids = {f.eval_grid for f in self.fields.values()}
        if len(grids) > 1:
            raise ValueError("bank fields live on different evaluation grids")
        ref = next(iter(self.fields.values()))
        for f in self.fields.values():
            if not np.array_equal(f.axon_dirs, ref.axon_dirs) or \
                    not np.array_equal(f.axon_offsets, ref.axon_offsets):
                raise ValueError("bank fields use inconsistent axon populations")

    def field_for(self, key) -> ActivationField:
        try:
            return self.fields[key]
        except KeyError:
            raise KeyError(f"no unit solution for {key}") from None


@dataclass(frozen=True)
class OptimizationSpec:
    metric: str
    threshold: float
    theta: float
    target: TargetSpec
    lambda_max: float = 10.0
    lambda_step: float = 0.1

    def __post_init__(self):
        if self.metric not in ("EF", "AF"):
            raise ValueError(f"metric must be 'EF' or 'AF', got {self.metric!r}")
        if self.threshold <= 0 or not np.isfinite(self.threshold):
            raise ValueError("threshold must be positive and finite")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.lambda_max <= 0 or not np.isfinite(self.lambda_max):
            raise ValueError("lambda_max must be positive and finite")
        if self.lambda_step <= 0:
            raise ValueError("lambda_step must be positive")

    @property
    def required_count(self) -> int:
        return math.ceil(self.theta * self.target.n_target)

    def amplitude_grid(self) -> np.ndarray:
        n = int(math.floor(self.lambda_max / self.lambda_step + 1e-9)) + 1
        return self.lambda_step * np.arange(n)


@dataclass(frozen=True)
class RankedEntry:
    label: str
    config: ContactConfiguration | None
    amplitudes: dict
    lam: float | None
    objective: float
    coverage_count: int
    coverage_fraction: float


@dataclass(frozen=True)
class OptimizationResult:
    mode: str
    feasible: bool
    best: RankedEntry | None
    ranked: tuple
    infeasible_labels: tuple = ()
    notes: str = ""


def _target_values(field: ActivationField, spec: OptimizationSpec) -> np.ndarray:
    return field.metric_values(spec.metric)[spec.target.target]


def _complement_values(field: ActivationField, spec: OptimizationSpec) -> np.ndarray:
    return field.metric_values(spec.metric)[spec.target.complement]


def minimal_amplitude(config, bank: UnitSolutionBank, spec: OptimizationSpec) -> float:
    """Smallest amplitude reaching threshold on ceil(theta * n_target) nodes.

    Closed form by linearity: the metric at amplitude lam is lam times the
    unit metric, so lam* = threshold / q with q the k-th largest unit value
    on the target.
    """
    field = bank.field_for(config)
    values = _target_values(field, spec)
    n_t = values.size
    if n_t == 0:
        raise ValueError("target region is empty")
    need = spec.required_count
    if need < 1:
        raise ValueError("theta * n_target must be at least 1")
    q = float(np.partition(values, n_t - need)[n_t - need])
    if q <= 0.0:
        raise InfeasibleError(
            f"coverage unreachable for {config}: k-th largest unit value is 0"
        )
    lam = spec.threshold / q
    if lam > spec.lambda_max:
        raise InfeasibleError(
            f"minimal amplitude {lam:.6g} exceeds the bound {spec.lambda_max:.6g}"
        )
    return lam


def _coverage_count(values: np.ndarray, spec: OptimizationSpec) -> int:
    return int(np.count_nonzero(values >= spec.threshold))


def _entry_for_config(config, bank, spec, lam) -> RankedEntry:
    field = bank.field_for(config)
    target_vals = lam * _target_values(field, spec)
    objective = float(np.sum(lam * _complement_values(field, spec)))
    count = _coverage_count(target_vals, spec)
    label = config.label() if isinstance(config, ContactConfiguration) else str(config)
    amplitudes = {}
    if isinstance(config, ContactConfiguration):
        amplitudes = {k: lam for k in config.cathodes}
    return RankedEntry(label, config if isinstance(config, ContactConfiguration) else None,
                       amplitudes, lam, objective, count,
                       count / spec.target.n_target)


def _rank_entries(entries) -> tuple:
    def key(item):
        entry = item[1]
        cfg_key = entry.config.sort_key() if entry.config is not None else entry.label
        return (entry.objective, entry.lam if entry.lam is not None else 0.0, cfg_key)

    return tuple(e for _, e in sorted(enumerate(entries), key=lambda t: (key(t), t[0])))


def strategy2_enumerate(bank: UnitSolutionBank, spec: OptimizationSpec,
                        feasible_set) -> OptimizationResult:
    """Rank all configurations by the objective at their minimal amplitude."""
    feasible_set = list(feasible_set)
    if not feasible_set:
        raise ValueError("the feasible configuration set is empty")
    entries = []
    infeasible = []
    for config in feasible_set:
        try:
            lam = minimal_amplitude(config, bank, spec)
        except InfeasibleError:
            label = config.label() if isinstance(config, ContactConfiguration) else str(config)
            infeasible.append(label)
            continue
        entries.append(_entry_for_config(config, bank, spec, lam))
    ranked = _rank_entries(entries)
    return OptimizationResult(
        mode="strategy2",
        feasible=bool(ranked),
        best=ranked[0] if ranked else None,
        ranked=ranked,
        infeasible_labels=tuple(infeasible),
    )


def _combined_metric(bank: UnitSolutionBank, keys, amps, spec: OptimizationSpec,
                     subset: np.ndarray | None = None) -> np.ndarray:
    """Metric of the superposed unit fields at the given amplitudes."""
    if spec.metric == "EF":
        total = None
        for key, a in zip(keys, amps):
            if a == 0.0:
                continue
            ef = bank.field_for(key).ef
            ef = ef[subset] if subset is not None else ef
            total = a * ef if total is None else total + a * ef
        if total is None:
            n = (int(subset.sum()) if subset is not None
                 else next(iter(bank.fields.values())).n_nodes)
            return np.zeros(n)
        return np.linalg.norm(total, axis=1)
    total = None
    for key, a in zip(keys, amps):
        if a == 0.0:
            continue
        af = bank.field_for(key).af_tan
        af = af[subset] if subset is not None else af
        total = a * af if total is None else total + a * af
    if total is None:
        n = (int(subset.sum()) if subset is not None
             else next(iter(bank.fields.values())).n_nodes)
        return np.zeros(n)
    return np.max(np.abs(total), axis=1)


def _amplitude_entry(bank, keys, amps, spec) -> RankedEntry:
    target_vals = _combined_metric(bank, keys, amps, spec, spec.target.target)
    comp_vals = _combined_metric(bank, keys, amps, spec, spec.target.complement)
    count = _coverage_count(target_vals, spec)
    label = " ".join(f"{lead}:{cid}={a:g}" for (lead, cid), a in zip(keys, amps))
    return RankedEntry(label, None, dict(zip(keys, amps)), None,
                       float(np.sum(comp_vals)), count,
                       count / spec.target.n_target)


def _is_feasible(entry: RankedEntry, spec: OptimizationSpec) -> bool:
    return entry.coverage_count >= spec.required_count


def _better(a: RankedEntry, b: RankedEntry | None) -> bool:
    """Deterministic preference: lower objective, then lower total amplitude."""
    if b is None:
        return True
    ka = (a.objective, sum(a.amplitudes.values()), tuple(sorted(a.amplitudes.items())))
    kb = (b.objective, sum(b.amplitudes.values()), tuple(sorted(b.amplitudes.items())))
    return ka < kb


def strategy1_optimize(bank: UnitSolutionBank, spec: OptimizationSpec) -> OptimizationResult:
    """Coordinate descent over the discrete amplitude grid, multi-started."""
    keys = sorted(bank.fields)
    grid = spec.amplitude_grid()
    need = spec.required_count
    if need < 1:
        raise ValueError("theta * n_target must be at least 1")

    starts = []
    for i, key in enumerate(keys):
        try:
            lam = minimal_amplitude(key, bank, spec)
        except InfeasibleError:
            continue
        snapped = grid[np.searchsorted(grid, lam - 1e-12)] if lam <= grid[-1] + 1e-12 else None
        if snapped is None:
            continue
        amps = np.zeros(len(keys))
        amps[i] = snapped
        starts.append(amps)
    all_max = np.full(len(keys), grid[-1])
    entry = _amplitude_entry(bank, keys, all_max, spec)
    if _is_feasible(entry, spec):
        starts.append(all_max)

    best: RankedEntry | None = None
    for start in starts:
        amps = start.copy()
        current = _amplitude_entry(bank, keys, amps, spec)
        if not _is_feasible(current, spec):
            continue
        improved = True
        while improved:
            improved = False
            for i in range(len(keys)):
                best_i: RankedEntry | None = None
                best_a = amps[i]
                for a in grid:
                    trial = amps.copy()
                    trial[i] = a
                    entry = _amplitude_entry(bank, keys, trial, spec)
                    if not _is_feasible(entry, spec):
                        continue
                    if _better(entry, best_i):
                        best_i = entry
                        best_a = a
                if best_i is not None and best_a != amps[i] and _better(best_i, current):
                    amps[i] = best_a
                    current = best_i
                    improved = True
        if _better(current, best):
            best = current

    if best is None:
        return OptimizationResult("strategy1", False, None, (),
                                  notes="no feasible amplitude vector on the grid")
    return OptimizationResult("strategy1", True, best, (best,),
                              notes="grid-resolution optimum")


def _bisect_minimal_amplitude(field, spec) -> float | None:
    """Oracle for minimal_amplitude: bisection on the monotone coverage."""
    unit = field.metric_values(spec.metric)[spec.target.target]
    need = spec.required_count

    def feasible(lam):
        return int(np.count_nonzero(lam * unit >= spec.threshold)) >= need

    lo, hi = 0.0, spec.lambda_max
    if not feasible(hi):
        return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def brute_force_oracle(bank: UnitSolutionBank, spec: OptimizationSpec, mode: str,
                       feasible_set=None) -> OptimizationResult:
    """Exhaustive re-derivation of either strategy, for verification only."""
    if mode == "strategy2":
        if not feasible_set:
            raise ValueError("strategy2 oracle needs a non-empty feasible set")
        feasible_set = list(feasible_set)
        if len({k for c in feasible_set for k in c.cathodes + c.anodes}) > ORACLE_MAX_CONTACTS:
            raise ValueError("oracle guard: too many distinct contacts")
        entries = []
        infeasible = []
        for config in feasible_set:
            lam = _bisect_minimal_amplitude(bank.field_for(config), spec)
            if lam is None:
                infeasible.append(config.label())
                continue
            field = bank.field_for(config)
            scaled = lam * field.metric_values(spec.metric)
            objective = float(np.sum(scaled[spec.target.complement]))
            count = int(np.count_nonzero(scaled[spec.target.target] >= spec.threshold))
            entries.append(RankedEntry(config.label(), config,
                                       {k: lam for k in config.cathodes}, lam,
                                       objective, count, count / spec.target.n_target))
        ranked = _rank_entries(entries)
        return OptimizationResult("strategy2_oracle", bool(ranked),
                                  ranked[0] if ranked else None, ranked,
                                  infeasible_labels=tuple(infeasible))

    if mode == "strategy1":
        keys = sorted(bank.fields)
        if len(keys) > ORACLE_MAX_CONTACTS:
            raise ValueError("oracle guard: too many contacts")
        grid = spec.amplitude_grid()
        if grid.size ** len(keys) > ORACLE_MAX_COMBINATIONS:
            raise ValueError("oracle guard: amplitude grid too large")
        best: RankedEntry | None = None
        for combo in itertools.product(grid, repeat=len(keys)):
            entry = _amplitude_entry(bank, keys, np.array(combo), spec)
            if _is_feasible(entry, spec) and _better(entry, best):
                best = entry
        if best is None:
            return OptimizationResult("strategy1_oracle", False, None, ())
        return OptimizationResult("strategy1_oracle", True, best, (best,))

    raise ValueError(f"unknown oracle mode {mode!r}")


def default_feasible_set(leads, cross_lead: bool = False):
    """Monopolar configs, in-lead cathode-anode pairs, optional cross-lead pairs."""
    configs = []
    for lead in leads:
        keys = [(lead.name, c.contact_id) for c in lead.contacts]
        for k in keys:
            configs.append(ContactConfiguration((k,)))
        for cath in keys:
            for ano in keys:
                if cath != ano:
                    configs.append(ContactConfiguration((cath,), (ano,)))
    if cross_lead:
        leads = list(leads)
        for i, a in enumerate(leads):
            for b in leads[i + 1:]:
                for ka in [(a.name, c.contact_id) for c in a.contacts]:
                    for kb in [(b.name, c.contact_id) for c in b.contacts]:
                        configs.append(ContactConfiguration((ka, kb)))
    return configs
