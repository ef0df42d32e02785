"""Parametric lead geometry, voxelization into conductor labels, axis utilities.

A lead is a straight insulated cylinder starting at ``tip_position`` and
running along ``axis``; ring contacts are bands of the cylinder surface
parameterized by their axial offset from the tip.  Voxelization uses a
voxel-center membership test: a voxel belongs to the lead when its center is
within ``shaft_radius`` of the axis segment, and to a contact when its axial
coordinate additionally falls within the contact span.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .volume import VoxelGrid

ROLE_CATHODE = "cathode"
ROLE_ANODE = "anode_ground"
ROLE_FLOATING = "floating"


@dataclass(frozen=True)
class ContactSpec:
    """Ring contact: axial span [offset, offset + height] mm from the tip."""

    axial_offset: float
    height: float
    contact_id: int

    def __post_init__(self):
        if self.height <= 0:
            raise ValueError(f"contact height must be positive, got {self.height}")
        if self.axial_offset < 0:
            raise ValueError(f"contact offset must be non-negative, got {self.axial_offset}")


@dataclass(frozen=True)
class LeadSpec:
    name: str
    tip_position: tuple[float, float, float]
    axis: tuple[float, float, float]
    shaft_radius: float
    contacts: tuple[ContactSpec, ...]
    insulated_length: float

    def __post_init__(self):
        tip = tuple(float(v) for v in self.tip_position)
        axis = tuple(float(v) for v in self.axis)
        object.__setattr__(self, "tip_position", tip)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "contacts", tuple(self.contacts))
        norm = float(np.linalg.norm(axis))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"lead axis must be a unit vector, |axis| = {norm}")
        if self.shaft_radius <= 0:
            raise ValueError(f"shaft radius must be positive, got {self.shaft_radius}")
        prev_end = -np.inf
        ids = set()
        for c in self.contacts:
            if c.axial_offset < prev_end:
                raise ValueError(
                    f"contact {c.contact_id} overlaps the previous contact along the axis"
                )
            if c.contact_id in ids:
                raise ValueError(f"duplicate contact id {c.contact_id}")
            ids.add(c.contact_id)
            prev_end = c.axial_offset + c.height
        if self.contacts and self.insulated_length < prev_end:
            raise ValueError("insulated_length shorter than the last contact span")

    def contact_center(self, contact_id: int) -> np.ndarray:
        c = self.contact(contact_id)
        t = c.axial_offset + 0.5 * c.height
        return np.array(self.tip_position) + t * np.array(self.axis)

    def contact(self, contact_id: int) -> ContactSpec:
        for c in self.contacts:
            if c.contact_id == contact_id:
                return c
        raise KeyError(f"lead {self.name!r} has no contact {contact_id}")

    def lowest_contact(self) -> ContactSpec:
        if not self.contacts:
            raise ValueError(f"lead {self.name!r} has no contacts")
        return min(self.contacts, key=lambda c: c.axial_offset)


def lead_3387_like(name: str, tip_position, axis, *, shaft_radius: float = 0.635,
                   contact_height: float = 1.5, contact_gap: float = 1.5,
                   first_offset: float = 1.5, n_contacts: int = 4,
                   insulated_length: float = 40.0) -> LeadSpec:
    """Four-ring lead template; all dimensions overridable."""
    contacts = tuple(
        ContactSpec(first_offset + i * (contact_height + contact_gap), contact_height, i)
        for i in range(n_contacts)
    )
    return LeadSpec(name, tuple(tip_position), tuple(axis), shaft_radius,
                    contacts, insulated_length)


@dataclass(frozen=True)
class ContactAssignment:
    role: str
    voltage: float | None = None

    def __post_init__(self):
        if self.role not in (ROLE_CATHODE, ROLE_ANODE, ROLE_FLOATING):
            raise ValueError(f"unknown contact role {self.role!r}")
        if self.role == ROLE_CATHODE:
            if self.voltage is None or not np.isfinite(self.voltage) or self.voltage == 0:
                raise ValueError("cathode requires a finite non-zero voltage")
        elif self.voltage is not None:
            raise ValueError(f"role {self.role!r} does not take a voltage")


@dataclass(frozen=True)
class StimulationSetting:
    """Constant-voltage roles per (lead name, contact id).

    Contacts absent from ``assignments`` are floating; anodes are the return
    path at ground.  Cathode voltages are negative by convention.
    """

    assignments: dict
    pulse_width_us: float = 60.0

    def __post_init__(self):
        object.__setattr__(self, "assignments", dict(self.assignments))
        if self.pulse_width_us <= 0:
            raise ValueError(f"pulse width must be positive, got {self.pulse_width_us}")
        for key, a in self.assignments.items():
            if not isinstance(a, ContactAssignment):
                raise TypeError(f"assignment for {key} must be a ContactAssignment")

    def role_of(self, lead_name: str, contact_id: int) -> ContactAssignment:
        return self.assignments.get((lead_name, contact_id),
                                    ContactAssignment(ROLE_FLOATING))

    def cathodes(self):
        return [k for k, a in self.assignments.items() if a.role == ROLE_CATHODE]

    def anodes(self):
        return [k for k, a in self.assignments.items() if a.role == ROLE_ANODE]


LABEL_TISSUE = 0


@dataclass(frozen=True)
class ConductorMap:
    """Per-voxel conductor labels.

    ``labels`` holds 0 for tissue, ``-(k + 1)`` for the insulated shaft of
    lead k, and ``1 + i`` for conductor i, where ``conductors[i]`` is the
    (lead name, contact id) pair.
    """

    grid: VoxelGrid
    labels: np.ndarray
    lead_names: tuple[str, ...]
    conductors: tuple[tuple[str, int], ...]

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int16)
        if labels.shape != self.grid.dims:
            raise ValueError("label shape does not match grid dims")
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "lead_names", tuple(self.lead_names))
        object.__setattr__(self, "conductors", tuple(tuple(c) for c in self.conductors))

    def conductor_code(self, lead_name: str, contact_id: int) -> int:
        try:
            return 1 + self.conductors.index((lead_name, contact_id))
        except ValueError:
            raise KeyError(f"no conductor ({lead_name!r}, {contact_id})") from None

    def conductor_mask(self, lead_name: str, contact_id: int) -> np.ndarray:
        return self.labels == self.conductor_code(lead_name, contact_id)

    def insulator_mask(self) -> np.ndarray:
        return self.labels < 0

    def tissue_mask(self) -> np.ndarray:
        return self.labels == LABEL_TISSUE

    def conductor_voxel_count(self, lead_name: str, contact_id: int) -> int:
        return int(self.conductor_mask(lead_name, contact_id).sum())


def _axial_radial(grid: VoxelGrid, lead: LeadSpec):
    """Broadcast axial coordinate and squared radial distance per voxel center."""
    tip = np.array(lead.tip_position)
    axis = np.array(lead.axis)
    cx = grid.axis_centers(0)[:, None, None] - tip[0]
    cy = grid.axis_centers(1)[None, :, None] - tip[1]
    cz = grid.axis_centers(2)[None, None, :] - tip[2]
    t = cx * axis[0] + cy * axis[1] + cz * axis[2]
    r2 = cx * cx + cy * cy + cz * cz - t * t
    return t, np.maximum(r2, 0.0)


def voxelize_leads(grid: VoxelGrid, leads) -> ConductorMap:
    """Label voxels as tissue, per-lead insulator, or per-contact conductor."""
    leads = list(leads)
    lo, hi = grid.hull()
    for lead in leads:
        tip = np.array(lead.tip_position)
        if np.any(tip < lo) or np.any(tip > hi):
            raise GeometryError(f"lead {lead.name!r} tip lies outside the grid hull")
        axis = np.array(lead.axis)
        for c in lead.contacts:
            for t in (c.axial_offset, c.axial_offset + c.height):
                p = tip + t * axis
                if np.any(p < lo) or np.any(p > hi):
                    raise GeometryError(
                        f"contact {c.contact_id} of lead {lead.name!r} leaves the grid hull"
                    )

    labels = np.zeros(grid.dims, dtype=np.int16)
    owner = np.full(grid.dims, -1, dtype=np.int8)
    conductors = []
    for li, lead in enumerate(leads):
        t, r2 = _axial_radial(grid, lead)
        shaft = (r2 <= lead.shaft_radius**2) & (t >= 0.0) & (t <= lead.insulated_length)
        clash = shaft & (owner >= 0)
        if clash.any():
            other = leads[int(owner[clash][0])].name
            raise GeometryError(
                f"leads {other!r} and {lead.name!r} produce overlapping shaft voxels"
            )
        owner[shaft] = li
        labels[shaft] = -(li + 1)
        for c in lead.contacts:
            # half-open span: a center exactly on the upper edge belongs to
            # the insulation, so an aligned 1.5 mm contact at 0.25 mm spacing
            # yields exactly 6 conductor layers
            band = shaft & (t >= c.axial_offset) & (t < c.axial_offset + c.height)
            conductors.append((lead.name, c.contact_id))
            labels[band] = len(conductors)
    return ConductorMap(grid, labels, tuple(lead.name for lead in leads), tuple(conductors))


def lowest_contact_midpoint(leads) -> np.ndarray:
    """Center of the lowest contact, or the midpoint of lowest contacts."""
    leads = list(leads)
    if not leads:
        raise ValueError("need at least one lead")
    centers = [lead.contact_center(lead.lowest_contact().contact_id) for lead in leads]
    return np.mean(centers, axis=0)


def average_lead_axis(leads) -> np.ndarray:
    """Normalized mean of lead axes, sign-aligned to the first lead."""
    leads = list(leads)
    if not leads:
        raise ValueError("need at least one lead")
    ref = np.array(leads[0].axis)
    total = np.zeros(3)
    for lead in leads:
        axis = np.array(lead.axis)
        total += -axis if float(axis @ ref) < 0 else axis
    norm = float(np.linalg.norm(total))
    if norm < 1e-12:
        raise GeometryError("lead axes cancel; average trajectory undefined")
    return total / norm
