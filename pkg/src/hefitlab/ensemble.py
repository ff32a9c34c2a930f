"""Average ensembling of prediction sets and the submission composition."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .errors import AlignmentError, ResourceError, ValidationError
from .evaluation import PredictionSet

METHODS = ("SFiT", "HeFiT")

# compilation rows whose XLM-T models went into the submitted ensemble
SUBMISSION_ROWS = {
    "HeFiT": (1, 2, 3, 4, 11, 12),
    "SFiT": (3, 4, 5, 10),
}
SUBMISSION_PRESET = "paper-submission"


@dataclass(frozen=True)
class EnsembleMember:
    run_id: str
    method: str
    compilation_id: int | None = None

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValidationError(f"member method must be SFiT or HeFiT, got {self.method!r}")


@dataclass(frozen=True)
class EnsembleSpec:
    members: tuple[EnsembleMember, ...]
    preset: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "members", tuple(self.members))

    def validate(self) -> None:
        if not self.members:
            raise ValidationError("an ensemble needs at least one member")
        if self.preset == SUBMISSION_PRESET:
            validate_submission_preset(self)
        elif self.preset is not None:
            raise ValidationError(f"unknown ensemble preset {self.preset!r}")


def validate_submission_preset(spec: EnsembleSpec) -> None:
    """Exactly the six HeFiT and four SFiT rows of the submitted ensemble."""
    for method, rows in SUBMISSION_ROWS.items():
        got = sorted(m.compilation_id for m in spec.members if m.method == method)  # type: ignore[type-var]
        if got != sorted(rows):
            raise ValidationError(f"paper-submission preset needs {method} rows {sorted(rows)}, got {got}")
    if len(spec.members) != sum(len(r) for r in SUBMISSION_ROWS.values()):
        raise ValidationError(f"paper-submission preset has 10 members, got {len(spec.members)}")


def ensemble_average(members: Sequence[PredictionSet], name: str = "ensemble") -> PredictionSet:
    """Per-item arithmetic mean, aligned by id, in the first member's id order.

    Member values are sorted per item before summing, so the result does not
    depend on member order, and it is clipped to the per-item [min, max] to
    keep rounding from leaving that interval.
    """
    if not members:
        raise ValidationError("cannot ensemble zero prediction sets")
    first = members[0]
    ref = set(first.ids)
    for k, member in enumerate(members[1:], start=1):
        ids = set(member.ids)
        if ids != ref:
            missing = tuple(sorted(ref - ids)) + tuple(sorted(ids - ref))
            raise AlignmentError(
                f"member {k} ({member.name or 'unnamed'}) is misaligned; ids present in only one set: "
                + ", ".join(missing[:10])
                + (" ..." if len(missing) > 10 else ""),
                missing,
            )
    stack = np.empty((len(members), len(first)))
    for k, member in enumerate(members):
        pos = {item_id: i for i, item_id in enumerate(member.ids)}
        stack[k] = member.predictions[[pos[i] for i in first.ids]]
    stack.sort(axis=0)
    mean = np.clip(stack.sum(axis=0) / len(members), stack[0], stack[-1])
    return PredictionSet(first.ids, first.languages, mean, first.labels, name)


class RunLookup(Protocol):
    def predictions(self, run_id: str, target: str) -> PredictionSet: ...

    def find(self, compilation_id: int, method: str) -> list[str]: ...


def submission_spec(registry: RunLookup) -> EnsembleSpec:
    """Pick the first-seed run for every (row, method) of the submitted ensemble."""
    members = []
    for method, rows in SUBMISSION_ROWS.items():
        for row in rows:
            run_ids = registry.find(row, method)
            if not run_ids:
                raise ResourceError(f"no {method} run for compilation {row} in the registry")
            members.append(EnsembleMember(run_ids[0], method, row))
    return EnsembleSpec(tuple(members), SUBMISSION_PRESET)


def build_submission(registry: RunLookup, spec: EnsembleSpec, target: str = "test") -> PredictionSet:
    spec.validate()
    sets = []
    for member in spec.members:
        try:
            sets.append(registry.predictions(member.run_id, target))
        except ResourceError as exc:
            raise ResourceError(f"member {member.run_id}: {exc}") from exc
    return ensemble_average(sets, name=spec.preset or "ensemble")
