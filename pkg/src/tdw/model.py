"""Warehouse model: classes, environments, schema, and object states.

A warehouse class couples a declared structure (each property tagged with
its origin: derived, computed, or specific) with a construction mapping,
a temporal filter (which changes make history) and an archive filter
(how evicted history is summarised). Environments group classes that
share retention behaviour; filter inheritance only acts inside one.

Warehouse objects hold one current state, ordered past states, and a
cumulative archive state, all with pairwise disjoint temporal domains.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable

from .errors import (
    InheritanceCycle,
    PropertyConflict,
    UnknownClass,
    UnknownEnvironment,
)
from .source import SourceType
from .temporal import Instant, Interval, TemporalDomain, domain_contains, interval

Oid = int

ORIGINS = ("derived", "computed", "specific")
AGG_FUNCTIONS = ("count", "sum", "avg", "max", "min")
ARCHIVE_FUNCTIONS = AGG_FUNCTIONS + ("last",)


@dataclass(frozen=True)
class PropertyDef:
    """One property of a warehouse class structure."""

    name: str
    origin: str  # derived | computed | specific
    kind: str = "attribute"  # attribute | association | composition
    value_type: SourceType | None = None  # attributes only
    target: str | None = None  # relations: warehouse class name
    cardinality: str | None = None  # relations: one | many
    inverse: str | None = None
    source_path: tuple[str, ...] | None = None  # derived: origin property path

    @property
    def is_relation(self) -> bool:
        return self.kind != "attribute"

    def merge_key(self):
        return (self.name, self.origin, self.kind, self.value_type, self.target, self.cardinality)


@dataclass
class WarehouseClass:
    name: str
    structure: list[PropertyDef] = field(default_factory=list)  # own, declared
    supers: tuple[str, ...] = ()
    mapping: Any = None  # expr.MappingExpr once resolved
    tempo: frozenset[str] = frozenset()
    archi: dict[str, str] = field(default_factory=dict)  # property -> function
    source_origins: frozenset[str] = frozenset()  # source interfaces feeding rows


@dataclass(frozen=True)
class RetentionConfig:
    refresh_period: tuple[int, str] | None = None
    keep_past_count: int | None = None
    keep_past_duration: tuple[int, str] | None = None

    def merged_over(self, base: "RetentionConfig") -> "RetentionConfig":
        """Field-by-field override of base (environment over warehouse)."""
        return RetentionConfig(
            self.refresh_period if self.refresh_period is not None else base.refresh_period,
            self.keep_past_count if self.keep_past_count is not None else base.keep_past_count,
            self.keep_past_duration
            if self.keep_past_duration is not None
            else base.keep_past_duration,
        )


@dataclass
class Environment:
    name: str
    classes: tuple[str, ...] = ()
    config: RetentionConfig = RetentionConfig()


@dataclass
class WarehouseSchema:
    name: str
    classes: dict[str, WarehouseClass] = field(default_factory=dict)
    environments: dict[str, Environment] = field(default_factory=dict)
    global_config: RetentionConfig = RetentionConfig()

    def get_class(self, name: str) -> WarehouseClass:
        try:
            return self.classes[name]
        except KeyError:
            raise UnknownClass(f"unknown warehouse class {name!r}") from None

    def environment_of(self, class_name: str) -> Environment | None:
        for env in self.environments.values():
            if class_name in env.classes:
                return env
        return None

    def retention_for(self, env: Environment) -> RetentionConfig:
        return env.config.merged_over(self.global_config)


# ---------------------------------------------------------------------------
# structure and filter derivation


def flatten_type(schema: WarehouseSchema, class_name: str) -> list[PropertyDef]:
    """Own plus inherited properties, supers first, duplicates merged.

    Identical definitions arriving from distinct supers collapse into
    one property; differing definitions under one name are a conflict.
    """
    cls = schema.get_class(class_name)
    _check_acyclic(schema, class_name)
    out: list[PropertyDef] = []
    by_name: dict[str, PropertyDef] = {}

    def add(props: Iterable[PropertyDef]) -> None:
        for p in props:
            prior = by_name.get(p.name)
            if prior is None:
                by_name[p.name] = p
                out.append(p)
            elif prior.merge_key() != p.merge_key():
                raise PropertyConflict(
                    f"{class_name!r} inherits conflicting definitions of {p.name!r}"
                )

    for sup in cls.supers:
        add(flatten_type(schema, sup))
    add(cls.structure)
    return out


def _check_acyclic(schema: WarehouseSchema, start: str) -> None:
    seen: list[str] = []

    def walk(name: str) -> None:
        if name in seen:
            raise InheritanceCycle(" -> ".join(seen + [name]))
        seen.append(name)
        for sup in schema.get_class(name).supers:
            walk(sup)
        seen.pop()

    walk(start)


def transitive_supers(schema: WarehouseSchema, class_name: str) -> set[str]:
    cls = schema.get_class(class_name)
    out: set[str] = set()
    for sup in cls.supers:
        out.add(sup)
        out |= transitive_supers(schema, sup)
    return out


def is_subclass(schema: WarehouseSchema, ci: str, cj: str) -> bool:
    """True iff ci is cj or transitively extends it."""
    schema.get_class(ci)
    schema.get_class(cj)
    return ci == cj or cj in transitive_supers(schema, ci)


def check_subclass_laws(
    schema: WarehouseSchema,
    ci: str,
    cj: str,
    extensions: dict[str, set] | None = None,
) -> list[str]:
    """Confirm the subclass laws for ci below cj; empty list means ok.

    Checks the type-superset condition, the extension-subset condition
    when extensions are supplied (class name -> oid set), and the
    filter-superset conditions when both classes share an environment.
    """
    problems: list[str] = []
    if not is_subclass(schema, ci, cj):
        return [f"{ci!r} is not a subclass of {cj!r}"]
    sub_names = {p.name for p in flatten_type(schema, ci)}
    sup_names = {p.name for p in flatten_type(schema, cj)}
    if not sub_names >= sup_names:
        problems.append(f"type of {ci!r} misses {sorted(sup_names - sub_names)}")
    if extensions is not None:
        if not set(extensions.get(ci, set())) <= set(extensions.get(cj, set())):
            problems.append(f"extension of {ci!r} is not within {cj!r}")
    env_i = schema.environment_of(ci)
    if env_i is not None and env_i is schema.environment_of(cj):
        tempo_i, archi_i = effective_filters(schema, ci)
        tempo_j, archi_j = effective_filters(schema, cj)
        if not tempo_i >= tempo_j:
            problems.append(f"temporal filter of {ci!r} misses {sorted(tempo_j - tempo_i)}")
        if not set(archi_i) >= set(archi_j):
            problems.append(
                f"archive filter of {ci!r} misses {sorted(set(archi_j) - set(archi_i))}"
            )
    return problems


def effective_filters(
    schema: WarehouseSchema, class_name: str
) -> tuple[frozenset[str], dict[str, str]]:
    """Filters in force for a class: own plus same-environment supers'.

    A class outside every environment has empty effective filters, no
    matter what it or its supers declare.
    """
    env = schema.environment_of(class_name)
    if env is None:
        return frozenset(), {}
    cls = schema.get_class(class_name)
    tempo = set(cls.tempo)
    archi = dict(cls.archi)
    for sup in transitive_supers(schema, class_name):
        if schema.environment_of(sup) is env:
            sup_cls = schema.get_class(sup)
            tempo |= sup_cls.tempo
            for prop, fn in sup_cls.archi.items():
                archi.setdefault(prop, fn)
    return frozenset(tempo), archi


def historization_level(schema: WarehouseSchema, env_name: str) -> str:
    """graph, class, or attribute, per the environment's shape."""
    try:
        env = schema.environments[env_name]
    except KeyError:
        raise UnknownEnvironment(f"unknown environment {env_name!r}") from None
    if len(env.classes) > 1:
        return "graph"
    (only,) = env.classes
    tempo, _ = effective_filters(schema, only)
    attributes = {p.name for p in flatten_type(schema, only) if not p.is_relation}
    return "class" if attributes <= tempo else "attribute"


# ---------------------------------------------------------------------------
# schema validation


@dataclass(frozen=True)
class SchemaViolation:
    kind: str
    subject: str  # class or environment the violation is anchored to
    detail: str


def validate_schema(schema: WarehouseSchema) -> list[SchemaViolation]:
    """All schema-level consistency checks; an empty list means valid."""
    out: list[SchemaViolation] = []
    cyclic: set[str] = set()
    for name in sorted(schema.classes):
        try:
            _check_acyclic(schema, name)
        except InheritanceCycle as exc:
            cyclic.add(name)
            out.append(SchemaViolation("inheritance-cycle", name, str(exc)))
        except UnknownClass as exc:
            cyclic.add(name)
            out.append(SchemaViolation("unknown-super", name, str(exc)))

    # derived-relation closure, grouped by missing endpoint class
    missing: dict[str, list[str]] = {}
    for name in sorted(schema.classes):
        for p in schema.classes[name].structure:
            if p.is_relation and p.target not in schema.classes:
                missing.setdefault(p.target, []).append(f"{name}.{p.name}")
    for target in sorted(missing):
        out.append(
            SchemaViolation(
                "relation-closure",
                target,
                f"relations {', '.join(missing[target])} target {target!r}, "
                "which is not part of the warehouse",
            )
        )

    # environment membership rules
    membership: dict[str, list[str]] = {}
    for env_name in sorted(schema.environments):
        env = schema.environments[env_name]
        if not env.classes:
            out.append(SchemaViolation("environment-empty", env_name, "no classes"))
        for cname in env.classes:
            if cname not in schema.classes:
                out.append(
                    SchemaViolation(
                        "environment-unknown-class", env_name, f"unknown class {cname!r}"
                    )
                )
            else:
                membership.setdefault(cname, []).append(env_name)
    for cname in sorted(membership):
        if len(membership[cname]) > 1:
            out.append(
                SchemaViolation(
                    "environment-disjoint",
                    cname,
                    f"class belongs to environments {', '.join(membership[cname])}",
                )
            )
    for cname in sorted(schema.classes):
        cls = schema.classes[cname]
        if (cls.tempo or cls.archi) and cname not in membership:
            out.append(
                SchemaViolation(
                    "filtered-class-outside-environment",
                    cname,
                    "class declares filters but belongs to no environment",
                )
            )

    # filter contents
    for cname in sorted(schema.classes):
        if cname in cyclic:
            continue
        cls = schema.classes[cname]
        try:
            flat = {p.name for p in flatten_type(schema, cname)}
        except (PropertyConflict, UnknownClass) as exc:
            out.append(SchemaViolation("property-conflict", cname, str(exc)))
            continue
        for prop in sorted(cls.tempo | set(cls.archi)):
            if prop not in flat:
                out.append(
                    SchemaViolation(
                        "filter-unknown-property", cname, f"filter names unknown property {prop!r}"
                    )
                )
        tempo, _ = effective_filters(schema, cname)
        for prop in sorted(cls.archi):
            if prop in flat and prop not in tempo:
                out.append(
                    SchemaViolation(
                        "archive-not-temporal",
                        cname,
                        f"archived property {prop!r} is not in the temporal filter",
                    )
                )

    # retention bounds where archives exist
    for env_name in sorted(schema.environments):
        env = schema.environments[env_name]
        needs = any(
            effective_filters(schema, c)[1] for c in env.classes if c in schema.classes
        )
        cfg = schema.retention_for(env)
        if needs and cfg.keep_past_count is None and cfg.keep_past_duration is None:
            out.append(
                SchemaViolation(
                    "retention-missing",
                    env_name,
                    "classes archive history but no retention bound is configured",
                )
            )
    return out


# ---------------------------------------------------------------------------
# objects and states


@dataclass
class State:
    domain: TemporalDomain
    value: dict[str, Any]


@dataclass
class ArchiveState:
    domain: TemporalDomain
    # property -> {"function": name, "value": ..., and "count"/"sum" for avg}
    aggregates: dict[str, dict[str, Any]]


@dataclass
class WarehouseObject:
    oid: Oid
    class_name: str
    current: State
    past: list[State] = field(default_factory=list)
    archives: list[ArchiveState] = field(default_factory=list)
    status: str = "active"  # active | frozen
    source_key: tuple[tuple[str, str], ...] = ()

    def all_domains(self) -> list[TemporalDomain]:
        out = [self.current.domain]
        out.extend(s.domain for s in self.past)
        out.extend(a.domain for a in self.archives)
        return out


def lifecycle_span(obj: WarehouseObject) -> Interval:
    """Bounding interval over every state domain of the object."""
    ticks = [t for d in obj.all_domains() for iv in d.intervals for t in (iv.start.tick, iv.end.tick)]
    unit = obj.current.domain.unit
    return interval(unit, min(ticks), max(ticks))


def state_at(obj: WarehouseObject, t: Instant):
    """Locate the object's state holding instant t.

    Returns ("current"|"past", State) or ("archive", ArchiveState), or
    None when t falls outside every state domain.
    """
    if domain_contains(obj.current.domain, t):
        return ("current", obj.current)
    for s in obj.past:
        if domain_contains(s.domain, t):
            return ("past", s)
    for a in obj.archives:
        if domain_contains(a.domain, t):
            return ("archive", a)
    return None


def check_state_disjointness(obj: WarehouseObject) -> list[str]:
    """Granule-level overlap check across all states; empty means ok."""
    seen: dict[int, str] = {}
    problems: list[str] = []
    labels = [("current", obj.current.domain)]
    labels += [(f"past[{i}]", s.domain) for i, s in enumerate(obj.past)]
    labels += [(f"archive[{i}]", a.domain) for i, a in enumerate(obj.archives)]
    for label, dom in labels:
        for g in dom.granules():
            if g in seen:
                problems.append(f"granule {g} in both {seen[g]} and {label}")
            else:
                seen[g] = label
    return problems
