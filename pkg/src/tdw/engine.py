"""Lifecycle engine: initial load, periodic refresh, archival, identity.

The engine owns the store: every warehouse object, the identity map
from (class, source key) to oid, and the resolved schema. Refreshes are
driven by snapshots taken at extraction points; between two points the
warehouse assumes nothing changed. A refresh diffs each class's mapping
result against the stored extension: new keys create objects, equal
values carry the current state forward, changes to temporal-filter
properties push history, other changes overwrite in place, and vanished
keys freeze their object one granule before the extraction point.

A store is single-writer. refresh() is atomic: it works on a copy of
the dynamic state and publishes it only on success.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from typing import Any

from . import model
from .algebra import BuildProp, ClassBuild, Row, eval_extraction, eval_select, eval_specialize
from .dsl import WarehouseDef, parse_warehouse_def, print_warehouse_def, resolve
from .errors import (
    DanglingRelationTarget,
    Error,
    FrozenObject,
    MixedUnits,
    NonMonotonicInstant,
    NotSpecificProperty,
    TypeMismatch,
    UnknownOid,
    UnitMismatch,
)
from .expr import Specialize, is_extraction
from .model import (
    ArchiveState,
    Oid,
    State,
    WarehouseObject,
    WarehouseSchema,
    effective_filters,
    flatten_type,
)
from .source import (
    Snapshot,
    SourceSchema,
    parse_source_schema,
    print_source_schema,
)
from .temporal import (
    Instant,
    TemporalDomain,
    convert_count,
    domain,
    domain_union,
    extend_end,
    format_instant,
    parse_instant,
)

STORE_FORMAT = "tdw-store-v1"


@dataclass
class ClassCounts:
    created: int = 0
    carried: int = 0
    updated: int = 0
    historized: int = 0
    frozen: int = 0
    archived_evictions: int = 0

    def to_dict(self) -> dict[str, int]:
        return {
            "created": self.created,
            "carried": self.carried,
            "updated": self.updated,
            "historized": self.historized,
            "frozen": self.frozen,
            "archived_evictions": self.archived_evictions,
        }


@dataclass
class RefreshReport:
    at: Instant
    classes: dict[str, ClassCounts] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "at": format_instant(self.at),
            "classes": {name: c.to_dict() for name, c in sorted(self.classes.items())},
            "warnings": list(self.warnings),
        }


@dataclass
class Store:
    source_schema: SourceSchema
    wdef: WarehouseDef
    schema: WarehouseSchema
    source_text: str
    warehouse_text: str
    objects: dict[Oid, WarehouseObject] = field(default_factory=dict)
    identity: dict[tuple[str, tuple[tuple[str, str], ...]], Oid] = field(default_factory=dict)
    memberships: dict[str, set[Oid]] = field(default_factory=dict)
    last_refresh: Instant | None = None
    oid_counter: int = 0

    # -- class categories ---------------------------------------------------

    def owning_classes(self) -> list[str]:
        """Classes whose extension holds objects of their own: extraction
        results and multi-operand specializations."""
        out = []
        for name, cls in self.schema.classes.items():
            if cls.mapping is None:
                continue
            if is_extraction(cls.mapping):
                out.append(name)
            elif isinstance(cls.mapping, Specialize) and len(cls.mapping.operands) > 1:
                out.append(name)
        return out

    def membership_classes(self) -> list[str]:
        return [
            name
            for name, cls in self.schema.classes.items()
            if isinstance(cls.mapping, Specialize) and len(cls.mapping.operands) == 1
        ]

    def extension_of(self, class_name: str) -> list[Oid]:
        """Extension including every subclass's members (a superclass's
        extension is computed, never stored)."""
        self.schema.get_class(class_name)
        oids = set(self._direct_extension(class_name))
        for sub, sub_cls in self.schema.classes.items():
            if class_name in sub_cls.supers:
                oids.update(self.extension_of(sub))
        return sorted(oids)

    def _direct_extension(self, class_name: str) -> set[Oid]:
        if class_name in self.memberships:
            return set(self.memberships[class_name])
        return {oid for oid, obj in self.objects.items() if obj.class_name == class_name}

    # -- queries -------------------------------------------------------------

    def get_object(self, oid: Oid) -> WarehouseObject:
        try:
            return self.objects[oid]
        except KeyError:
            raise UnknownOid(f"no object with oid {oid}") from None

    def value_at(self, oid: Oid, t: Instant):
        """State holding at t: ("current"|"past", value dict),
        ("archive", aggregates), or None outside the lifecycle."""
        located = model.state_at(self.get_object(oid), t)
        if located is None:
            return None
        kind, payload = located
        if kind == "archive":
            return (kind, payload.aggregates)
        return (kind, payload.value)


# ---------------------------------------------------------------------------
# loading and refreshing


def initial_load(
    src: SourceSchema, wdef: WarehouseDef, snapshot: Snapshot, t: Instant | None = None
) -> Store:
    """Build a fresh store from the first extraction point."""
    t = _instant_of(snapshot, t)
    schema = resolve(wdef, src, strict=True)
    store = Store(
        src,
        wdef,
        schema,
        print_source_schema(src),
        print_warehouse_def(wdef),
    )
    state = _WorkState.from_store(store)
    _run_extraction_points(store, state, snapshot, t, initial=True)
    state.publish(store, t)
    return store


def refresh(store: Store, snapshot: Snapshot, t: Instant | None = None) -> RefreshReport:
    """Apply one extraction point; atomic on failure."""
    t = _instant_of(snapshot, t)
    if store.last_refresh is None:
        raise NonMonotonicInstant("store was never loaded")
    if t.unit != store.last_refresh.unit:
        raise UnitMismatch(
            f"refresh unit {t.unit!r} differs from store unit {store.last_refresh.unit!r}"
        )
    if t.tick <= store.last_refresh.tick:
        raise NonMonotonicInstant(
            f"refresh at {format_instant(t)} is not after {format_instant(store.last_refresh)}"
        )
    state = _WorkState.from_store(store)
    report = _run_extraction_points(store, state, snapshot, t, initial=False)
    _check_refresh_period(store, t, report)
    state.publish(store, t)
    return report


def _instant_of(snapshot: Snapshot, t: Instant | None) -> Instant:
    if t is None:
        return snapshot.at
    if t != snapshot.at:
        raise Error(
            f"snapshot was taken at {format_instant(snapshot.at)}, "
            f"not at {format_instant(t)}"
        )
    return t


@dataclass
class _WorkState:
    """Copy of the mutable store state; published only on success."""

    objects: dict[Oid, WarehouseObject]
    identity: dict[tuple[str, tuple[tuple[str, str], ...]], Oid]
    memberships: dict[str, set[Oid]]
    oid_counter: int

    @classmethod
    def from_store(cls, store: Store) -> "_WorkState":
        return cls(
            copy.deepcopy(store.objects),
            dict(store.identity),
            {k: set(v) for k, v in store.memberships.items()},
            store.oid_counter,
        )

    def publish(self, store: Store, t: Instant) -> None:
        store.objects = self.objects
        store.identity = self.identity
        store.memberships = self.memberships
        store.oid_counter = self.oid_counter
        store.last_refresh = t

    def fresh_oid(self) -> Oid:
        self.oid_counter += 1
        return self.oid_counter

    def direct_extension(self, class_name: str) -> list[WarehouseObject]:
        if class_name in self.memberships:
            return [self.objects[o] for o in sorted(self.memberships[class_name])]
        return [
            obj for _oid, obj in sorted(self.objects.items()) if obj.class_name == class_name
        ]

    def extension_objects(self, schema: WarehouseSchema, class_name: str) -> list[WarehouseObject]:
        seen: dict[Oid, WarehouseObject] = {}
        for obj in self.direct_extension(class_name):
            seen[obj.oid] = obj
        for sub, sub_cls in schema.classes.items():
            if class_name in sub_cls.supers:
                for obj in self.extension_objects(schema, sub):
                    seen[obj.oid] = obj
        return [seen[o] for o in sorted(seen)]


def _run_extraction_points(
    store: Store, state: _WorkState, snapshot: Snapshot, t: Instant, initial: bool
) -> RefreshReport:
    report = RefreshReport(t)
    schema = store.schema

    extraction = [n for n in store.owning_classes() if is_extraction(schema.classes[n].mapping)]
    composites = [n for n in store.owning_classes() if n not in extraction]

    # evaluate every extraction mapping over the snapshot
    class_rows: dict[str, list[tuple[tuple, dict[str, Any]]]] = {}
    rel_sources: dict[str, dict[str, str]] = {}
    for name in extraction:
        build = eval_extraction(schema.classes[name].mapping, store.source_schema, snapshot)
        rel_sources[name] = {
            p.name: p.target for p in build.structure if p.is_relation and p.target
        }
        class_rows[name] = [
            (row.key, values) for row, values in zip(build.rows, build.to_dicts())
        ]

    # pass 1: allocate oids for unknown source keys
    created_now: dict[str, set[Oid]] = {}
    for name in extraction:
        counts = report.classes.setdefault(name, ClassCounts())
        created_now[name] = set()
        for key, _values in class_rows[name]:
            ident = (name, key)
            if ident in state.identity:
                continue
            oid = state.fresh_oid()
            state.identity[ident] = oid
            state.objects[oid] = WarehouseObject(
                oid, name, State(domain(t.unit, (t.tick, t.tick)), {}), source_key=key
            )
            created_now[name].add(oid)
            counts.created += 1

    # pass 2: align values, rewrite links, and diff
    for name in extraction:
        flat = flatten_type(schema, name)
        tempo, _archi = effective_filters(schema, name)
        specific = [p.name for p in flat if p.origin == "specific"]
        counts = report.classes[name]
        result_keys = set()
        for key, raw in class_rows[name]:
            result_keys.add(key)
            oid = state.identity[(name, key)]
            obj = state.objects[oid]
            if obj.status == "frozen":
                continue  # a frozen object never thaws, even if its key returns
            value = _aligned_value(store, state, name, flat, rel_sources[name], raw)
            if oid in created_now[name]:
                obj.current.value = value
                continue
            # specific slots have no source origin: administrator values
            # survive every refresh until the next patch
            for slot in specific:
                value[slot] = obj.current.value.get(slot)
            _diff_object(obj, value, tempo, t, counts)
        _freeze_vanished(state, name, result_keys, t)

    # pass 3: single-operand specializations become membership sets
    for name in store.membership_classes():
        mapping = schema.classes[name].mapping
        (operand,) = mapping.operands
        build = _build_from_objects(
            store, state, operand.class_name, operand.binder,
            include_frozen=True, exclude_class=name,
        )
        if operand.where is not None:
            build = eval_select(operand.where, build)
        result = eval_specialize([(operand.binder, operand.class_name, build)], mapping.pred)
        state.memberships[name] = {row.binder_id(operand.binder) for row in result.rows}

    # pass 4: multi-operand specializations own composite objects
    for name in _composite_order(schema, composites):
        mapping = schema.classes[name].mapping
        counts = report.classes.setdefault(name, ClassCounts())
        operands = []
        for op in mapping.operands:
            # the class's own members are what this evaluation produces;
            # feeding them back through the operand extension would breed
            # composites of composites
            build = _build_from_objects(
                store, state, op.class_name, op.binder,
                include_frozen=False, exclude_class=name,
            )
            if op.where is not None:
                build = eval_select(op.where, build)
            operands.append((op.binder, op.class_name, build))
        result = eval_specialize(operands, mapping.pred)
        flat = flatten_type(schema, name)
        tempo, _archi = effective_filters(schema, name)
        result_keys = set()
        for row, values in zip(result.rows, result.to_dicts()):
            aligned = {p.name: values.get(p.name) for p in flat}
            result_keys.add(row.key)
            ident = (name, row.key)
            oid = state.identity.get(ident)
            if oid is None:
                oid = state.fresh_oid()
                state.identity[ident] = oid
                state.objects[oid] = WarehouseObject(
                    oid,
                    name,
                    State(domain(t.unit, (t.tick, t.tick)), aligned),
                    source_key=row.key,
                )
                counts.created += 1
                continue
            obj = state.objects[oid]
            if obj.status == "frozen":
                continue
            _diff_object(obj, aligned, tempo, t, counts)
        _freeze_vanished(state, name, result_keys, t)

    # pass 5: archival per environment
    if not initial:
        for env_name in sorted(schema.environments):
            evictions = apply_archival_state(schema, state, schema.environments[env_name], t)
            for cname, n in evictions.items():
                report.classes.setdefault(cname, ClassCounts()).archived_evictions += n

    # frozen counts cover every frozen object so the per-class balance
    # (carried + updated + historized + frozen = previous size) holds
    for name in extraction + composites:
        counts = report.classes.setdefault(name, ClassCounts())
        counts.frozen = sum(
            1
            for obj in state.objects.values()
            if obj.class_name == name and obj.status == "frozen"
        )
    return report


def _diff_object(
    obj: WarehouseObject,
    value: dict[str, Any],
    tempo: frozenset[str],
    t: Instant,
    counts: ClassCounts,
) -> None:
    old = obj.current.value
    if old == value:
        obj.current.domain = extend_end(obj.current.domain, t.tick)
        counts.carried += 1
        return
    changed = {name for name in value if value.get(name) != old.get(name)}
    if changed & tempo:
        # temporal change: the whole old value becomes a past state
        obj.current.domain = extend_end(obj.current.domain, t.tick - 1)
        obj.past.append(State(obj.current.domain, old))
        obj.current = State(domain(t.unit, (t.tick, t.tick)), value)
        counts.historized += 1
    else:
        # evolutions outside the temporal filter are not worth history
        obj.current.value = value
        obj.current.domain = extend_end(obj.current.domain, t.tick)
        counts.updated += 1


def _freeze_vanished(state: _WorkState, class_name: str, result_keys: set, t: Instant) -> None:
    for obj in state.objects.values():
        if obj.class_name != class_name or obj.status != "active":
            continue
        if obj.source_key not in result_keys:
            obj.status = "frozen"
            obj.current.domain = extend_end(obj.current.domain, t.tick - 1)


def _composite_order(schema: WarehouseSchema, composites: list[str]) -> list[str]:
    pending = dict.fromkeys(composites)
    ordered: list[str] = []
    while pending:
        progress = False
        for name in list(pending):
            operands = schema.classes[name].mapping.operands
            if all(op.class_name not in pending for op in operands):
                ordered.append(name)
                del pending[name]
                progress = True
        if not progress:  # unreachable after resolve's cycle check
            ordered.extend(pending)
            break
    return ordered


def _aligned_value(
    store: Store,
    state: _WorkState,
    class_name: str,
    flat: list[model.PropertyDef],
    rel_sources: dict[str, str],
    raw: dict[str, Any],
) -> dict[str, Any]:
    """Restrict a mapping row to the declared structure and swap source
    ids for oids in every relation slot."""
    value: dict[str, Any] = {}
    for p in flat:
        if p.name not in raw:
            value[p.name] = None  # specific slot awaiting a patch
            continue
        v = raw[p.name]
        if p.is_relation:
            ids = list(v) if v else []
            oids = [
                _relation_oid(store, state, class_name, p, rel_sources.get(p.name), rid)
                for rid in ids
            ]
            value[p.name] = sorted(oids) if p.cardinality == "many" else (oids[0] if oids else None)
        else:
            value[p.name] = v
    return value


def _relation_oid(
    store: Store,
    state: _WorkState,
    class_name: str,
    prop: model.PropertyDef,
    source_target: str | None,
    rid: str,
) -> Oid:
    wanted = (
        store.source_schema.subtypes(source_target)
        if source_target in store.source_schema.interfaces
        else {source_target}
    )

    def matches(obj: WarehouseObject) -> bool:
        return any(iface in wanted and sid == rid for iface, sid in obj.source_key)

    # the object of the target class itself represents the source object;
    # subclass members (e.g. composites) only stand in when the target
    # class owns no objects of its own
    hits = [obj.oid for obj in state.direct_extension(prop.target) if matches(obj)]
    if not hits:
        hits = [
            obj.oid
            for obj in state.extension_objects(store.schema, prop.target)
            if matches(obj)
        ]
    if len(hits) != 1:
        raise DanglingRelationTarget(
            f"{class_name}.{prop.name}: source object {source_target}:{rid} has "
            f"{'no' if not hits else 'several'} counterpart(s) in class {prop.target!r}"
        )
    return hits[0]


def _build_from_objects(
    store: Store,
    state: _WorkState,
    class_name: str,
    binder: str,
    include_frozen: bool,
    exclude_class: str | None = None,
) -> ClassBuild:
    """A warehouse class extension as an algebra build (current values)."""
    flat = flatten_type(store.schema, class_name)
    structure = [
        BuildProp(
            p.name,
            binder,
            p.origin,
            p.kind,
            p.value_type,
            p.target,
            p.cardinality,
            p.inverse,
            p.source_path or (),
        )
        for p in flat
    ]
    rows = []
    for obj in state.extension_objects(store.schema, class_name):
        if not include_frozen and obj.status != "active":
            continue
        if exclude_class is not None and obj.class_name == exclude_class:
            continue
        values = tuple(_as_list(obj.current.value.get(p.name), p) for p in flat)
        rows.append(Row(obj.source_key, values, ((binder, obj.oid),)))
    rows.sort(key=lambda r: r.key)
    return ClassBuild(structure, rows)


def _as_list(value: Any, prop: model.PropertyDef) -> Any:
    if prop.is_relation and prop.cardinality == "many":
        return list(value) if value else []
    return value


def _check_refresh_period(store: Store, t: Instant, report: RefreshReport) -> None:
    for env_name in sorted(store.schema.environments):
        env = store.schema.environments[env_name]
        cfg = store.schema.retention_for(env)
        if cfg.refresh_period is None:
            continue
        count, unit = cfg.refresh_period
        try:
            expected = convert_count(count, unit, t.unit)
        except MixedUnits:
            report.warnings.append(
                f"environment {env_name!r}: refresh period unit {unit!r} is not "
                f"comparable with {t.unit!r}"
            )
            continue
        actual = t.tick - store.last_refresh.tick
        if actual != expected:
            report.warnings.append(
                f"environment {env_name!r}: declared refresh period is {expected} "
                f"{t.unit}(s) but {actual} elapsed"
            )


# ---------------------------------------------------------------------------
# archival


def apply_archival(store: Store, env: model.Environment, t: Instant) -> dict[str, int]:
    """Evict past states beyond the environment's retention bounds,
    folding archived properties into each object's archive state."""
    state = _WorkState.from_store(store)
    evictions = apply_archival_state(store.schema, state, env, t)
    state.publish(store, store.last_refresh or t)
    return evictions


def apply_archival_state(
    schema: WarehouseSchema, state: _WorkState, env: model.Environment, t: Instant
) -> dict[str, int]:
    cfg = schema.retention_for(env)
    evictions: dict[str, int] = {}
    for class_name in env.classes:
        if class_name not in schema.classes:
            continue
        _tempo, archi = effective_filters(schema, class_name)
        for obj in state.direct_extension(class_name):
            if obj.class_name != class_name:
                continue  # membership sets archive under their own class
            n = _archive_object(obj, archi, cfg, t)
            if n:
                evictions[class_name] = evictions.get(class_name, 0) + n
    return evictions


def _archive_object(
    obj: WarehouseObject, archi: dict[str, str], cfg: model.RetentionConfig, t: Instant
) -> int:
    evicted = 0
    while obj.past:
        over_count = cfg.keep_past_count is not None and len(obj.past) > cfg.keep_past_count
        over_age = False
        if cfg.keep_past_duration is not None:
            count, unit = cfg.keep_past_duration
            bound = convert_count(count, unit, t.unit)
            oldest_end = obj.past[0].domain.intervals[-1].end.tick
            over_age = (t.tick - oldest_end) > bound
        if not (over_count or over_age):
            break
        old = obj.past.pop(0)
        if archi:
            current = obj.archives[0] if obj.archives else None
            merged = merge_archive(current, old, archi)
            obj.archives = [merged]
        evicted += 1
    return evicted


def merge_archive(
    archive: ArchiveState | None, evicted: State, archi: dict[str, str]
) -> ArchiveState:
    """Fold one evicted state into the cumulative archive.

    avg keeps exact count and sum accumulators; sum adds; min/max fold;
    count counts evictions; last keeps the most recently evicted value.
    Null markers are skipped by the numeric folds.
    """
    aggregates = copy.deepcopy(archive.aggregates) if archive else {}
    for prop in sorted(archi):
        fn = archi[prop]
        value = evicted.value.get(prop)
        entry = aggregates.setdefault(prop, {"function": fn})
        if fn == "count":
            entry["value"] = entry.get("value", 0) + 1
            continue
        if fn == "last":
            entry["value"] = value
            continue
        if value is None:
            entry.setdefault("value", None)
            continue
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise TypeMismatch(f"archive {fn}({prop}) cannot fold value {value!r}")
        if fn == "avg":
            entry["count"] = entry.get("count", 0) + 1
            entry["sum"] = entry.get("sum", 0) + value
            entry["value"] = entry["sum"] / entry["count"]
        elif fn == "sum":
            entry["value"] = entry.get("value", 0) + value
        elif fn == "min":
            prior = entry.get("value")
            entry["value"] = value if prior is None else min(prior, value)
        elif fn == "max":
            prior = entry.get("value")
            entry["value"] = value if prior is None else max(prior, value)
    new_domain = (
        domain_union(archive.domain, evicted.domain) if archive else evicted.domain
    )
    return ArchiveState(new_domain, aggregates)


# ---------------------------------------------------------------------------
# administrator patches


def patch_specific(store: Store, oid: Oid, prop_name: str, value: Any, t: Instant) -> None:
    """Set a specific property; history follows the temporal-filter rule."""
    obj = store.get_object(oid)
    if obj.status != "active":
        raise FrozenObject(f"object {oid} is frozen and cannot be patched")
    flat = flatten_type(store.schema, obj.class_name)
    prop = next((p for p in flat if p.name == prop_name), None)
    if prop is None or prop.origin != "specific":
        raise NotSpecificProperty(
            f"{obj.class_name}.{prop_name} is not a specific property"
        )
    if t.unit != obj.current.domain.unit:
        raise UnitMismatch(f"patch unit {t.unit!r} differs from store unit")
    from .source import _coerce  # value typing mirrors snapshot ingestion

    if value is not None and prop.value_type is not None:
        value = _coerce(prop.value_type, value, f"{obj.class_name}.{prop_name}")
    tempo, _archi = effective_filters(store.schema, obj.class_name)
    new_value = dict(obj.current.value)
    new_value[prop_name] = value
    if new_value == obj.current.value:
        return
    if prop_name in tempo:
        if t.tick <= obj.current.domain.intervals[-1].end.tick:
            raise NonMonotonicInstant(
                "a temporal patch must be dated after the current state"
            )
        obj.past.append(State(obj.current.domain, obj.current.value))
        obj.current = State(domain(t.unit, (t.tick, t.tick)), new_value)
    else:
        obj.current.value = new_value
        obj.current.domain = extend_end(obj.current.domain, t.tick)


# ---------------------------------------------------------------------------
# persistence


def store_to_dict(store: Store) -> dict[str, Any]:
    objects = []
    for oid in sorted(store.objects):
        obj = store.objects[oid]
        objects.append(
            {
                "oid": oid,
                "class": obj.class_name,
                "status": obj.status,
                "source_key": [list(pair) for pair in obj.source_key],
                "current": _state_dict(obj.current),
                "past": [_state_dict(s) for s in obj.past],
                "archives": [
                    {"domain": _domain_dict(a.domain), "aggregates": a.aggregates}
                    for a in obj.archives
                ],
            }
        )
    return {
        "format": STORE_FORMAT,
        "source_schema": store.source_text,
        "warehouse_def": store.warehouse_text,
        "last_refresh": format_instant(store.last_refresh) if store.last_refresh else None,
        "oid_counter": store.oid_counter,
        "identity": [
            [cname, [list(p) for p in key], oid]
            for (cname, key), oid in sorted(store.identity.items())
        ],
        "memberships": {name: sorted(oids) for name, oids in sorted(store.memberships.items())},
        "objects": objects,
    }


def _state_dict(state: State) -> dict[str, Any]:
    return {"domain": _domain_dict(state.domain), "value": state.value}


def _domain_dict(d: TemporalDomain) -> dict[str, Any]:
    return {
        "unit": d.unit,
        "intervals": [[iv.start.tick, iv.end.tick] for iv in d.intervals],
    }


def dumps_store(store: Store) -> str:
    """Canonical, byte-stable serialization (sorted keys, UTF-8)."""
    return json.dumps(store_to_dict(store), ensure_ascii=False, sort_keys=True, indent=1) + "\n"


def save_store(store: Store, path: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(dumps_store(store))
    os.replace(tmp, path)


def load_store(path: str) -> Store:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise Error(f"{path}: not a valid store document ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format") != STORE_FORMAT:
        raise Error(f"{path}: not a {STORE_FORMAT} document")
    src = parse_source_schema(doc["source_schema"])
    wdef = parse_warehouse_def(doc["warehouse_def"])
    schema = resolve(wdef, src, strict=True)
    store = Store(
        src,
        wdef,
        schema,
        doc["source_schema"],
        doc["warehouse_def"],
        last_refresh=parse_instant(doc["last_refresh"]) if doc["last_refresh"] else None,
        oid_counter=doc["oid_counter"],
    )
    for cname, key, oid in doc["identity"]:
        store.identity[(cname, tuple(tuple(p) for p in key))] = oid
    store.memberships = {
        name: set(oids) for name, oids in doc.get("memberships", {}).items()
    }
    for item in doc["objects"]:
        obj = WarehouseObject(
            item["oid"],
            item["class"],
            _state_from(item["current"]),
            [_state_from(s) for s in item["past"]],
            [
                ArchiveState(_domain_from(a["domain"]), a["aggregates"])
                for a in item["archives"]
            ],
            item["status"],
            tuple(tuple(p) for p in item["source_key"]),
        )
        store.objects[item["oid"]] = obj
    return store


def _state_from(doc: dict[str, Any]) -> State:
    return State(_domain_from(doc["domain"]), doc["value"])


def _domain_from(doc: dict[str, Any]) -> TemporalDomain:
    return domain(doc["unit"], *[(s, e) for s, e in doc["intervals"]])
