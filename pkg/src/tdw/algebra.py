"""Evaluator for the construction algebra.

Every node yields a ClassBuild: a structure of binder-tagged properties
plus rows carrying their originating source keys. Rows are kept sorted
by source key so evaluation is reproducible; extraction results have no
superclasses. Intermediate builds play the role of temporary classes in
a composed chain.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Iterable

from .errors import (
    AmbiguousProperty,
    EmptyOperands,
    NameCollision,
    NonNumericAggregate,
    NotCommonProperty,
    PropertyConflict,
    TypeInferenceError,
    TypeMismatchInPredicate,
    UnknownPath,
    UnknownProperty,
)
from .expr import (
    AggCall,
    Aliased,
    Augment,
    AugmentBinding,
    Comparison,
    Containment,
    Generalize,
    Hide,
    Join,
    MappingExpr,
    Path,
    Predicate,
    Project,
    Select,
    SourceRef,
    Specialize,
)
from .source import Relationship, Snapshot, SourceSchema, SourceType, scalar

_NUMERIC = ("short", "long", "double")


@dataclass(frozen=True)
class BuildProp:
    """A property of a build, tagged with the binder it came from."""

    name: str
    binder: str | None
    origin: str  # derived | computed | specific
    kind: str  # attribute | association | composition
    value_type: SourceType | None = None
    target: str | None = None  # source interface (extraction) or class name
    cardinality: str | None = None
    inverse: str | None = None
    source_path: tuple[str, ...] = ()

    @property
    def is_relation(self) -> bool:
        return self.kind != "attribute"

    def merge_key(self):
        return (self.name, self.origin, self.kind, self.value_type, self.target, self.cardinality)


@dataclass(frozen=True)
class Row:
    key: tuple[tuple[str, str], ...]  # ordered (interface, id) provenance
    values: tuple[Any, ...]  # aligned with the build structure
    binders: tuple[tuple[str, Any], ...] = ()  # binder -> identity token

    def binder_id(self, name: str) -> Any:
        for binder, token in self.binders:
            if binder == name:
                return token
        return None


@dataclass
class ClassBuild:
    structure: list[BuildProp]
    rows: list[Row] = field(default_factory=list)
    supers: tuple[str, ...] = ()

    def names(self) -> list[str]:
        return [p.name for p in self.structure]

    def binder_names(self) -> set[str]:
        return {p.binder for p in self.structure if p.binder}

    def to_dicts(self) -> list[dict[str, Any]]:
        """Rows as plain name -> value maps (names must be unambiguous)."""
        names = self.names()
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise AmbiguousProperty(f"build has colliding property names {sorted(dupes)}")
        return [dict(zip(names, r.values)) for r in self.rows]


def _sorted_rows(rows: Iterable[Row]) -> list[Row]:
    out = sorted(rows, key=lambda r: r.key)
    seen = set()
    for r in out:
        if r.key in seen:
            raise NameCollision(f"duplicate source key {r.key} in build")
        seen.add(r.key)
    return out


# ---------------------------------------------------------------------------
# path resolution


def locate(build: ClassBuild, path: Path) -> tuple[int, tuple[str, ...]]:
    """Resolve a dotted path to (structure index, struct-field tail)."""
    segs = path.segments
    binders = build.binder_names()
    if len(segs) >= 2 and segs[0] in binders:
        hits = [
            i
            for i, p in enumerate(build.structure)
            if p.binder == segs[0] and p.name == segs[1]
        ]
        if not hits:
            raise UnknownPath(f"no property {segs[1]!r} under binder {segs[0]!r}")
        return hits[0], segs[2:]
    hits = [i for i, p in enumerate(build.structure) if p.name == segs[0]]
    if not hits:
        raise UnknownPath(f"no property {segs[0]!r} in build")
    if len(hits) > 1:
        raise AmbiguousProperty(
            f"property {segs[0]!r} is ambiguous; qualify it with a binder name"
        )
    return hits[0], segs[1:]


def _drill_type(prop: BuildProp, tail: tuple[str, ...], path: Path) -> SourceType:
    if prop.is_relation:
        if tail:
            raise UnknownPath(f"{path}: cannot drill into relation {prop.name!r}")
        return scalar("string")  # identity references
    typ = prop.value_type
    for seg in tail:
        if typ is None or typ.kind != "struct":
            raise UnknownPath(f"{path}: {prop.name!r} has no field {seg!r}")
        match = dict(typ.fields).get(seg)
        if match is None:
            raise UnknownPath(f"{path}: struct has no field {seg!r}")
        typ = match
    return typ


def path_prop(build: ClassBuild, path: Path) -> tuple[BuildProp, tuple[str, ...]]:
    idx, tail = locate(build, path)
    prop = build.structure[idx]
    _drill_type(prop, tail, path)  # validates the tail
    return prop, tail


def path_value(build: ClassBuild, row: Row, path: Path) -> Any:
    idx, tail = locate(build, path)
    value = row.values[idx]
    for seg in tail:
        value = None if value is None else value.get(seg)
    return value


# ---------------------------------------------------------------------------
# predicates and aggregates


def check_predicate(build: ClassBuild, pred: Predicate) -> None:
    for atom in pred.atoms:
        if isinstance(atom, Comparison):
            prop, tail = path_prop(build, atom.path)
            if prop.is_relation:
                raise TypeMismatchInPredicate(f"{atom.path} is a relation, not a value")
            typ = _drill_type(prop, tail, atom.path)
            if typ.kind in ("set", "struct"):
                raise TypeMismatchInPredicate(f"{atom.path} is not a scalar")
            literal_numeric = isinstance(atom.literal, (int, float))
            if literal_numeric != (typ.kind in _NUMERIC):
                raise TypeMismatchInPredicate(
                    f"{atom.path} ({typ.kind}) compared with {atom.literal!r}"
                )
        else:
            prop, tail = path_prop(build, atom.path)
            if tail or not prop.is_relation or prop.cardinality != "many":
                raise TypeMismatchInPredicate(
                    f"{atom.path} must be a set-valued relation for containment"
                )
            if atom.binder not in build.binder_names():
                raise UnknownPath(f"containment names unknown binder {atom.binder!r}")


def eval_predicate(build: ClassBuild, pred: Predicate, row: Row) -> bool:
    for atom in pred.atoms:
        if isinstance(atom, Comparison):
            value = path_value(build, row, atom.path)
            if value is None or not _compare(atom.op, value, atom.literal):
                return False
        else:
            members = path_value(build, row, atom.path) or []
            if row.binder_id(atom.binder) not in members:
                return False
    return True


def _compare(op: str, value: Any, literal: Any) -> bool:
    if op == "=":
        return value == literal
    if op == "!=":
        return value != literal
    if op == "<":
        return value < literal
    if op == "<=":
        return value <= literal
    if op == ">":
        return value > literal
    if op == ">=":
        return value >= literal
    raise TypeMismatchInPredicate(f"unknown operator {op!r}")


def agg_result_type(build: ClassBuild, agg: AggCall) -> SourceType:
    """Inferred result type of an aggregate over one row's set value."""
    prop, tail = path_prop(build, agg.path)
    if prop.is_relation:
        if prop.cardinality != "many":
            raise TypeInferenceError(f"{agg.path} is not set-valued")
        element: SourceType | None = None
    else:
        typ = _drill_type(prop, tail, agg.path)
        if typ.kind != "set":
            raise TypeInferenceError(f"{agg.path} is not set-valued")
        element = typ.element
    if agg.function == "count":
        return scalar("long")
    if element is None or element.kind not in _NUMERIC:
        raise NonNumericAggregate(f"{agg.function} needs numeric elements at {agg.path}")
    if agg.function in ("sum", "avg"):
        return scalar("double")
    return element  # min / max


def eval_agg(build: ClassBuild, agg: AggCall, row: Row) -> Any:
    members = path_value(build, row, agg.path)
    members = list(members) if members else []
    if agg.function == "count":
        return len(members)
    if agg.function == "sum":
        return sum(members) if members else 0
    if not members:
        return None  # empty-set avg/min/max carries the null marker
    if agg.function == "avg":
        return sum(members) / len(members)
    if agg.function == "max":
        return max(members)
    return min(members)


# ---------------------------------------------------------------------------
# extraction evaluators


def build_from_interface(
    schema: SourceSchema, interface: str, binder: str, snapshot: Snapshot | None
) -> ClassBuild:
    """One row per source record of the interface (subtypes included)."""
    structure: list[BuildProp] = []
    for name, item, _owner in schema.flattened(interface):
        if isinstance(item, Relationship):
            structure.append(
                BuildProp(
                    name,
                    binder,
                    "derived",
                    "composition" if item.composition else "association",
                    None,
                    item.target,
                    item.cardinality,
                    item.inverse,
                    (name,),
                )
            )
        else:
            structure.append(BuildProp(name, binder, "derived", "attribute", item, source_path=(name,)))
    rows: list[Row] = []
    if snapshot is not None:
        for rec in snapshot.of_interface(schema, interface):
            values = tuple(
                list(rec.links.get(p.name, ())) if p.is_relation else rec.values.get(p.name)
                for p in structure
            )
            rows.append(Row(((rec.interface, rec.id),), values, ((binder, rec.id),)))
    return ClassBuild(structure, _sorted_rows(rows))


def eval_project(items, build: ClassBuild) -> ClassBuild:
    """Restrict the structure to the chosen properties ("items" pairs a
    path with an optional rename); rows keep their source keys."""
    picked: list[tuple[int, tuple[str, ...], str]] = []
    for path, rename in items:
        try:
            idx, tail = locate(build, path)
        except UnknownPath as exc:
            raise UnknownProperty(str(exc)) from None
        _drill_type(build.structure[idx], tail, path)
        picked.append((idx, tail, rename or path.segments[-1]))
    structure = []
    for idx, tail, name in picked:
        prop = build.structure[idx]
        if tail:
            typ = _drill_type(prop, tail, Path(prop.source_path + tail))
            structure.append(
                BuildProp(
                    name,
                    prop.binder,
                    prop.origin,
                    "attribute",
                    typ,
                    source_path=prop.source_path + tail,
                )
            )
        else:
            structure.append(replace(prop, name=name))
    rows = []
    for row in build.rows:
        values = []
        for idx, tail, _name in picked:
            v = row.values[idx]
            for seg in tail:
                v = None if v is None else v.get(seg)
            values.append(v)
        rows.append(Row(row.key, tuple(values), row.binders))
    return ClassBuild(structure, _sorted_rows(rows), ())


def eval_hide(paths, build: ClassBuild) -> ClassBuild:
    """Drop the named properties: project onto the complement."""
    drop = set()
    for path in paths:
        try:
            idx, tail = locate(build, path)
        except UnknownPath as exc:
            raise UnknownProperty(str(exc)) from None
        if tail:
            raise UnknownProperty(f"cannot hide struct field {path}; hide whole properties")
        drop.add(idx)
    structure = [p for i, p in enumerate(build.structure) if i not in drop]
    rows = [
        Row(r.key, tuple(v for i, v in enumerate(r.values) if i not in drop), r.binders)
        for r in build.rows
    ]
    return ClassBuild(structure, _sorted_rows(rows), ())


def eval_augment(bindings: Iterable[AugmentBinding], build: ClassBuild) -> ClassBuild:
    """Extend the structure with computed aggregates and specific slots."""
    structure = list(build.structure)
    names = {p.name for p in structure}
    plans: list[tuple[AugmentBinding, SourceType]] = []
    for b in bindings:
        if b.name in names:
            raise NameCollision(f"augment name {b.name!r} already exists")
        names.add(b.name)
        if b.agg is not None:
            plans.append((b, agg_result_type(build, b.agg)))
        else:
            plans.append((b, _declared_type(b.type_name)))
    for b, typ in plans:
        origin = "computed" if b.agg is not None else "specific"
        structure.append(BuildProp(b.name, None, origin, "attribute", typ))
    rows = []
    for row in build.rows:
        extra = tuple(
            eval_agg(build, b.agg, row) if b.agg is not None else None for b, _ in plans
        )
        rows.append(Row(row.key, row.values + extra, row.binders))
    return ClassBuild(structure, _sorted_rows(rows), ())


def _declared_type(name: str | None) -> SourceType:
    table = {
        "String": "string",
        "Short": "short",
        "Long": "long",
        "Double": "double",
        "Date": "date",
        "Image": "image-ref",
    }
    if name not in table:
        raise TypeInferenceError(f"unknown type {name!r} for specific property")
    return scalar(table[name])


def eval_select(pred: Predicate, build: ClassBuild) -> ClassBuild:
    check_predicate(build, pred)
    rows = [r for r in build.rows if eval_predicate(build, pred, r)]
    return ClassBuild(list(build.structure), _sorted_rows(rows), ())


def eval_join(left: ClassBuild, right: ClassBuild, pred: Predicate) -> ClassBuild:
    """Predicate-filtered cartesian product; structures concatenate and
    colliding names stay distinguishable through binder qualification."""
    overlap = left.binder_names() & right.binder_names()
    if overlap:
        raise NameCollision(f"binders {sorted(overlap)} appear on both join sides")
    structure = list(left.structure) + list(right.structure)
    combined = ClassBuild(structure)
    check_predicate(combined, pred)
    rows = []
    for lrow in left.rows:
        for rrow in right.rows:
            row = Row(lrow.key + rrow.key, lrow.values + rrow.values, lrow.binders + rrow.binders)
            if eval_predicate(combined, pred, row):
                rows.append(row)
    return ClassBuild(structure, _sorted_rows(rows), ())


def eval_aliased(build: ClassBuild, binder: str) -> ClassBuild:
    """Rebind every output property (and the row identity) to one name."""
    structure = [replace(p, binder=binder) for p in build.structure]
    rows = []
    for row in build.rows:
        tokens = {tok for _b, tok in row.binders}
        token = tokens.pop() if len(tokens) == 1 else None
        rows.append(Row(row.key, row.values, ((binder, token),)))
    return ClassBuild(structure, rows, ())


def eval_extraction(
    expr: MappingExpr, schema: SourceSchema, snapshot: Snapshot | None = None
) -> ClassBuild:
    """Bottom-up evaluation of a pure extraction chain.

    With snapshot=None only the structure is computed, which is how
    mappings are type-checked at resolution time.
    """
    if isinstance(expr, SourceRef):
        return build_from_interface(schema, expr.interface, expr.binder, snapshot)
    if isinstance(expr, Aliased):
        return eval_aliased(eval_extraction(expr.child, schema, snapshot), expr.binder)
    if isinstance(expr, Project):
        return eval_project(expr.items, eval_extraction(expr.child, schema, snapshot))
    if isinstance(expr, Hide):
        return eval_hide(expr.paths, eval_extraction(expr.child, schema, snapshot))
    if isinstance(expr, Augment):
        return eval_augment(expr.bindings, eval_extraction(expr.child, schema, snapshot))
    if isinstance(expr, Select):
        return eval_select(expr.pred, eval_extraction(expr.child, schema, snapshot))
    if isinstance(expr, Join):
        return eval_join(
            eval_extraction(expr.left, schema, snapshot),
            eval_extraction(expr.right, schema, snapshot),
            expr.pred,
        )
    raise TypeInferenceError(f"not an extraction node: {type(expr).__name__}")


# ---------------------------------------------------------------------------
# hierarchization evaluators


@dataclass(frozen=True)
class OperandPatch:
    """How a generalization rewrites one operand class."""

    removed: tuple[str, ...]  # properties now inherited from the new super
    new_supers: tuple[str, ...]


def eval_generalize(
    props: Iterable[str], operands: list[tuple[str, ClassBuild]], new_name: str
) -> tuple[ClassBuild, dict[str, OperandPatch]]:
    """Lift the common properties of the operands into a new superclass.

    Returns the new super's build (extension: union of operand rows,
    values restricted to the lifted properties) and, per operand, the
    properties to stop declaring plus its rewritten supers list.
    """
    wanted = list(props)
    if not operands:
        raise EmptyOperands("generalize needs at least one operand")
    reference: dict[str, BuildProp] = {}
    for cname, build in operands:
        by_name: dict[str, list[BuildProp]] = {}
        for p in build.structure:
            by_name.setdefault(p.name, []).append(p)
        for name in wanted:
            candidates = by_name.get(name, [])
            if len(candidates) != 1:
                raise NotCommonProperty(f"{name!r} is not a property of operand {cname!r}")
            prop = candidates[0]
            prior = reference.get(name)
            if prior is None:
                reference[name] = replace(prop, binder=None)
            elif prior.merge_key()[1:] != prop.merge_key()[1:]:  # ignore the name slot
                raise NotCommonProperty(f"{name!r} differs between operands")
    structure = [reference[name] for name in wanted]

    rows: list[Row] = []
    seen_keys: set = set()
    for cname, build in operands:
        index = {p.name: i for i, p in enumerate(build.structure)}
        for row in build.rows:
            if row.key in seen_keys:
                continue
            seen_keys.add(row.key)
            rows.append(Row(row.key, tuple(row.values[index[n]] for n in wanted), row.binders))

    common_supers = set(operands[0][1].supers)
    for _, build in operands[1:]:
        common_supers &= set(build.supers)
    new_build = ClassBuild(structure, _sorted_rows(rows), tuple(sorted(common_supers)))

    patches: dict[str, OperandPatch] = {}
    for cname, build in operands:
        others_common: set[str] | None = None
        for other_name, other in operands:
            if other_name == cname:
                continue
            others_common = (
                set(other.supers) if others_common is None else others_common & set(other.supers)
            )
        drop = others_common or set()
        kept = [s for s in build.supers if s not in drop]
        patches[cname] = OperandPatch(tuple(wanted), tuple(kept) + (new_name,))
    return new_build, patches


def eval_specialize(
    operands: list[tuple[str, str, ClassBuild]], pred: Predicate
) -> ClassBuild:
    """Build a subclass from tuples of operand rows satisfying the
    predicate. operands are (binder, class name, build) triples."""
    if not operands:
        raise EmptyOperands("specialize needs at least one operand")
    tagged: list[ClassBuild] = []
    for binder, _cname, build in operands:
        tagged.append(eval_aliased(build, binder))
    combined_structure: list[BuildProp] = []
    for b in tagged:
        combined_structure.extend(b.structure)
    combined = ClassBuild(combined_structure)
    check_predicate(combined, pred)

    merged_structure: list[BuildProp] = []
    merged_index: list[int] = []  # combined index feeding each merged slot
    by_name: dict[str, int] = {}
    for idx, prop in enumerate(combined_structure):
        prior = by_name.get(prop.name)
        if prior is None:
            by_name[prop.name] = len(merged_structure)
            merged_structure.append(replace(prop, binder=None))
            merged_index.append(idx)
        else:
            if merged_structure[prior].merge_key()[1:] != prop.merge_key()[1:]:
                raise PropertyConflict(
                    f"operands declare incompatible property {prop.name!r}"
                )
            merged_index[prior] = idx  # later operand wins the shared slot

    rows: list[Row] = []
    for picked in _product([b.rows for b in tagged]):
        key = tuple(kv for row in picked for kv in row.key)
        values = tuple(v for row in picked for v in row.values)
        binders = tuple(bv for row in picked for bv in row.binders)
        row = Row(key, values, binders)
        if eval_predicate(combined, pred, row):
            rows.append(Row(key, tuple(values[i] for i in merged_index), binders))
    supers = tuple(cname for _b, cname, _build in operands)
    return ClassBuild(merged_structure, _sorted_rows(rows), supers)


def _product(groups: list[list[Row]]):
    if not groups:
        yield []
        return
    for row in groups[0]:
        for rest in _product(groups[1:]):
            yield [row] + rest
