"""Typed DSL core: objects, generating arrows, and composite morphism terms.

A DSL is declared as a directed multigraph whose vertices are type objects
and whose edges are named primitive arrows.  Composite terms are built from
identities, arrows, sequential composition and pairing; terms are kept in a
normal form (right-nested composition, identities elided) so structural
equality is decidable.

Names are nominal for the unit and vector-space objects; product and
exponential objects compare structurally on their components, which lets a
pairing built on the fly match a declared product object.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, replace

_NAME_RE = re.compile(r"^[A-Za-z_]\w*$")
DAGGER_SUFFIX = "†"  # not a legal identifier char, so never collides

UNIT_NAME = "unit"


class SpecError(Exception):
    """Malformed or inconsistent DSL declaration."""


class TypeMismatchError(SpecError):
    """Operands of a term constructor do not agree on their types."""


# ── type objects ─────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class TypeObject:
    """An object of the DSL: unit, vector space, product or exponential."""

    name: str
    kind: str  # unit | space | product | exponential
    dim: int = 0
    factors: tuple = ()  # (left, right) for products
    arg: "TypeObject | None" = None  # for exponentials: values are arg -> out
    out: "TypeObject | None" = None

    def sig(self):
        if self.kind == "unit":
            return ("unit",)
        if self.kind == "space":
            return ("space", self.name)
        if self.kind == "product":
            return ("product", self.factors[0].sig(), self.factors[1].sig())
        return ("exp", self.arg.sig(), self.out.sig())

    def __eq__(self, other):
        return isinstance(other, TypeObject) and self.sig() == other.sig()

    def __hash__(self):
        return hash(self.sig())

    @property
    def flat_dim(self):
        """Length of a value of this type as a flat vector."""
        if self.kind == "unit":
            return 0
        if self.kind == "space":
            return self.dim
        if self.kind == "product":
            return self.factors[0].flat_dim + self.factors[1].flat_dim
        raise SpecError(f"exponential object {self.name} has no vector representation")

    def __repr__(self):
        return f"TypeObject({self.name})"


UNIT = TypeObject(name=UNIT_NAME, kind="unit")


def space(name, dim):
    if dim < 1:
        raise SpecError(f"space {name} must have dim >= 1, got {dim}")
    return TypeObject(name=name, kind="space", dim=int(dim))


def product_object(left, right, name=None):
    return TypeObject(name=name or f"({left.name},{right.name})",
                      kind="product", factors=(left, right))


def exponential_object(arg, out, name=None):
    return TypeObject(name=name or f"{out.name}^{arg.name}",
                      kind="exponential", arg=arg, out=out)


# ── generators ───────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class PrimitiveConfig:
    """How a primitive arrow computes: kind plus architecture knobs."""

    kind: str  # gaussian-prior | affine-gaussian | affine-cbernoulli | macro
    hidden: int = 32
    activation: str = "tanh"  # tanh | identity
    init_scale: float = 1.0
    train_scale: bool = True


MACRO_PRIMITIVE = PrimitiveConfig(kind="macro")


@dataclass(frozen=True)
class Generator:
    """A named primitive arrow of the multigraph."""

    name: str
    dom: TypeObject
    cod: TypeObject
    primitive: PrimitiveConfig
    is_macro: bool = False
    is_dagger: bool = False

    def __repr__(self):
        return f"Generator({self.name}: {self.dom.name}->{self.cod.name})"


def dagger_generator(gen):
    """The paired reverse-direction arrow of ``gen`` (an involution)."""
    if gen.is_dagger:
        base_name = gen.name[: -len(DAGGER_SUFFIX)]
    else:
        base_name = gen.name + DAGGER_SUFFIX
    return Generator(name=base_name, dom=gen.cod, cod=gen.dom,
                     primitive=gen.primitive, is_macro=gen.is_macro,
                     is_dagger=not gen.is_dagger)


# ── morphism terms ───────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Morphism:
    dom: TypeObject
    cod: TypeObject


@dataclass(frozen=True)
class Identity(Morphism):
    pass


@dataclass(frozen=True)
class Gen(Morphism):
    gen: Generator


@dataclass(frozen=True)
class Compose(Morphism):
    """Diagrammatic order: ``first`` runs, then ``then``."""

    first: Morphism
    then: Morphism


@dataclass(frozen=True)
class Product(Morphism):
    left: Morphism
    right: Morphism


@dataclass(frozen=True)
class Split(Morphism):
    """Reverse of a pairing: route product components through two branches."""

    left: Morphism
    right: Morphism


@dataclass(frozen=True)
class MacroExpansion(Morphism):
    """A macro arrow together with the recursively sampled term behind it."""

    macro: Generator
    body: Morphism


def identity(obj):
    return Identity(dom=obj, cod=obj)


def gen_morphism(gen):
    return Gen(dom=gen.dom, cod=gen.cod, gen=gen)


def compose(f, g):
    """Sequential composition ``f`` then ``g``; identities are elided and
    the result is right-nested."""
    if f.cod != g.dom:
        raise TypeMismatchError(
            f"cannot compose: codomain {f.cod.name} != domain {g.dom.name}")
    if isinstance(f, Identity):
        return g
    if isinstance(g, Identity):
        return f
    if isinstance(f, Compose):
        return compose(f.first, compose(f.then, g))
    return Compose(dom=f.dom, cod=g.cod, first=f, then=g)


def product(f, g):
    """Pair two unit-sourced terms into a single product-typed term."""
    for m in (f, g):
        if m.dom.kind != "unit":
            raise TypeMismatchError(
                f"pairing requires unit domain, got {m.dom.name}")
    return Product(dom=UNIT, cod=product_object(f.cod, g.cod), left=f, right=g)


def expansion(macro, body):
    """Attach a sampled body term to the macro arrow that stands for it."""
    if not macro.is_macro:
        raise TypeMismatchError(f"{macro.name} is not a macro arrow")
    target = macro.dom if macro.is_dagger else macro.cod
    if target.kind == "product":
        # Forward macros expand to unit -> (A,B); dagger macros to the reverse.
        want_dom, want_cod = macro.dom, macro.cod
    elif target.kind == "exponential":
        # The body is the inner arrow the exponential value stands for.
        want_dom = target.arg if not macro.is_dagger else target.out
        want_cod = target.out if not macro.is_dagger else target.arg
    else:
        raise TypeMismatchError(f"macro {macro.name} targets a non-composite object")
    if body.dom != want_dom or body.cod != want_cod:
        raise TypeMismatchError(
            f"macro {macro.name} expects a {want_dom.name}->{want_cod.name} body, "
            f"got {body.dom.name}->{body.cod.name}")
    return MacroExpansion(dom=macro.dom, cod=macro.cod, macro=macro, body=body)


# ── chains, signatures, type checking ────────────────────────────────────────

@dataclass(frozen=True)
class NestedEntry:
    """A chain entry holding sub-chains: a macro (or bare pairing) node."""

    macro: Generator | None
    branches: tuple


def generator_chain(m):
    """The top-level arrow sequence of a term, with nesting for branches."""
    if isinstance(m, Identity):
        return []
    if isinstance(m, Gen):
        return [m.gen]
    if isinstance(m, Compose):
        return generator_chain(m.first) + generator_chain(m.then)
    if isinstance(m, (Product, Split)):
        return [NestedEntry(macro=None, branches=(
            tuple(generator_chain(m.left)), tuple(generator_chain(m.right))))]
    if isinstance(m, MacroExpansion):
        if isinstance(m.body, (Product, Split)):
            return [NestedEntry(macro=m.macro, branches=(
                tuple(generator_chain(m.body.left)),
                tuple(generator_chain(m.body.right))))]
        return [NestedEntry(macro=m.macro, branches=(tuple(generator_chain(m.body)),))]
    raise TypeError(f"not a morphism term: {m!r}")


def signature(m):
    """Canonical text form of a term, used as a stable dictionary key."""
    if isinstance(m, Identity):
        return f"id:{m.dom.name}"
    if isinstance(m, Gen):
        return m.gen.name
    if isinstance(m, Compose):
        return f"{signature(m.first)};{signature(m.then)}"
    if isinstance(m, Product):
        return f"({signature(m.left)} x {signature(m.right)})"
    if isinstance(m, Split):
        return f"split({signature(m.left)} x {signature(m.right)})"
    if isinstance(m, MacroExpansion):
        return f"{m.macro.name}[{signature(m.body)}]"
    raise TypeError(f"not a morphism term: {m!r}")


def typecheck(m):
    """Recompute (dom, cod) bottom-up and verify the stored pair matches."""
    if isinstance(m, Identity):
        got = (m.dom, m.dom)
    elif isinstance(m, Gen):
        got = (m.gen.dom, m.gen.cod)
    elif isinstance(m, Compose):
        fd, fc = typecheck(m.first)
        gd, gc = typecheck(m.then)
        if fc != gd:
            raise TypeMismatchError(
                f"ill-typed composition: {fc.name} != {gd.name}")
        got = (fd, gc)
    elif isinstance(m, Product):
        ld, lc = typecheck(m.left)
        rd, rc = typecheck(m.right)
        if ld.kind != "unit" or rd.kind != "unit":
            raise TypeMismatchError("pairing branches must start at unit")
        got = (UNIT, product_object(lc, rc))
    elif isinstance(m, Split):
        ld, lc = typecheck(m.left)
        rd, rc = typecheck(m.right)
        if lc.kind != "unit" or rc.kind != "unit":
            raise TypeMismatchError("split branches must end at unit")
        got = (product_object(ld, rd), UNIT)
    elif isinstance(m, MacroExpansion):
        expansion(m.macro, m.body)  # revalidates the body against the macro
        typecheck(m.body)
        got = (m.macro.dom, m.macro.cod)
    else:
        raise TypeError(f"not a morphism term: {m!r}")
    if got[0] != m.dom or got[1] != m.cod:
        raise TypeMismatchError(
            f"stored types {m.dom.name}->{m.cod.name} disagree with "
            f"recomputed {got[0].name}->{got[1].name}")
    return got


# ── DOT rendering ────────────────────────────────────────────────────────────

def to_dot(m):
    """Deterministic DOT digraph of a term, read top to bottom."""
    lines = ["digraph morphism {", "  rankdir=TB;"]
    counter = [0]
    nodes, edges = [], []

    def fresh(gen):
        nid = f"n{counter[0]}"
        counter[0] += 1
        nodes.append(f'  {nid} [label="{gen.name}: {gen.dom.name}->{gen.cod.name}"];')
        return nid

    def walk(term, heads):
        """Emit nodes for ``term``; ``heads`` are ids feeding into it.
        Returns the ids whose output feeds the next stage."""
        if isinstance(term, Identity):
            return heads
        if isinstance(term, Gen):
            nid = fresh(term.gen)
            for h in heads:
                edges.append(f"  {h} -> {nid};")
            return [nid]
        if isinstance(term, Compose):
            mid = walk(term.first, heads)
            return walk(term.then, mid)
        if isinstance(term, (Product, Split)):
            out = walk(term.left, heads)
            out += walk(term.right, heads)
            return out
        if isinstance(term, MacroExpansion):
            inner = walk(term.body, heads)
            nid = fresh(term.macro)
            for h in inner:
                edges.append(f"  {h} -> {nid};")
            return [nid]
        raise TypeError(f"not a morphism term: {term!r}")

    walk(m, [])
    lines.extend(nodes)
    lines.extend(edges)
    lines.append("}")
    return "\n".join(lines) + "\n"


# ── the declared DSL ─────────────────────────────────────────────────────────

@dataclass(frozen=True)
class CategorySpec:
    """A validated DSL declaration: objects, arrows and the data object."""

    objects: tuple  # unit first, then declaration order
    generators: tuple  # declaration order, auto macros appended
    data_object: TypeObject
    source_doc: dict = field(compare=False, default_factory=dict)

    def object(self, name):
        for o in self.objects:
            if o.name == name:
                return o
        raise KeyError(name)

    def generator(self, name):
        for g in self.generators:
            if g.name == name:
                return g
        raise KeyError(name)

    @property
    def macros(self):
        return tuple(g for g in self.generators if g.is_macro)

    def serialize(self):
        """Canonical JSON text; parse(serialize(spec)) is structurally equal."""
        doc = {
            "objects": [],
            "generators": [],
            "data_object": self.data_object.name,
        }
        for o in self.objects:
            if o.kind == "unit":
                continue
            if o.kind == "space":
                doc["objects"].append({"name": o.name, "kind": "space", "dim": o.dim})
            elif o.kind == "product":
                doc["objects"].append({"name": o.name, "kind": "product",
                                       "factors": [f.name for f in o.factors]})
            else:
                doc["objects"].append({"name": o.name, "kind": "exponential",
                                       "dom": o.arg.name, "cod": o.out.name})
        for g in self.generators:
            if g.is_macro:
                continue
            prim = {"kind": g.primitive.kind}
            if g.primitive.kind in ("affine-gaussian", "affine-cbernoulli"):
                prim["hidden"] = g.primitive.hidden
                prim["activation"] = g.primitive.activation
            if g.primitive.kind in ("gaussian-prior", "affine-gaussian"):
                prim["init_scale"] = g.primitive.init_scale
                prim["train_scale"] = g.primitive.train_scale
            doc["generators"].append({"name": g.name, "dom": g.dom.name,
                                      "cod": g.cod.name, "primitive": prim})
        return json.dumps(doc, indent=2, sort_keys=True)

    def content_hash(self):
        return hashlib.sha256(self.serialize().encode()).hexdigest()


def _require(cond, msg):
    if not cond:
        raise SpecError(msg)


def _parse_primitive(raw, where):
    _require(isinstance(raw, dict), f"{where}: primitive must be an object")
    kind = raw.get("kind")
    _require(kind in ("gaussian-prior", "affine-gaussian", "affine-cbernoulli"),
             f"{where}: unknown primitive kind {kind!r}")
    cfg = PrimitiveConfig(
        kind=kind,
        hidden=int(raw.get("hidden", 32)),
        activation=raw.get("activation", "tanh"),
        init_scale=float(raw.get("init_scale", 1.0)),
        train_scale=bool(raw.get("train_scale", True)),
    )
    _require(cfg.hidden >= 1, f"{where}: hidden width must be >= 1")
    _require(cfg.activation in ("tanh", "identity"),
             f"{where}: activation must be tanh or identity")
    _require(cfg.init_scale > 0, f"{where}: init_scale must be positive")
    return cfg


def parse_spec(text):
    """Parse and validate a DSL declaration from JSON text.

    The document has three top-level keys: ``objects`` (everything except
    the implicit unit), ``generators`` and ``data_object``.  Macro arrows
    for declared product and exponential objects are inserted
    automatically, one per object, named ``macro_<object>``.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecError(f"syntax error at line {e.lineno}: {e.msg}") from None
    _require(isinstance(doc, dict), "top level must be an object")

    raw_objects = doc.get("objects", [])
    raw_generators = doc.get("generators", [])
    _require("data_object" in doc, "missing data object declaration")

    # First pass: names and kinds.
    raw_by_name = {}
    order = []
    for raw in raw_objects:
        _require(isinstance(raw, dict), "objects entries must be objects")
        name = raw.get("name")
        _require(isinstance(name, str) and _NAME_RE.match(name),
                 f"bad object name {name!r}")
        _require(name not in raw_by_name and name != UNIT_NAME,
                 f"duplicate name: {name}")
        raw_by_name[name] = raw
        order.append(name)

    resolved = {UNIT_NAME: UNIT}

    def resolve(name, stack=()):
        if name in resolved:
            return resolved[name]
        _require(name in raw_by_name, f"unknown object: {name}")
        _require(name not in stack, f"cyclic object definition: {name}")
        raw = raw_by_name[name]
        kind = raw.get("kind")
        if kind == "space":
            _require("dim" in raw, f"object {name}: space needs a dim")
            obj = space(name, int(raw["dim"]))
        elif kind == "product":
            factors = raw.get("factors")
            _require(isinstance(factors, list) and len(factors) == 2,
                     f"object {name}: product needs exactly two factors")
            obj = TypeObject(name=name, kind="product", factors=(
                resolve(factors[0], stack + (name,)),
                resolve(factors[1], stack + (name,))))
        elif kind == "exponential":
            _require("dom" in raw and "cod" in raw,
                     f"object {name}: exponential needs dom and cod")
            obj = TypeObject(name=name, kind="exponential",
                             arg=resolve(raw["dom"], stack + (name,)),
                             out=resolve(raw["cod"], stack + (name,)))
        elif kind == "unit":
            raise SpecError(f"object {name}: the unit object is implicit")
        else:
            raise SpecError(f"object {name}: unknown kind {kind!r}")
        resolved[name] = obj
        return obj

    objects = [UNIT] + [resolve(n) for n in order]

    # Generators.
    gens = []
    gen_names = set()
    for raw in raw_generators:
        _require(isinstance(raw, dict), "generators entries must be objects")
        name = raw.get("name")
        _require(isinstance(name, str) and _NAME_RE.match(name),
                 f"bad generator name {name!r}")
        _require(name not in gen_names, f"duplicate name: {name}")
        _require(name not in resolved, f"duplicate name: {name}")
        for key in ("dom", "cod"):
            ref = raw.get(key)
            _require(ref in resolved,
                     f"generator {name}: unknown object {ref!r}")
        dom, cod = resolved[raw["dom"]], resolved[raw["cod"]]
        prim = _parse_primitive(raw.get("primitive", {}), f"generator {name}")
        if prim.kind == "gaussian-prior":
            _require(dom.kind == "unit",
                     f"generator {name}: gaussian-prior arrows start at unit")
            _require(cod.kind == "space",
                     f"generator {name}: gaussian-prior arrows target a space")
        if prim.kind in ("affine-gaussian", "affine-cbernoulli"):
            _require(dom.kind != "unit" and dom.kind != "exponential",
                     f"generator {name}: affine arrows need a vector domain")
            _require(cod.kind == "space",
                     f"generator {name}: affine arrows target a space")
        gens.append(Generator(name=name, dom=dom, cod=cod, primitive=prim))
        gen_names.add(name)

    # Auto-insert one macro arrow per declared composite object.
    for name in order:
        obj = resolved[name]
        if obj.kind not in ("product", "exponential"):
            continue
        macro_name = f"macro_{name}"
        _require(macro_name not in gen_names and macro_name not in resolved,
                 f"duplicate name: {macro_name}")
        gens.append(Generator(name=macro_name, dom=UNIT, cod=obj,
                              primitive=MACRO_PRIMITIVE, is_macro=True))
        gen_names.add(macro_name)

    data_name = doc["data_object"]
    _require(data_name in resolved, f"unknown object: {data_name!r}")
    data_object = resolved[data_name]
    _require(data_object.kind == "space",
             "data object must be a vector space")

    # Likelihood-style primitives must sit at the end of a program.
    for g in gens:
        if g.primitive.kind == "affine-cbernoulli":
            _require(g.cod == data_object,
                     f"generator {g.name}: continuous-Bernoulli arrows must "
                     f"target the data object")

    # Reachability: every declared object must be reachable from unit.
    adj = {o.name: [] for o in objects}
    for g in gens:
        adj[g.dom.name].append(g.cod.name)
    seen = {UNIT_NAME}
    frontier = [UNIT_NAME]
    while frontier:
        cur = frontier.pop()
        for nxt in adj[cur]:
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    for o in objects:
        _require(o.name in seen or o.kind == "unit",
                 f"unreachable object: {o.name}")

    return CategorySpec(objects=tuple(objects), generators=tuple(gens),
                        data_object=data_object, source_doc=doc)


def min_length_warnings(spec, min_generators=2):
    """Objects whose every outgoing arrow enters the data object.

    A walk passing through such an object before the minimum length is
    reached has no admissible continuation; callers surface these as
    warnings because the conflict depends on the runtime walk settings.
    """
    if min_generators < 2:
        return []
    out = []
    for o in spec.objects:
        if o == spec.data_object:
            continue
        arrows = [g for g in spec.generators if g.dom == o]
        if arrows and all(g.cod == spec.data_object for g in arrows):
            out.append(o.name)
    return out
