"""Biochemical systems: multi-affine vector fields, partitions and model files.

A system is the tuple ``(n, f, T, I_C)``: dimension, multi-affine vector
field, threshold partition and a set of initial rectangles.  Fields are
either written directly as monomial term lists or compiled from a
mass-action reaction network with unit stoichiometry.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np


class ModelError(ValueError):
    """Invalid model content.

    ``path`` names the offending field (``thresholds[1]``, ``reactions[0].rate``)
    and ``line`` is the best-effort 1-based line in the source text.
    """

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if path:
            where.append(path)
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class MultiAffinityError(ModelError):
    """A term raises some variable to a power greater than one."""


@dataclass(frozen=True)
class MultiAffineTerm:
    coefficient: float
    variables: tuple[int, ...] = ()

    def __post_init__(self):
        if len(set(self.variables)) != len(self.variables):
            raise MultiAffinityError(f"term repeats a variable: {self.variables}")
        object.__setattr__(self, "coefficient", float(self.coefficient))
        object.__setattr__(self, "variables", tuple(sorted(int(v) for v in self.variables)))


@dataclass(frozen=True)
class MultiAffineField:
    """``dx_i/dt = sum(c * prod(x_j for j in vars))`` over the terms of component ``i``."""

    dimension: int
    components: tuple[tuple[MultiAffineTerm, ...], ...]

    def __post_init__(self):
        comps = tuple(tuple(c) for c in self.components)
        object.__setattr__(self, "components", comps)
        if self.dimension < 1:
            raise ModelError("dimension must be positive")
        if len(comps) != self.dimension:
            raise ModelError(f"expected {self.dimension} components, got {len(comps)}")
        for i, terms in enumerate(comps):
            for term in terms:
                if any(v < 0 or v >= self.dimension for v in term.variables):
                    raise ModelError(f"component {i}: variable index out of range in {term.variables}")

    @classmethod
    def zero(cls, dimension: int) -> "MultiAffineField":
        return cls(dimension, tuple(() for _ in range(dimension)))

    @cached_property
    def arrays(self):
        """Flat term arrays ``(coef, comp, var_idx, var_cnt)`` consumed by the integrator."""
        terms = [(i, t) for i, comps in enumerate(self.components) for t in comps]
        width = max([len(t.variables) for _, t in terms] + [1])
        coef = np.zeros(len(terms))
        comp = np.zeros(len(terms), dtype=np.int64)
        vidx = np.zeros((len(terms), width), dtype=np.int64)
        vcnt = np.zeros(len(terms), dtype=np.int64)
        for k, (i, t) in enumerate(terms):
            coef[k] = t.coefficient
            comp[k] = i
            vcnt[k] = len(t.variables)
            vidx[k, : len(t.variables)] = t.variables
        return coef, comp, vidx, vcnt

    def __call__(self, x):
        return eval_field(self, x)


@dataclass(frozen=True)
class Reaction:
    rate: float
    reactants: tuple[int, ...]
    products: tuple[int, ...]


@dataclass(frozen=True)
class ReactionNetwork:
    species: tuple[str, ...]
    reactions: tuple[Reaction, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "reactions", tuple(self.reactions))
        seen = set()
        for name in self.species:
            if name in seen:
                raise ModelError(f"duplicate species name {name!r}", path="species")
            seen.add(name)
        n = len(self.species)
        for k, r in enumerate(self.reactions):
            if not r.rate > 0:
                raise ModelError(f"rate constant must be positive, got {r.rate}", path=f"reactions[{k}].rate")
            for role in ("reactants", "products"):
                idx = getattr(r, role)
                if len(set(idx)) != len(idx):
                    raise MultiAffinityError(
                        "stoichiometric coefficient above one breaks multi-affinity",
                        path=f"reactions[{k}].{role}",
                    )
                if any(i < 0 or i >= n for i in idx):
                    raise ModelError("species index out of range", path=f"reactions[{k}].{role}")


@dataclass(frozen=True)
class Partition:
    thresholds: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        ths = tuple(tuple(float(v) for v in t) for t in self.thresholds)
        object.__setattr__(self, "thresholds", ths)
        for i, t in enumerate(ths):
            if len(t) < 2:
                raise ModelError("each axis needs at least two thresholds", path=f"thresholds[{i}]")
            if any(not np.isfinite(v) for v in t):
                raise ModelError("thresholds must be finite", path=f"thresholds[{i}]")
            if any(v < 0 for v in t):
                raise ModelError("thresholds must be nonnegative", path=f"thresholds[{i}]")
            if any(b <= a for a, b in zip(t, t[1:])):
                raise ModelError("thresholds must be strictly increasing", path=f"thresholds[{i}]")

    @property
    def dimension(self) -> int:
        return len(self.thresholds)

    @property
    def shape(self) -> tuple[int, ...]:
        """Number of intervals per axis."""
        return tuple(len(t) - 1 for t in self.thresholds)

    @cached_property
    def lower(self) -> np.ndarray:
        return np.array([t[0] for t in self.thresholds])

    @cached_property
    def upper(self) -> np.ndarray:
        return np.array([t[-1] for t in self.thresholds])


@dataclass(frozen=True)
class BiochemicalSystem:
    field: MultiAffineField
    partition: Partition
    initial: tuple[tuple[int, ...], ...] = ()
    species: tuple[str, ...] = ()
    network: ReactionNetwork | None = None
    name: str = ""
    description: str = ""
    sim_defaults: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        n = self.field.dimension
        if self.partition.dimension != n:
            raise ModelError(f"partition has {self.partition.dimension} axes, field has {n}", path="thresholds")
        if not self.species:
            object.__setattr__(self, "species", tuple(f"x{i + 1}" for i in range(n)))
        if len(self.species) != n:
            raise ModelError("species count differs from dimension", path="species")
        init = tuple(sorted(set(tuple(int(j) for j in r) for r in self.initial)))
        for r in init:
            if len(r) != n or any(j < 0 or j >= m for j, m in zip(r, self.partition.shape)):
                raise ModelError(f"initial rectangle {r} is not part of the partition", path="initial")
        object.__setattr__(self, "initial", init)

    @property
    def dimension(self) -> int:
        return self.field.dimension

    @property
    def inert_axes(self) -> tuple[int, ...]:
        """Species whose derivative is identically zero; they act as parameters and are not tiled."""
        return tuple(i for i, comp in enumerate(self.field.components)
                     if all(t.coefficient == 0.0 for t in comp))


def compile_mass_action(network: ReactionNetwork) -> MultiAffineField:
    """Mass-action ODEs of a network with unit stoichiometry.

    Every reaction with rate ``k`` and reactant set ``R`` contributes the
    flux ``k * prod(x_i, i in R)`` negatively to each reactant and positively
    to each product.  Terms with identical monomials are merged.
    """
    n = len(network.species)
    acc: list[dict[tuple[int, ...], float]] = [dict() for _ in range(n)]
    for r in network.reactions:
        mono = tuple(sorted(r.reactants))
        for i in r.reactants:
            acc[i][mono] = acc[i].get(mono, 0.0) - r.rate
        for i in r.products:
            acc[i][mono] = acc[i].get(mono, 0.0) + r.rate
    comps = []
    for terms in acc:
        comps.append(tuple(MultiAffineTerm(c, m) for m, c in sorted(terms.items()) if c != 0.0))
    return MultiAffineField(n, tuple(comps))


def eval_field(field: MultiAffineField, point) -> np.ndarray:
    """Evaluate the field at one point (shape ``(n,)``) or a batch (``(m, n)``)."""
    x = np.asarray(point, dtype=float)
    n = field.dimension
    if x.shape[-1:] != (n,) or x.ndim > 2:
        raise ValueError(f"expected points of dimension {n}, got shape {x.shape}")
    out = np.zeros(x.shape)
    for i, terms in enumerate(field.components):
        for t in terms:
            val = t.coefficient
            for j in t.variables:
                val = val * x[..., j]
            out[..., i] += val
    return out


def check_multi_affine(raw_terms) -> list[tuple[int, int, int]]:
    """Report every term that repeats a variable.

    ``raw_terms`` holds one sequence per component, each item a pair
    ``(coefficient, variable indices)``.  Returns ``(component, term, variable)``
    triples; an empty list means the polynomial is multi-affine.
    """
    violations = []
    for i, terms in enumerate(raw_terms):
        for k, (_, variables) in enumerate(terms):
            seen = set()
            for v in variables:
                if v in seen:
                    violations.append((i, k, v))
                    break
                seen.add(v)
    return violations


def field_terms(field: MultiAffineField) -> list[list[tuple[float, tuple[int, ...]]]]:
    return [[(t.coefficient, t.variables) for t in comp] for comp in field.components]


# ---------------------------------------------------------------------------
# model files

_TOP_KEYS = {"name", "description", "dimension", "species", "reactions", "odes",
             "thresholds", "initial", "simulation"}
_SIM_KEYS = {"dt", "t_max", "crossing_tol"}


def _line_of(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for no, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return no
    return None


def _number(value, path, text, key, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelError(f"expected a number, got {value!r}", path=path, line=_line_of(text, key))
    value = float(value)
    if not np.isfinite(value):
        raise ModelError("number must be finite", path=path, line=_line_of(text, key))
    if positive and value <= 0:
        raise ModelError(f"must be positive, got {value}", path=path, line=_line_of(text, key))
    return value


def _species_ref(ref, names, path, text, key):
    if isinstance(ref, str):
        if ref not in names:
            raise ModelError(f"unknown species {ref!r}", path=path, line=_line_of(text, key))
        return names[ref]
    if isinstance(ref, int) and not isinstance(ref, bool) and 0 <= ref < len(names):
        return ref
    raise ModelError(f"unknown species reference {ref!r}", path=path, line=_line_of(text, key))


def _align(value, thresholds, path, text):
    # nearest threshold within a relative tolerance, so tiny thresholds stay distinct
    j = int(np.argmin([abs(value - t) for t in thresholds]))
    if abs(value - thresholds[j]) <= 1e-12 * max(abs(value), abs(thresholds[j])):
        return j
    raise ModelError(f"initial bound {value!r} is not a threshold", path=path, line=_line_of(text, "initial"))


def parse_model(text: str) -> BiochemicalSystem:
    """Parse and validate a JSON model document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"malformed JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise ModelError("model must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise ModelError(f"unknown field {key!r}", path=key, line=_line_of(text, key))

    species = doc.get("species")
    if not isinstance(species, list) or not species or not all(isinstance(s, str) for s in species):
        raise ModelError("species must be a non-empty list of names", path="species", line=_line_of(text, "species"))
    dup = [s for s in species if species.count(s) > 1]
    if dup:
        raise ModelError(f"duplicate species name {dup[0]!r}", path="species", line=_line_of(text, "species"))
    n = doc.get("dimension", len(species))
    if isinstance(n, bool) or not isinstance(n, int) or n != len(species):
        raise ModelError(f"dimension {n!r} does not match {len(species)} species", path="dimension",
                         line=_line_of(text, "dimension"))
    names = {s: i for i, s in enumerate(species)}

    if ("reactions" in doc) == ("odes" in doc):
        raise ModelError("exactly one of 'reactions' or 'odes' is required")
    network = None
    if "reactions" in doc:
        reactions = []
        if not isinstance(doc["reactions"], list):
            raise ModelError("reactions must be a list", path="reactions", line=_line_of(text, "reactions"))
        for k, r in enumerate(doc["reactions"]):
            p = f"reactions[{k}]"
            if not isinstance(r, dict) or set(r) - {"rate", "reactants", "products"}:
                raise ModelError("reaction must be {rate, reactants, products}", path=p, line=_line_of(text, "reactions"))
            rate = _number(r.get("rate"), p + ".rate", text, "rate", positive=True)
            sides = []
            for role in ("reactants", "products"):
                refs = r.get(role, [])
                if not isinstance(refs, list):
                    raise ModelError(f"{role} must be a list", path=f"{p}.{role}", line=_line_of(text, role))
                idx = [_species_ref(s, names, f"{p}.{role}", text, role) for s in refs]
                if len(set(idx)) != len(idx):
                    raise MultiAffinityError("stoichiometric coefficient above one breaks multi-affinity",
                                             path=f"{p}.{role}", line=_line_of(text, "reactions"))
                sides.append(tuple(idx))
            reactions.append(Reaction(rate, *sides))
        network = ReactionNetwork(tuple(species), tuple(reactions))
        fld = compile_mass_action(network)
    else:
        odes = doc["odes"]
        if not isinstance(odes, list) or len(odes) != n:
            raise ModelError(f"odes must list {n} components", path="odes", line=_line_of(text, "odes"))
        comps = []
        for i, terms in enumerate(odes):
            if not isinstance(terms, list):
                raise ModelError("component must be a list of terms", path=f"odes[{i}]", line=_line_of(text, "odes"))
            comp = []
            for k, term in enumerate(terms):
                p = f"odes[{i}][{k}]"
                if not isinstance(term, dict) or set(term) - {"coeff", "vars"}:
                    raise ModelError("term must be {coeff, vars}", path=p, line=_line_of(text, "odes"))
                coeff = _number(term.get("coeff"), p + ".coeff", text, "coeff")
                refs = term.get("vars", [])
                if not isinstance(refs, list):
                    raise ModelError("vars must be a list", path=p + ".vars", line=_line_of(text, "vars"))
                idx = [_species_ref(s, names, p + ".vars", text, "vars") for s in refs]
                if check_multi_affine([[(coeff, idx)]]):
                    raise MultiAffinityError("term is not multi-affine (repeated variable)", path=p,
                                             line=_line_of(text, "odes"))
                comp.append(MultiAffineTerm(coeff, tuple(idx)))
            comps.append(tuple(comp))
        fld = MultiAffineField(n, tuple(comps))

    raw_th = doc.get("thresholds")
    if not isinstance(raw_th, list) or len(raw_th) != n:
        raise ModelError(f"thresholds must list {n} axes", path="thresholds", line=_line_of(text, "thresholds"))
    ths = []
    for i, t in enumerate(raw_th):
        p = f"thresholds[{i}]"
        if not isinstance(t, list):
            raise ModelError("axis thresholds must be a list", path=p, line=_line_of(text, "thresholds"))
        vals = sorted(_number(v, p, text, "thresholds") for v in t)
        if any(b == a for a, b in zip(vals, vals[1:])):
            raise ModelError("duplicate threshold", path=p, line=_line_of(text, "thresholds"))
        ths.append(tuple(vals))
    try:
        partition = Partition(tuple(ths))
    except ModelError as exc:
        exc.line = _line_of(text, "thresholds")
        raise

    initial = set()
    raw_init = doc.get("initial", [])
    if not isinstance(raw_init, list):
        raise ModelError("initial must be a list of boxes", path="initial", line=_line_of(text, "initial"))
    for b, box in enumerate(raw_init):
        p = f"initial[{b}]"
        if not isinstance(box, list) or len(box) != n:
            raise ModelError(f"box must give {n} intervals", path=p, line=_line_of(text, "initial"))
        ranges = []
        for i, iv in enumerate(box):
            if not isinstance(iv, list) or len(iv) != 2:
                raise ModelError("interval must be [lo, hi]", path=f"{p}[{i}]", line=_line_of(text, "initial"))
            lo = _number(iv[0], f"{p}[{i}]", text, "initial")
            hi = _number(iv[1], f"{p}[{i}]", text, "initial")
            jlo = _align(lo, ths[i], f"{p}[{i}]", text)
            jhi = _align(hi, ths[i], f"{p}[{i}]", text)
            if jhi <= jlo:
                raise ModelError("empty interval", path=f"{p}[{i}]", line=_line_of(text, "initial"))
            ranges.append(range(jlo, jhi))
        initial.update(itertools.product(*ranges))

    sim = doc.get("simulation", {})
    if not isinstance(sim, dict) or set(sim) - _SIM_KEYS:
        raise ModelError(f"simulation accepts only {sorted(_SIM_KEYS)}", path="simulation",
                         line=_line_of(text, "simulation"))
    sim = {k: _number(v, f"simulation.{k}", text, k, positive=True) for k, v in sim.items()}

    return BiochemicalSystem(
        field=fld,
        partition=partition,
        initial=tuple(sorted(initial)),
        species=tuple(species),
        network=network,
        name=str(doc.get("name", "")),
        description=str(doc.get("description", "")),
        sim_defaults=sim,
    )


def load_model(path) -> BiochemicalSystem:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


def _fmt(x: float) -> str:
    return np.format_float_scientific(float(x), unique=True, trim="-")


def _dump(obj, indent=0) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(k)}: {_dump(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_dump(v) for v in obj) + "]"
        items = [pad + "  " + _dump(v, indent + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    return _fmt(obj)


def _initial_boxes(system: BiochemicalSystem) -> list:
    ths = system.partition.thresholds
    return [[[ths[i][j], ths[i][j + 1]] for i, j in enumerate(r)] for r in system.initial]


def serialize_model(system: BiochemicalSystem) -> str:
    """JSON text that :func:`parse_model` maps back to an equal system."""
    names = list(system.species)
    doc: dict = {}
    if system.name:
        doc["name"] = system.name
    if system.description:
        doc["description"] = system.description
    doc["dimension"] = system.dimension
    doc["species"] = names
    if system.network is not None:
        doc["reactions"] = [
            {"rate": r.rate, "reactants": [names[i] for i in r.reactants], "products": [names[i] for i in r.products]}
            for r in system.network.reactions
        ]
    else:
        doc["odes"] = [
            [{"coeff": t.coefficient, "vars": [names[j] for j in t.variables]} for t in comp]
            for comp in system.field.components
        ]
    doc["thresholds"] = [list(t) for t in system.partition.thresholds]
    doc["initial"] = _initial_boxes(system)
    if system.sim_defaults:
        doc["simulation"] = dict(system.sim_defaults)
    return _dump(doc) + "\n"


def with_initial(system: BiochemicalSystem, initial: Iterable[Sequence[int]]) -> BiochemicalSystem:
    """Copy of ``system`` with a different initial rectangle set."""
    return BiochemicalSystem(system.field, system.partition, tuple(tuple(r) for r in initial), system.species,
                             system.network, system.name, system.description, dict(system.sim_defaults))
