"""Exact probability queries on small discrete models.

Probabilities are :class:`fractions.Fraction` throughout; inference is
brute-force enumeration of the full joint table, which is fine for the
handful of variables these models carry.

Model text format (one declaration per line, ``#`` starts a comment)::

    model cat
    var F: sea chk
    var Purr: purr nopurr | F
    cpt F: 3/4 1/4
    cpt Purr | F=sea: 0.8 0.2
    cpt Purr | F=chk: 0.6 0.4

``var NAME: STATE ... [| PARENT ...]`` declares a variable, its states and
its parents. ``cpt NAME [| P1=s1, P2=s2]: p1 p2 ...`` gives one row of the
conditional table, one probability per state in declaration order. Numbers
are read exactly, either as fractions (``3/4``) or decimals (``0.75``).
Every parent configuration needs exactly one row, and each row must sum to 1.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple


class ModelError(ValueError):
    """Malformed model definition or model file."""


class QueryError(ValueError):
    """Query mentions an unknown variable or state."""


class UndefinedConditional(ZeroDivisionError):
    """Conditioning event has probability zero."""


@dataclass(frozen=True)
class Variable:
    name: str
    states: tuple[str, ...]
    parents: tuple[str, ...] = ()


@dataclass(frozen=True)
class Event:
    """Conjunction of ``variable = state`` atoms.

    Repeating a variable with two different states is allowed and yields the
    impossible event.
    """

    atoms: tuple[tuple[str, str], ...] = ()

    @classmethod
    def of(cls, spec: "Event | Mapping[str, str] | Iterable[tuple[str, str]] | str | None" = None) -> "Event":
        if spec is None:
            return cls()
        if isinstance(spec, Event):
            return spec
        if isinstance(spec, str):
            return cls.parse(spec)
        if isinstance(spec, Mapping):
            spec = spec.items()
        return cls(tuple((str(k), str(v)) for k, v in spec))

    @classmethod
    def parse(cls, text: str) -> "Event":
        """Parse ``"A=x, B=y"`` (commas or whitespace between atoms)."""
        atoms = []
        for tok in text.replace(",", " ").split():
            name, sep, state = tok.partition("=")
            if not sep or not name or not state:
                raise QueryError(f"bad event atom {tok!r}; expected NAME=STATE")
            atoms.append((name, state))
        return cls(tuple(atoms))

    def __and__(self, other: "Event") -> "Event":
        return Event(self.atoms + Event.of(other).atoms)

    def __str__(self) -> str:
        return ", ".join(f"{k}={v}" for k, v in self.atoms) or "<sure event>"


class Branch(NamedTuple):
    """One branch of a fork; ``probability`` is None when the branch has mass 0."""

    state: str
    probability: Fraction | None


@dataclass(frozen=True)
class DiscreteModel:
    """Finite DAG of categorical variables with exact conditional tables.

    ``cpts[name]`` maps a tuple of parent states (in the order of
    ``Variable.parents``) to a tuple of probabilities over the variable's
    states. Validation runs on construction.
    """

    name: str
    variables: tuple[Variable, ...]
    cpts: Mapping[str, Mapping[tuple[str, ...], tuple[Fraction, ...]]] = field(repr=False)

    def __post_init__(self):
        by_name = {}
        for var in self.variables:
            if var.name in by_name:
                raise ModelError(f"variable {var.name!r} declared twice")
            if not var.states:
                raise ModelError(f"variable {var.name!r} has no states")
            if len(set(var.states)) != len(var.states):
                raise ModelError(f"variable {var.name!r} repeats a state")
            by_name[var.name] = var
        for var in self.variables:
            for parent in var.parents:
                if parent not in by_name:
                    raise ModelError(f"{var.name!r} has undeclared parent {parent!r}")
        order = _topological_order(self.variables)
        object.__setattr__(self, "variables", tuple(by_name[n] for n in order))

        cpts = {}
        for var in self.variables:
            table = self.cpts.get(var.name)
            if table is None:
                raise ModelError(f"no table for variable {var.name!r}")
            expected_keys = set(itertools.product(*(by_name[p].states for p in var.parents)))
            got_keys = set(table)
            if got_keys != expected_keys:
                missing = sorted(expected_keys - got_keys)
                extra = sorted(got_keys - expected_keys)
                raise ModelError(
                    f"table for {var.name!r}: missing rows {missing}, unexpected rows {extra}"
                )
            rows = {}
            for key, probs in table.items():
                probs = tuple(Fraction(p) for p in probs)
                if len(probs) != len(var.states):
                    raise ModelError(
                        f"row {key} of {var.name!r} has {len(probs)} entries, "
                        f"expected {len(var.states)}"
                    )
                if any(p < 0 or p > 1 for p in probs):
                    raise ModelError(f"row {key} of {var.name!r} has an entry outside [0, 1]")
                if sum(probs) != 1:
                    raise ModelError(f"row {key} of {var.name!r} sums to {sum(probs)}, not 1")
                rows[tuple(key)] = probs
            cpts[var.name] = rows
        unknown = set(self.cpts) - set(by_name)
        if unknown:
            raise ModelError(f"tables for undeclared variables: {sorted(unknown)}")
        object.__setattr__(self, "cpts", cpts)

    @classmethod
    def build(cls, name, variables, cpts) -> "DiscreteModel":
        """Convenience constructor from plain tuples.

        ``variables`` is an iterable of ``(name, states)`` or
        ``(name, states, parents)``; table entries may be anything
        :class:`~fractions.Fraction` accepts.
        """
        vs = []
        for v in variables:
            vname, states, *rest = v
            parents = tuple(rest[0]) if rest else ()
            vs.append(Variable(vname, tuple(states), parents))
        return cls(name, tuple(vs), {k: dict(t) for k, t in cpts.items()})

    def variable(self, name: str) -> Variable:
        for var in self.variables:
            if var.name == name:
                return var
        raise QueryError(f"unknown variable {name!r} in model {self.name!r}")

    @cached_property
    def _index(self) -> dict[str, int]:
        return {v.name: i for i, v in enumerate(self.variables)}

    @cached_property
    def joint_table(self) -> tuple[tuple[tuple[str, ...], Fraction], ...]:
        """Every full assignment (in variable order) with its exact mass."""
        index = self._index
        rows = []
        for assignment in itertools.product(*(v.states for v in self.variables)):
            mass = Fraction(1)
            for pos, var in enumerate(self.variables):
                key = tuple(assignment[index[p]] for p in var.parents)
                mass *= self.cpts[var.name][key][var.states.index(assignment[pos])]
                if not mass:
                    break
            rows.append((assignment, mass))
        return tuple(rows)

    def check_event(self, event: Event) -> None:
        for name, state in event.atoms:
            var = self.variable(name)
            if state not in var.states:
                raise QueryError(f"variable {name!r} has no state {state!r}; states are {var.states}")


def _topological_order(variables):
    parents = {v.name: set(v.parents) for v in variables}
    order, done = [], set()
    # stable Kahn: keep declaration order among ready nodes
    pending = [v.name for v in variables]
    while pending:
        ready = [n for n in pending if parents[n] <= done]
        if not ready:
            raise ModelError(f"parent links contain a cycle among {sorted(pending)}")
        for n in ready:
            order.append(n)
            done.add(n)
        pending = [n for n in pending if n not in done]
    return order


# queries ----------------------------------------------------------------------


def joint_probability(model: DiscreteModel, event) -> Fraction:
    """Total mass of full assignments consistent with every atom of ``event``."""
    event = Event.of(event)
    model.check_event(event)
    index = model._index
    atoms = [(index[name], state) for name, state in event.atoms]
    total = Fraction(0)
    for assignment, mass in model.joint_table:
        if all(assignment[i] == s for i, s in atoms):
            total += mass
    return total


def marginal_forward(model: DiscreteModel, target) -> Fraction:
    return joint_probability(model, target)


def conditional_probability(model: DiscreteModel, target, given) -> Fraction:
    target, given = Event.of(target), Event.of(given)
    model.check_event(target)
    denom = joint_probability(model, given)
    if denom == 0:
        raise UndefinedConditional(f"P({given}) = 0 in model {model.name!r}")
    return joint_probability(model, target & given) / denom


def degenerate_fork(model: DiscreteModel, target, hidden: str) -> list[Branch]:
    """Conditional probability of ``target`` given each state of ``hidden``.

    Branches whose conditioning state has mass zero come back with
    ``probability=None``.
    """
    target = Event.of(target)
    model.check_event(target)
    branches = []
    for state in model.variable(hidden).states:
        try:
            p = conditional_probability(model, target, Event(((hidden, state),)))
        except UndefinedConditional:
            p = None
        branches.append(Branch(state, p))
    return branches


def total_probability_recompose(model: DiscreteModel, target, hidden: str) -> Fraction:
    """Re-average the fork of ``target`` over ``hidden``; equals the marginal."""
    total = Fraction(0)
    for state, p in degenerate_fork(model, target, hidden):
        if p is not None:
            total += joint_probability(model, Event(((hidden, state),))) * p
    return total


# text format --------------------------------------------------------------------


def parse_model(text: str, source: str = "<string>") -> DiscreteModel:
    name = None
    declared: list[Variable] = []
    tables: dict[str, dict[tuple[str, ...], tuple[Fraction, ...]]] = {}
    rows_seen: dict[str, list[tuple[int, Mapping[str, str], list[Fraction]]]] = {}

    def fail(lineno, msg):
        raise ModelError(f"{source}:{lineno}: {msg}")

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        keyword, _, rest = line.partition(" ")
        rest = rest.strip()
        if keyword == "model":
            if not rest:
                fail(lineno, "model needs a name")
            name = rest
        elif keyword == "var":
            head, sep, states = rest.partition(":")
            if not sep:
                fail(lineno, "expected 'var NAME: STATES [| PARENTS]'")
            states, _, parents = states.partition("|")
            vname = head.strip()
            if not vname or not states.split():
                fail(lineno, "variable needs a name and at least one state")
            declared.append(Variable(vname, tuple(states.split()), tuple(parents.split())))
        elif keyword == "cpt":
            head, sep, values = rest.rpartition(":")
            if not sep:
                fail(lineno, "expected 'cpt NAME [| A=x, B=y]: p1 p2 ...'")
            vname, _, cond = head.partition("|")
            try:
                given = dict(Event.parse(cond).atoms)
                probs = [Fraction(tok) for tok in values.split()]
            except (QueryError, ValueError, ZeroDivisionError) as exc:
                fail(lineno, str(exc))
            rows_seen.setdefault(vname.strip(), []).append((lineno, given, probs))
        else:
            fail(lineno, f"unknown keyword {keyword!r}")

    if name is None:
        raise ModelError(f"{source}: missing 'model NAME' line")
    by_name = {v.name: v for v in declared}
    for vname, rows in rows_seen.items():
        var = by_name.get(vname)
        if var is None:
            fail(rows[0][0], f"table for undeclared variable {vname!r}")
        table = tables.setdefault(vname, {})
        for lineno, given, probs in rows:
            if set(given) != set(var.parents):
                fail(lineno, f"row for {vname!r} must condition on exactly {list(var.parents)}")
            key = tuple(given[p] for p in var.parents)
            if key in table:
                fail(lineno, f"duplicate row {key} for {vname!r}")
            table[key] = tuple(probs)
    try:
        return DiscreteModel(name, tuple(declared), tables)
    except ModelError as exc:
        raise ModelError(f"{source}: {exc}") from None


def format_model(model: DiscreteModel) -> str:
    lines = [f"model {model.name}"]
    for var in model.variables:
        decl = f"var {var.name}: {' '.join(var.states)}"
        if var.parents:
            decl += f" | {' '.join(var.parents)}"
        lines.append(decl)
    for var in model.variables:
        for key, probs in model.cpts[var.name].items():
            cond = ", ".join(f"{p}={s}" for p, s in zip(var.parents, key))
            head = f"cpt {var.name}" + (f" | {cond}" if cond else "")
            lines.append(f"{head}: {' '.join(str(p) for p in probs)}")
    return "\n".join(lines) + "\n"


def load_model(path) -> DiscreteModel:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelError(f"cannot read model file {path}: {exc.strerror or exc}") from exc
    return parse_model(text, source=str(path))


FIXTURES = ("flu", "cat", "truffle")


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("covlab") / "fixtures" / f"{name}.model"))


def load_fixture(name: str, directory=None) -> DiscreteModel:
    """Load a bundled fixture, or ``<directory>/<name>.model`` when given."""
    if directory is not None:
        return load_model(Path(directory) / f"{name}.model")
    return load_model(fixture_path(name))
