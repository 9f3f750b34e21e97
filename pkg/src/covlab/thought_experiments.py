"""Reference quantities for the three bundled models and their evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from covlab import exactprob as ep


@dataclass(frozen=True)
class Quantity:
    label: str
    model: str
    kind: str  # "marginal" | "conditional" | "fork" | "recompose"
    target: str
    given: str | None = None
    hidden: str | None = None
    branch: str | None = None
    expected: Fraction = Fraction(0)
    reported: str | None = None  # rounded decimal quoted alongside the value, if any


QUANTITIES = (
    Quantity("PPV = P(D=1 | T=1)", "flu", "conditional", "D=1", given="T=1",
             expected=Fraction(25, 31), reported="0.81"),
    Quantity("P(nap)", "cat", "marginal", "Nap=nap",
             expected=Fraction(4, 5), reported="0.80"),
    Quantity("P(nap | F=sea)", "cat", "fork", "Nap=nap", hidden="F", branch="sea",
             expected=Fraction(41, 50), reported="0.82"),
    Quantity("P(nap | F=chk)", "cat", "fork", "Nap=nap", hidden="F", branch="chk",
             expected=Fraction(37, 50), reported="0.74"),
    Quantity("P(F=sea | nap)", "cat", "conditional", "F=sea", given="Nap=nap",
             expected=Fraction(123, 160), reported="0.77"),
    Quantity("P(S=filled | W=hollow)", "truffle", "conditional", "S=filled", given="W=hollow",
             expected=Fraction(5, 16)),
    Quantity("P(S=hollow | W=hollow)", "truffle", "conditional", "S=hollow", given="W=hollow",
             expected=Fraction(11, 16)),
    Quantity("P(next filled | W=hollow)", "truffle", "conditional", "Next=filled", given="W=hollow",
             expected=Fraction(149, 160), reported="0.93125"),
    Quantity("P(next filled)", "truffle", "marginal", "Next=filled",
             expected=Fraction(1809, 2000), reported="0.9045"),
    Quantity("P(next filled | S=filled)", "truffle", "fork", "Next=filled", hidden="S", branch="filled",
             expected=Fraction(181, 200), reported="0.905"),
    Quantity("P(next filled | S=hollow)", "truffle", "fork", "Next=filled", hidden="S", branch="hollow",
             expected=Fraction(9, 10), reported="0.9"),
    Quantity("sum_s P(S=s) P(next filled | S=s)", "truffle", "recompose", "Next=filled", hidden="S",
             expected=Fraction(1809, 2000)),
    Quantity("sum_f P(F=f) P(nap | F=f)", "cat", "recompose", "Nap=nap", hidden="F",
             expected=Fraction(4, 5)),
)


@dataclass(frozen=True)
class Outcome:
    quantity: Quantity
    value: Fraction | None
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.value is not None and self.value == self.quantity.expected

    @property
    def rounding_note(self) -> str | None:
        """Set when the reported decimal is a rounding of the exact value."""
        rep = self.quantity.reported
        if rep is None or self.value is None:
            return None
        if Fraction(rep) == self.value:
            return None
        return f"reported {rep} is rounded"


def evaluate(q: Quantity, model: ep.DiscreteModel) -> Fraction:
    if q.kind == "marginal":
        return ep.marginal_forward(model, q.target)
    if q.kind == "conditional":
        return ep.conditional_probability(model, q.target, q.given)
    if q.kind == "fork":
        branches = dict(ep.degenerate_fork(model, q.target, q.hidden))
        value = branches[q.branch]
        if value is None:
            raise ep.UndefinedConditional(f"branch {q.hidden}={q.branch} has probability 0")
        return value
    if q.kind == "recompose":
        return ep.total_probability_recompose(model, q.target, q.hidden)
    raise ValueError(f"unknown quantity kind {q.kind!r}")


def run_all(fixture_dir=None) -> list[Outcome]:
    """Evaluate every reference quantity.

    Raises :class:`~covlab.exactprob.ModelError` if a fixture cannot be loaded.
    """
    models = {name: ep.load_fixture(name, fixture_dir) for name in ep.FIXTURES}
    outcomes = []
    for q in QUANTITIES:
        try:
            outcomes.append(Outcome(q, evaluate(q, models[q.model])))
        except (ep.QueryError, ep.UndefinedConditional) as exc:
            outcomes.append(Outcome(q, None, str(exc)))
    return outcomes
