"""Reference computations kept independent of the code under test."""

import itertools
import random
from fractions import Fraction

import numpy as np


def random_dag_spec(rng: random.Random, max_vars=5, max_states=3):
    """Random small DAG as plain tuples: (variables, cpts).

    Rows are random compositions with small denominators, zeros included.
    """
    n_vars = rng.randint(1, max_vars)
    variables = []
    for i in range(n_vars):
        name = f"V{i}"
        states = tuple(f"s{k}" for k in range(rng.randint(1, max_states)))
        earlier = [v[0] for v in variables]
        parents = tuple(rng.sample(earlier, rng.randint(0, min(2, len(earlier)))))
        variables.append((name, states, parents))
    states_of = {v[0]: v[1] for v in variables}
    cpts = {}
    for name, states, parents in variables:
        table = {}
        for key in itertools.product(*(states_of[p] for p in parents)):
            denom = rng.choice([2, 3, 4, 5, 10])
            cuts = sorted(rng.randint(0, denom) for _ in range(len(states) - 1))
            parts = [b - a for a, b in zip([0] + cuts, cuts + [denom])]
            table[key] = tuple(Fraction(p, denom) for p in parts)
        cpts[name] = table
    return variables, cpts


def enumerate_joint(variables, cpts):
    """Brute-force joint distribution {assignment dict items: mass}."""
    out = []
    names = [v[0] for v in variables]
    for combo in itertools.product(*(v[1] for v in variables)):
        assign = dict(zip(names, combo))
        mass = Fraction(1)
        for name, states, parents in variables:
            row = cpts[name][tuple(assign[p] for p in parents)]
            mass *= row[states.index(assign[name])]
        out.append((assign, mass))
    return out


def event_mass(joint, atoms):
    return sum((m for a, m in joint if all(a[k] == v for k, v in atoms)), Fraction(0))


def uniform_pair_window_coverage(c, r0, half=0.005, n_pairs=4_000_000, seed=12345):
    """Monte Carlo coverage of midpoint +/- c among pairs whose range is within r0 +/- half.

    Uses numpy's PCG64 stream, not the package's own generator.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(-0.5, 0.5, size=(n_pairs, 2))
    r = np.abs(x[:, 0] - x[:, 1])
    sel = np.abs(r - r0) <= half
    mid = x[sel].mean(axis=1)
    covered = np.abs(mid) <= c
    return float(covered.mean()), int(sel.sum())
