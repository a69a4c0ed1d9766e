"""Shared fixtures-by-function for the test suite."""
import numpy as np

from hyperkg.core import from_name_facts, parse_facts

# one "criterion N: PASS|FAIL ..." line per acceptance check, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []

FIG1_TEXT = (
    "Research\tBengio\tClimateAI\tMontreal\tCIFAR\n"
    "AtConference\tSasha\tMontreal\t2015\tEthicalAI\tNeurIPS\n"
    "Teaches\tBengio\tIan\tEthicalAI\n"
)


def fig1():
    return parse_facts(FIG1_TEXT)


def random_facts(rng, n_entities=12, n_relations=4, n_facts=20, max_arity=4, min_arity=1):
    arity = {f"r{i}": int(rng.integers(min_arity, max_arity + 1)) for i in range(n_relations)}
    facts = []
    for _ in range(n_facts):
        r = f"r{int(rng.integers(n_relations))}"
        ents = tuple(f"v{int(x)}" for x in rng.integers(n_entities, size=arity[r]))
        facts.append((r, ents))
    return facts


def random_graph(rng, **kw):
    return from_name_facts(random_facts(rng, **kw))


def numeric_grad(f, arr, h=1e-6):
    """Central differences of scalar ``f()`` with respect to every entry of ``arr`` (in place)."""
    g = np.zeros_like(arr, dtype=np.float64)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + h
        up = f()
        arr[i] = old - h
        down = f()
        arr[i] = old
        g[i] = (up - down) / (2 * h)
    return g
