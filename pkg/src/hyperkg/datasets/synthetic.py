"""Rule-generated hypergraphs for desk-scale experiments."""
from __future__ import annotations

import numpy as np

Fact = tuple[str, tuple[str, ...]]

# (relation, roles): each template group instantiates every pattern once over
# its four entities a, b, c, d. ``next`` orders the group as a chain, so a
# query like next(b, ?) has the predecessor a as a same-group distractor.
TEMPLATE = (
    ("holds4", "abcd"),
    ("joins3", "abc"),
    ("links3", "dca"),
    ("next", "ab"),
    ("next", "bc"),
    ("next", "cd"),
)
TEMPLATE_ARITY = {r: len(roles) for r, roles in TEMPLATE}


def compositional_corpus(groups: int = 50, seed: int = 0) -> list[Fact]:
    """``groups * 6`` facts of arities 2-4. Within a group, every fact is
    implied by the arity-4 fact through fixed position correspondences, so a
    held-out fact is recoverable from the remaining ones only by reading
    positions correctly."""
    rng = np.random.default_rng(seed)
    facts = []
    for g in range(groups):
        names = {role: f"n{g}{role}" for role in "abcd"}
        facts.extend((rel, tuple(names[x] for x in roles)) for rel, roles in TEMPLATE)
    order = rng.permutation(len(facts))
    return [facts[i] for i in order]


def holdout(facts: list[Fact], fraction: float, seed: int = 0) -> tuple[list[Fact], list[Fact]]:
    """``(kept, held_out)`` with ``round(fraction * len(facts))`` facts held out."""
    rng = np.random.default_rng(seed)
    n = int(round(fraction * len(facts)))
    perm = rng.permutation(len(facts))
    out = set(perm[:n].tolist())
    return [f for i, f in enumerate(facts) if i not in out], [facts[i] for i in sorted(out)]


def local_corpus(
    n_facts: int = 2000,
    n_entities: int = 800,
    window: int = 8,
    n_relations: int = 12,
    arities=(2, 3, 4),
    seed: int = 0,
) -> list[Fact]:
    """Random facts over entities placed on a ring: every fact joins an anchor
    with distinct entities at most ``window`` steps ahead, in shuffled order.
    Neighbourhoods stay local, so sampling entities plus their neighbours
    carves out regions instead of swallowing the graph through hubs."""
    if window + 1 < max(arities):
        raise ValueError("window too small for the largest arity")
    rng = np.random.default_rng(seed)
    rel_arity = {f"rel{r}": int(arities[r % len(arities)]) for r in range(n_relations)}
    rels = list(rel_arity)
    seen = set()
    facts = []
    while len(facts) < n_facts:
        r = rels[int(rng.integers(len(rels)))]
        anchor = int(rng.integers(n_entities))
        offsets = rng.choice(np.arange(1, window + 1), size=rel_arity[r] - 1, replace=False)
        ents = [anchor] + [(anchor + int(o)) % n_entities for o in offsets]
        rng.shuffle(ents)
        fact = (r, tuple(f"ent{v}" for v in ents))
        if fact not in seen:
            seen.add(fact)
            facts.append(fact)
    return facts
