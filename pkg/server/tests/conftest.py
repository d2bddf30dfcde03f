import random

import pytest

from paraserver import ParaphraseModel, ServerConfig, Vocab

WORDS = ["what", "is", "state", "that", "city0", "state0", "located",
         "in", "find", "show", "me", "the", "of"]


def toy_records(n=100, seed=13):
    """Mixed CU / SelfPara records over a small closed vocabulary."""
    rng = random.Random(seed)
    records = []
    for i in range(n):
        cu = [rng.choice(WORDS) for _ in range(rng.randrange(2, 6))]
        if i % 2 == 0:
            records.append({"cu": cu, "lf": ["lf"], "paraphrase": None,
                            "origin": "CU"})
        else:
            para = [rng.choice(WORDS) for _ in range(rng.randrange(2, 6))]
            records.append({"cu": cu, "lf": ["lf"], "paraphrase": para,
                            "origin": "SelfPara"})
    return records


@pytest.fixture()
def model():
    return ParaphraseModel(Vocab(WORDS), ServerConfig(seed=7))
