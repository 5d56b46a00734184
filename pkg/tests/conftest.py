import numpy as np
import pytest

from futureqa.tkg import TemporalKG, Vocab


def make_vocab(n_entities, n_relations, n_timestamps):
    return Vocab(
        entity_names=[f"e{i}" for i in range(n_entities)],
        relation_names=[f"r{i}" for i in range(n_relations)],
        timestamp_labels=[f"2021-01-{i + 1:02d}" for i in range(n_timestamps)],
    )


def make_kg(quads, n_entities=None, n_relations=None, n_timestamps=None):
    quads = np.asarray(quads, dtype=np.int64).reshape(-1, 4)
    n_entities = n_entities or (int(quads[:, [0, 2]].max()) + 1 if quads.size else 1)
    n_relations = n_relations or (int(quads[:, 1].max()) + 1 if quads.size else 1)
    n_timestamps = n_timestamps or (int(quads[:, 3].max()) + 1 if quads.size else 1)
    return TemporalKG(make_vocab(n_entities, n_relations, n_timestamps), quads)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
