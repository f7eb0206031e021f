"""Independent random streams derived from one run seed."""

import numpy as np

STREAMS = {"init": 0, "shuffle": 1, "score": 2, "data": 3}


def seed_sequence(seed: int, stream: str, *extra: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), STREAMS[stream], *map(int, extra)])


def rng(seed: int, stream: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(seed, stream, *extra))


def derive_seed(seed: int, stream: str, *extra: int) -> int:
    return int(seed_sequence(seed, stream, *extra).generate_state(1)[0])
