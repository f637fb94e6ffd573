"""Named RNG sub-streams derived from a master seed.

Every stream is keyed by (purpose, episode, agent) so results do not depend
on the order in which episodes or agents are scheduled.
"""
from __future__ import annotations

import numpy as np

PURPOSES = {
    "init": 1,
    "jammer": 2,
    "act": 3,
    "eval-jammer": 4,
    "eval-act": 5,
}


def stream(master_seed: int, purpose: str, episode: int = 0, agent: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(master_seed),
                                spawn_key=(PURPOSES[purpose], int(episode), int(agent)))
    return np.random.Generator(np.random.PCG64(ss))
