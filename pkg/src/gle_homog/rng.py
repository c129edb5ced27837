"""Reproducible random streams for ensemble members.

Every member draws from its own generator seeded by (seed, member), so
results do not depend on how members are scheduled across threads.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class MemberStreams:
    # Brownian increments of the pre-limit and limit dynamics
    increments: np.random.Generator
    # initial data (noise state, bath oscillators)
    initial: np.random.Generator


def member_streams(seed: int, member: int) -> MemberStreams:
    """Create the independent streams of one ensemble member."""
    root = np.random.SeedSequence([int(seed), int(member)])
    ss_increments, ss_initial = root.spawn(2)
    return MemberStreams(
        increments=np.random.default_rng(ss_increments),
        initial=np.random.default_rng(ss_initial),
    )


def chunk_ranges(n_members: int, n_chunks: int) -> list:
    """Split member indices 0..n_members-1 into at most n_chunks contiguous ranges."""
    n_chunks = max(1, min(int(n_chunks), int(n_members)))
    edges = np.linspace(0, n_members, n_chunks + 1).astype(int)
    return [range(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def map_chunks(func: Callable[[range], np.ndarray], n_members: int, threads: int = 1) -> np.ndarray:
    """Run ``func`` on contiguous member ranges in a thread pool and stack the results in member order."""
    chunks = chunk_ranges(n_members, threads)
    if len(chunks) == 1:
        return func(chunks[0])
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(func, chunks))
    return np.concatenate(parts, axis=0)
