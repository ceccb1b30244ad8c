from typing import Optional, Callable, Iterable, Iterator, MutableMapping
from collections import deque
import os
import itertools


class CutFeecException(Exception):
    exit_code = 1


class ConfigError(CutFeecException):
    exit_code = 2


class SolverError(CutFeecException):
    exit_code = 3


class GeometryError(CutFeecException):
    exit_code = 4


def multi_indices(n: int, k: int) -> list[tuple[int, ...]]:
    """Strictly increasing k-tuples of 1..n in lexicographic order."""
    return list(itertools.combinations(range(1, n + 1), k))


def permutation_sign(seq: Iterable[int]) -> int:
    """Sign of the permutation sorting `seq`; 0 if an entry repeats."""
    items = list(seq)
    if len(set(items)) != len(items):
        return 0

    sign = 1
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            if items[i] > items[j]:
                sign = -sign
    return sign


def bfs_paths(
    starts: Iterable[int],
    neighbours: Callable[[int], Iterable[tuple[int, int]]],
    is_target: Callable[[int], bool],
    max_len: int,
) -> Iterator[tuple[int, Optional[list[int]], Optional[list[int]]]]:
    """
    Breadth-first search from each start node to the closest target node.

    `neighbours(node)` yields `(edge, node)` pairs. Yields `(start, nodes, edges)`
    where `nodes` includes both ends, or `(start, None, None)` when no target is
    reachable with at most `max_len` nodes on the path.
    """
    for start in starts:
        parent: dict[int, tuple[int, int]] = {}
        seen = {start}
        queue = deque([(start, 1)])
        found = None

        while queue:
            node, length = queue.popleft()
            if node != start and is_target(node):
                found = node
                break
            if length >= max_len:
                continue
            for edge, nb in neighbours(node):
                if nb not in seen:
                    seen.add(nb)
                    parent[nb] = (node, edge)
                    queue.append((nb, length + 1))

        if found is None:
            yield start, None, None
            continue

        nodes = [found]
        edges = []
        while nodes[-1] != start:
            prev, edge = parent[nodes[-1]]
            edges.append(edge)
            nodes.append(prev)
        nodes.reverse()
        edges.reverse()
        yield start, nodes, edges


THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def cap_threads(environ: Optional[MutableMapping[str, str]] = None, strict: bool = False):
    """Propagate CUTFEEC_NUM_THREADS to the BLAS thread variables; call before numpy is imported."""
    env = os.environ if environ is None else environ
    n = env.get("CUTFEEC_NUM_THREADS")
    if n is None:
        return
    if not n.isdigit() or int(n) < 1:
        if not strict:
            return
        raise ConfigError(f"CUTFEEC_NUM_THREADS must be a positive integer, got {n!r}")
    for var in THREAD_VARS:
        env[var] = n
