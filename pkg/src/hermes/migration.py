"""Thread-to-domain placement that keeps heavy communicators together.

Threads and domains are numbered from 0. Costs are integer cache-line counts.
"""
import csv
import heapq
import io
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, SizeLimitError

EXACT_LIMIT = 12


def as_matrix(comm):
    """Validate and return a square, symmetric, zero-diagonal int64 matrix."""
    c = np.asarray(comm)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise DomainError(f"communication matrix must be square, got shape {c.shape}")
    if c.size and not np.issubdtype(c.dtype, np.integer):
        if not np.all(np.equal(np.mod(c, 1), 0)):
            raise DomainError("communication costs must be integers")
        c = c.astype(np.int64)
    c = c.astype(np.int64, copy=False)
    if np.any(c < 0):
        raise DomainError("communication costs must be >= 0")
    if not np.array_equal(c, c.T):
        raise DomainError("communication matrix must be symmetric")
    if np.any(np.diag(c) != 0):
        raise DomainError("communication matrix must have a zero diagonal")
    return c


def _check_split(n, m):
    if m < 1 or n < 1 or n % m:
        raise DomainError(f"domain count {m} must divide thread count {n}")
    return n // m


@dataclass(frozen=True)
class ClusterAssignment:
    n_domains: int
    assignment: tuple     # assignment[thread] = domain

    @property
    def n_threads(self):
        return len(self.assignment)

    @property
    def capacity(self):
        return self.n_threads // self.n_domains

    def members(self, domain):
        return tuple(t for t, d in enumerate(self.assignment) if d == domain)

    def domains(self):
        return [self.members(d) for d in range(self.n_domains)]

    def validate(self):
        """Balance and uniqueness; raises DomainError on violation."""
        cap = _check_split(self.n_threads, self.n_domains)
        if any(not 0 <= d < self.n_domains for d in self.assignment):
            raise DomainError("thread mapped outside 0..M-1")
        counts = np.bincount(np.asarray(self.assignment, dtype=int), minlength=self.n_domains)
        if np.any(counts != cap):
            raise DomainError(f"unbalanced domains: {counts.tolist()} (capacity {cap})")
        return self


def canonical(assignment):
    """Relabel domains in order of first appearance, so equal partitions compare equal."""
    labels = {}
    return tuple(labels.setdefault(d, len(labels)) for d in assignment)


def objective(assignment, comm):
    """(intra_cost, cut_cost) of an assignment; their sum is the total pair cost."""
    c = as_matrix(comm)
    a = np.asarray(assignment.assignment if isinstance(assignment, ClusterAssignment) else assignment)
    if a.shape != (c.shape[0],):
        raise DomainError(f"assignment covers {a.size} threads, matrix has {c.shape[0]}")
    same = a[:, None] == a[None, :]
    total = int(np.triu(c, 1).sum())
    intra = int(np.triu(c * same, 1).sum())
    return intra, total - intra


def literal_objective(assignment, comm):
    """Co-location cost to be minimized as printed; equals intra_cost."""
    return objective(assignment, comm)[0]


def balanced_partitions(n, m):
    """All balanced assignments in canonical form, lexicographically increasing."""
    cap = _check_split(n, m)
    counts = [0] * m
    a = [0] * n

    def rec(i, used):
        if i == n:
            yield tuple(a)
            return
        for d in range(min(used + 1, m)):
            if counts[d] < cap:
                counts[d] += 1
                a[i] = d
                yield from rec(i + 1, max(used, d + 1))
                counts[d] -= 1

    yield from rec(0, 0)


def solve_exact(comm, m, minimize_intra=False):
    """Exhaustive search over balanced partitions (N <= 12).

    Maximizes intra-domain cost unless ``minimize_intra`` selects the literal
    co-location-minimizing objective. Ties keep the lexicographically smallest
    canonical assignment.
    """
    c = as_matrix(comm)
    n = c.shape[0]
    if n > EXACT_LIMIT:
        raise SizeLimitError(f"exact solver is limited to N <= {EXACT_LIMIT}, got {n}")
    _check_split(n, m)
    upper = np.triu(c, 1)
    best, best_val = None, None
    for a in balanced_partitions(n, m):
        arr = np.asarray(a)
        val = int(upper[arr[:, None] == arr[None, :]].sum())
        if minimize_intra:
            val = -val
        if best_val is None or val > best_val:
            best, best_val = a, val
    return ClusterAssignment(m, best)


class CostHeap:
    """Max-heap of inter-cluster costs with lazy invalidation.

    Ties pop the lexicographically smallest (cluster, cluster) pair.
    """

    def __init__(self):
        self._heap = []
        self._key = {}

    def push(self, i, j, cost):
        pair = (min(i, j), max(i, j))
        self._key[pair] = cost
        heapq.heappush(self._heap, (-cost, pair))

    def discard_cluster(self, k):
        for pair in [p for p in self._key if k in p]:
            del self._key[pair]

    def pop(self):
        while self._heap:
            neg, pair = heapq.heappop(self._heap)
            if self._key.get(pair) == -neg:
                del self._key[pair]
                return pair, -neg
        return None

    def keys(self):
        return dict(self._key)

    def __len__(self):
        return len(self._key)


def _pack(clusters, m, cap):
    """First-fit-decreasing into m bins of capacity cap; None when it does not fit."""
    bins = [[] for _ in range(m)]
    fill = [0] * m
    for members in sorted(clusters, key=lambda c: (-len(c), min(c))):
        for b in range(m):
            if fill[b] + len(members) <= cap:
                bins[b].extend(members)
                fill[b] += len(members)
                break
        else:
            return None
    return bins


def _pack_split(clusters, m, cap):
    # FFD failed: place whole clusters while they fit, then spill the rest thread by thread
    bins = [[] for _ in range(m)]
    spill = []
    for members in sorted(clusters, key=lambda c: (-len(c), min(c))):
        for b in range(m):
            if len(bins[b]) + len(members) <= cap:
                bins[b].extend(members)
                break
        else:
            spill.extend(sorted(members))
    for t in spill:
        b = next(b for b in range(m) if len(bins[b]) < cap)
        bins[b].append(t)
    return bins


def greedy_migration(comm, m, on_merge=None):
    """Agglomerative clustering of threads under an N/M cluster-size cap.

    Pops the heaviest-communicating cluster pair, merges it when the result
    fits a domain, and gives the merged cluster the summed pair costs. Leftover
    clusters are packed into M domains first-fit-decreasing. ``on_merge(heap,
    clusters)`` runs after every merge.
    """
    c = as_matrix(comm)
    n = c.shape[0]
    cap = _check_split(n, m)
    clusters = {i: (i,) for i in range(n)}
    cost = {}
    heap = CostHeap()
    for i, j in itertools.combinations(range(n), 2):
        cost[(i, j)] = int(c[i, j])
        heap.push(i, j, int(c[i, j]))
    next_id = n
    while True:
        item = heap.pop()
        if item is None:
            break
        (i, j), _ = item
        if len(clusters[i]) + len(clusters[j]) > cap:
            continue
        k = next_id
        next_id += 1
        clusters[k] = tuple(sorted(clusters.pop(i) + clusters.pop(j)))
        heap.discard_cluster(i)
        heap.discard_cluster(j)
        for other in sorted(clusters):
            if other == k:
                continue
            new = cost[_pair(other, i)] + cost[_pair(other, j)]
            cost[(other, k)] = new
            heap.push(other, k, new)
        if on_merge is not None:
            on_merge(heap, dict(clusters))
    groups = list(clusters.values())
    bins = _pack(groups, m, cap) or _pack_split(groups, m, cap)
    assignment = [0] * n
    for d, members in enumerate(bins):
        for t in members:
            assignment[t] = d
    return ClusterAssignment(m, canonical(assignment))


def _pair(a, b):
    return (a, b) if a < b else (b, a)


def inter_cluster_cost(comm, a, b):
    c = as_matrix(comm)
    return int(c[np.ix_(list(a), list(b))].sum())


def assign_pages(assignment, page_access):
    """Map each page to the domain whose threads access it most (ties: lowest id)."""
    if isinstance(assignment, ClusterAssignment):
        m, a = assignment.n_domains, np.asarray(assignment.assignment)
    else:
        a = np.asarray(assignment)
        m = int(a.max()) + 1 if a.size else 0
    counts = np.asarray(page_access)
    if counts.ndim != 2 or counts.shape[1] != a.size:
        raise DomainError(f"page access matrix must be pages x {a.size} threads")
    if np.any(counts < 0):
        raise DomainError("page access counts must be >= 0")
    onehot = np.zeros((a.size, m), dtype=counts.dtype)
    onehot[np.arange(a.size), a] = 1
    per_domain = counts @ onehot
    return tuple(int(d) for d in np.argmax(per_domain, axis=1))


class CommCounter:
    """Pairwise exchange counter; ``epoch_update`` snapshots and resets it."""

    def __init__(self, n_threads):
        self.n = n_threads
        self._counts = np.zeros((n_threads, n_threads), dtype=np.int64)

    def record(self, i, j, count=1):
        if i == j:
            return
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise DomainError(f"thread pair ({i}, {j}) outside 0..{self.n - 1}")
        self._counts[i, j] += count
        self._counts[j, i] += count

    def epoch_update(self):
        snapshot = self._counts.copy()
        self._counts[:] = 0
        return snapshot


def epoch_update(trace, n_threads):
    """Cost matrix from an iterable of (i, j) or (i, j, count) exchanges."""
    counter = CommCounter(n_threads)
    for item in trace:
        counter.record(*item)
    return counter.epoch_update()


def read_matrix_csv(text):
    """Parse a first row holding N, then row i holding c[i][i+1..N-1]."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(f.strip() for f in r)]
    if not rows:
        raise ConfigError("matrix: empty file")
    try:
        n = int(rows[0][0])
        c = np.zeros((n, n), dtype=np.int64)
        body = rows[1:]
        if len(body) not in (n - 1, n):
            raise ConfigError(f"matrix: expected {n - 1} triangle rows, got {len(body)}")
        for i, row in enumerate(body[:n - 1]):
            vals = [int(v) for v in row if v.strip() != ""]
            if len(vals) != n - 1 - i:
                raise ConfigError(f"matrix: row {i + 1} needs {n - 1 - i} entries, got {len(vals)}")
            c[i, i + 1:] = vals
    except ValueError as exc:
        raise ConfigError(f"matrix: {exc}") from None
    c = c + c.T
    try:
        return as_matrix(c)
    except DomainError as exc:
        raise ConfigError(f"matrix: {exc}") from None


def write_matrix_csv(comm):
    c = as_matrix(comm)
    n = c.shape[0]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([n])
    for i in range(n - 1):
        w.writerow(c[i, i + 1:].tolist())
    return buf.getvalue()


def write_assignment_csv(assignment):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["thread", "domain"])
    for t, d in enumerate(assignment.assignment):
        w.writerow([t, d])
    return buf.getvalue()
