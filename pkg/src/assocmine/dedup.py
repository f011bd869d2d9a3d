"""Near-duplicate collapsing via agglomerative clustering.

Articles are embedded, cosine distances computed, and average-linkage
clustering applied. The cut threshold is tuned by sweeping a grid and
scoring each candidate partition with the silhouette coefficient; one
representative per cluster survives.

The merge sequence is computed once per batch; average linkage is
monotone (merge heights never decrease), so each grid threshold is
evaluated by replaying a prefix of the same sequence.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date

import numpy as np

from .corpus import Article
from .embed import EmbeddingProvider

logger = logging.getLogger(__name__)

DEFAULT_GRID_START = 0.05
DEFAULT_GRID_END = 0.95
DEFAULT_GRID_STEP = 0.05
DEFAULT_MAX_BATCH = 2000


def default_grid(start: float = DEFAULT_GRID_START, end: float = DEFAULT_GRID_END,
                 step: float = DEFAULT_GRID_STEP) -> list[float]:
    if step <= 0:
        raise ValueError("grid step must be positive")
    if end < start:
        raise ValueError("grid end must be >= start")
    values = []
    i = 0
    while True:
        value = round(start + i * step, 10)
        if value > end + 1e-12:
            break
        values.append(value)
        i += 1
    return values


def distance_matrix(vectors: np.ndarray) -> np.ndarray:
    """Pairwise cosine distances (1 - cosine), exactly symmetric, zero diagonal.

    Rows that are bitwise-identical get distance exactly 0.0 so duplicate
    texts cluster at any threshold.
    """
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("expected a 2-d array of row vectors")
    norms = np.linalg.norm(arr, axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    unit = arr / safe[:, None]
    sims = unit @ unit.T
    np.clip(sims, -1.0, 1.0, out=sims)
    dist = 1.0 - sims
    np.maximum(dist, 0.0, out=dist)
    # mirror the upper triangle so the matrix is symmetric to the last bit
    upper = np.triu(dist, 1)
    dist = upper + upper.T
    # identical rows are exact duplicates regardless of rounding
    groups: dict[bytes, list[int]] = {}
    for i in range(arr.shape[0]):
        groups.setdefault(arr[i].tobytes(), []).append(i)
    for members in groups.values():
        if len(members) > 1:
            idx = np.asarray(members)
            dist[np.ix_(idx, idx)] = 0.0
    np.fill_diagonal(dist, 0.0)
    return dist


@dataclass
class MergeStep:
    """One agglomerative merge: clusters at slots a and b joined at a height."""

    height: float
    a: int
    b: int


def merge_sequence(dist: np.ndarray) -> list[MergeStep]:
    """Full average-linkage merge sequence (n - 1 steps).

    Cluster ids are "slots": a cluster lives at the index of its smallest
    member. Ties on merge distance are broken by smallest (a, b); scanning
    the symmetric working matrix in row-major order yields exactly that.
    """
    n = dist.shape[0]
    work = dist.astype(np.float64, copy=True)
    np.fill_diagonal(work, np.inf)
    size = np.ones(n)
    steps: list[MergeStep] = []
    for _ in range(max(n - 1, 0)):
        flat = int(np.argmin(work))
        a, b = divmod(flat, n)
        height = float(work[a, b])
        # symmetry guarantees the first minimum is an upper-triangle entry
        assert a < b
        merged = (size[a] * work[a] + size[b] * work[b]) / (size[a] + size[b])
        work[a, :] = merged
        work[:, a] = merged
        work[b, :] = np.inf
        work[:, b] = np.inf
        work[a, a] = np.inf
        size[a] += size[b]
        steps.append(MergeStep(height, a, b))
    return steps


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    threshold: float

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def k(self) -> int:
        return len(set(self.labels.tolist()))

    def clusters(self) -> list[list[int]]:
        """Member indices per cluster, ordered by smallest member."""
        groups: dict[int, list[int]] = {}
        for i, label in enumerate(self.labels.tolist()):
            groups.setdefault(label, []).append(i)
        return [groups[label] for label in sorted(groups)]


def _replay(n: int, steps: list[MergeStep], threshold: float) -> np.ndarray:
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for step in steps:
        if step.height > threshold:
            break
        ra, rb = find(step.a), find(step.b)
        root = min(ra, rb)
        parent[ra] = root
        parent[rb] = root
    roots = [find(i) for i in range(n)]
    order = {root: idx for idx, root in enumerate(sorted(set(roots)))}
    return np.asarray([order[r] for r in roots], dtype=np.int64)


def agglomerate(dist: np.ndarray, threshold: float,
                steps: list[MergeStep] | None = None) -> ClusterAssignment:
    """Average-linkage clusters cut at a threshold.

    Merging continues while the minimal inter-cluster distance is <= the
    threshold; labels are dense and ordered by smallest member index.
    """
    n = dist.shape[0]
    if n < 1:
        raise ValueError("distance matrix is empty")
    if steps is None:
        steps = merge_sequence(dist)
    return ClusterAssignment(labels=_replay(n, steps, threshold), threshold=threshold)


def silhouette(dist: np.ndarray, assignment: ClusterAssignment) -> float | None:
    """Mean silhouette coefficient; None when every partition is degenerate.

    Per point: a = mean intra-cluster distance, b = smallest mean distance
    to another cluster, s = (b - a) / max(a, b). Points in singleton
    clusters contribute 0. A single cluster or all-singletons partition has
    no defined score and returns None.
    """
    n = dist.shape[0]
    if n < 2:
        raise ValueError("silhouette needs at least 2 points")
    labels = assignment.labels
    unique = sorted(set(labels.tolist()))
    k = len(unique)
    if k == 1 or k == n:
        return None
    members = {label: np.flatnonzero(labels == label) for label in unique}
    total = 0.0
    for i in range(n):
        own = members[labels[i]]
        if len(own) == 1:
            continue
        a = float(dist[i, own].sum()) / (len(own) - 1)
        b = min(float(dist[i, members[label]].mean())
                for label in unique if label != labels[i])
        denom = max(a, b)
        total += 0.0 if denom == 0.0 else (b - a) / denom
    return total / n


@dataclass
class TuneResult:
    threshold: float
    silhouette: float | None
    assignment: ClusterAssignment
    evaluations: list[tuple[float, float | None]] = field(default_factory=list)


def tune_threshold(dist: np.ndarray, grid: list[float] | None = None) -> TuneResult:
    """Pick the grid threshold with the best silhouette.

    Degenerate partitions (one cluster, or one point per cluster) are
    skipped; ties go to the smaller threshold. If every grid value is
    degenerate the smallest one is returned with a warning.
    """
    if grid is None:
        grid = default_grid()
    if not grid:
        raise ValueError("threshold grid is empty")
    if list(grid) != sorted(grid):
        raise ValueError("threshold grid must be sorted ascending")
    n = dist.shape[0]
    steps = merge_sequence(dist)
    evaluations: list[tuple[float, float | None]] = []
    best: TuneResult | None = None
    for threshold in grid:
        assignment = ClusterAssignment(labels=_replay(n, steps, threshold),
                                       threshold=threshold)
        score = silhouette(dist, assignment) if n >= 2 else None
        evaluations.append((threshold, score))
        if score is not None and (best is None or best.silhouette is None
                                  or score > best.silhouette):
            best = TuneResult(threshold, score, assignment)
    if best is None:
        logger.warning("all %d grid thresholds degenerate; falling back to %s",
                       len(grid), grid[0])
        assignment = ClusterAssignment(labels=_replay(n, steps, grid[0]),
                                       threshold=grid[0])
        best = TuneResult(grid[0], None, assignment)
    best.evaluations = evaluations
    return best


@dataclass
class DedupCluster:
    representative: str
    members: list[str]


@dataclass
class BatchStats:
    index: int
    size: int
    threshold: float
    silhouette: float | None


@dataclass
class DedupReport:
    clusters: list[DedupCluster]
    threshold: float | None
    silhouette: float | None
    batches: list[BatchStats] = field(default_factory=list)

    @property
    def representatives(self) -> list[str]:
        return [c.representative for c in self.clusters]

    def to_json_obj(self) -> dict:
        return {
            "threshold": self.threshold,
            "silhouette": self.silhouette,
            "n_input": sum(len(c.members) for c in self.clusters),
            "n_kept": len(self.clusters),
            "batches": [{"index": b.index, "size": b.size, "threshold": b.threshold,
                         "silhouette": b.silhouette} for b in self.batches],
            "clusters": [{"representative": c.representative, "members": c.members}
                         for c in self.clusters],
        }


def _representative_key(article: Article) -> tuple:
    published = article.published_at
    return (published is None, published or date.max, -len(article.body), article.id)


def select_representatives(assignment: ClusterAssignment,
                           articles: list[Article]) -> list[DedupCluster]:
    """One article per cluster: earliest date, then longest body, then id."""
    if assignment.n != len(articles):
        raise ValueError("assignment does not align with article list")
    clusters = []
    for member_idx in assignment.clusters():
        members = [articles[i] for i in member_idx]
        representative = min(members, key=_representative_key)
        clusters.append(DedupCluster(representative=representative.id,
                                     members=sorted(a.id for a in members)))
    return clusters


def _batch_key(article: Article) -> tuple:
    published = article.published_at
    return (published is None, published or date.max, article.id)


def dedup_articles(articles: list[Article], provider: EmbeddingProvider,
                   grid: list[float] | None = None,
                   max_batch: int = DEFAULT_MAX_BATCH) -> DedupReport:
    """Cluster a corpus and keep one representative per cluster.

    Corpora larger than max_batch are split into date-ordered batches that
    are deduplicated independently (duplicates are temporally local); no
    cross-batch merging is attempted.
    """
    if max_batch < 2:
        raise ValueError("max_batch must be >= 2")
    if not articles:
        return DedupReport(clusters=[], threshold=None, silhouette=None)
    if len(articles) <= max_batch:
        batches = [list(articles)]
    else:
        ordered = sorted(articles, key=_batch_key)
        batches = [ordered[i:i + max_batch] for i in range(0, len(ordered), max_batch)]

    all_clusters: list[DedupCluster] = []
    stats: list[BatchStats] = []
    for index, batch in enumerate(batches):
        vectors = np.stack(provider.embed_texts(
            [a.title + " " + a.body for a in batch]))
        if len(batch) == 1:
            assignment = ClusterAssignment(labels=np.zeros(1, dtype=np.int64),
                                           threshold=0.0)
            tuned = TuneResult(0.0, None, assignment)
        else:
            tuned = tune_threshold(distance_matrix(vectors), grid)
        clusters = select_representatives(tuned.assignment, batch)
        all_clusters.extend(clusters)
        stats.append(BatchStats(index=index, size=len(batch),
                                threshold=tuned.threshold,
                                silhouette=tuned.silhouette))
        logger.info("dedup batch %d: %d articles -> %d clusters (threshold=%s)",
                    index, len(batch), len(clusters), tuned.threshold)

    single = len(stats) == 1
    return DedupReport(
        clusters=all_clusters,
        threshold=stats[0].threshold if single else None,
        silhouette=stats[0].silhouette if single else None,
        batches=stats,
    )
