"""SIR epidemic simulation on adjacency networks and email-log ingestion.

The simulation is a discrete-time susceptible-infected-recovered contact
process: every infectious neighbor independently transmits per epoch, each
infected node stays infectious for a fixed number of epochs after its own
infection, then recovers and is immune. All transmission uniforms are drawn
up front per (source, target, source-age), so runs with the same seed but
different probabilities are coupled: raising the probability can never
shrink the ever-infected set.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ConfigurationError, ShapeError
from .tensor import Tensor

TRANSMISSION_MODES = ("per-neighbor", "per-node")


@dataclass
class Graph:
    """Undirected simple graph as a 0/1 adjacency matrix."""

    adjacency: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.adjacency)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ShapeError(f"adjacency must be square, got {a.shape}")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diagonal(a) != 0):
            raise ValueError("self-loops are not allowed")
        if not np.isin(a, (0, 1)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        self.adjacency = a.astype(np.uint8)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    def to_tensor(self) -> Tensor:
        return Tensor(self.adjacency.astype(np.float64))


@dataclass(frozen=True)
class SirConfig:
    """Simulation parameters.

    ``epochs`` is how long each infected node stays infectious;
    ``transmission`` selects between one independent chance per infectious
    neighbor per epoch (default) and a single per-node chance per epoch.
    """

    initial_infected: int = 10
    infection_prob: float = 0.01
    epochs: int = 10
    trials_per_graph: int = 10
    seed: int = 0
    transmission: str = "per-neighbor"

    def __post_init__(self):
        if self.initial_infected < 1 or self.epochs < 1 or self.trials_per_graph < 1:
            raise ConfigurationError("counts must be >= 1")
        if not 0.0 <= self.infection_prob <= 1.0:
            raise ConfigurationError("infection_prob must lie in [0, 1]")
        if self.transmission not in TRANSMISSION_MODES:
            raise ConfigurationError(f"unknown transmission {self.transmission!r}")


@dataclass
class EmailLog:
    """Timestamped (sender, recipient) records."""

    records: list

    def __post_init__(self):
        recs = []
        for ts, sender, recipient in self.records:
            if not sender or not recipient:
                raise ValueError("sender and recipient ids must be nonempty")
            recs.append((int(ts), str(sender), str(recipient)))
        self.records = recs

    def __len__(self) -> int:
        return len(self.records)


def read_email_tsv(path) -> EmailLog:
    """Load a TSV of (timestamp, sender, recipient); a non-numeric first
    field on line one is treated as a header."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{i + 1}: expected 3 tab-separated fields")
            if i == 0 and not parts[0].strip().lstrip("-").isdigit():
                continue
            records.append((int(parts[0]), parts[1], parts[2]))
    return EmailLog(records)


def sir_simulate(graph: Graph, cfg: SirConfig, rng=None) -> int:
    """Total ever-infected count of one simulated outbreak.

    Initial nodes are drawn uniformly without replacement; the process runs
    until no infectious node remains.
    """
    v = graph.n_nodes
    if cfg.initial_infected > v:
        raise ConfigurationError(
            f"initial_infected {cfg.initial_infected} exceeds {v} nodes"
        )
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    initial = rng.choice(v, size=cfg.initial_infected, replace=False)
    adj = graph.adjacency.astype(bool)
    p = cfg.infection_prob
    per_neighbor = cfg.transmission == "per-neighbor"
    if per_neighbor:
        # one uniform per (source, target, source-age); drawn independently
        # of p so equal seeds couple runs across probabilities
        draws = rng.random((v, v, cfg.epochs))

    infected_at = np.full(v, -1, dtype=np.int64)
    infected_at[initial] = 0
    susceptible = np.ones(v, dtype=bool)
    susceptible[initial] = False
    t = 0
    while True:
        ages = t - infected_at
        infectious = (infected_at >= 0) & (ages >= 0) & (ages < cfg.epochs)
        if not infectious.any():
            break
        if per_neighbor:
            new = np.zeros(v, dtype=bool)
            for u in np.flatnonzero(infectious):
                new |= adj[u] & susceptible & (draws[u, :, t - infected_at[u]] < p)
        else:
            exposed = susceptible & adj[infectious].any(axis=0)
            new = exposed & (rng.random(v) < p)
        infected_at[new] = t + 1
        susceptible &= ~new
        t += 1
    return int(np.sum(infected_at >= 0))


def random_graph(n_nodes: int, edge_prob: float, rng) -> Graph:
    """Erdos-Renyi graph with independent edges."""
    upper = np.triu(rng.random((n_nodes, n_nodes)) < edge_prob, k=1)
    return Graph((upper | upper.T).astype(np.uint8))


def ingest_email_log(log: EmailLog, top_n: int = 1000,
                     chunk_size: int = 2000) -> list[Graph]:
    """Chunked contact graphs over the highest-frequency addresses.

    Frequencies count sender and recipient occurrences; ties break
    lexicographically. Records touching dropped addresses are removed, the
    rest are sorted by timestamp (stable) and partitioned into consecutive
    chunks, discarding a final partial chunk. Each chunk becomes one simple
    undirected graph over the same lexicographically ordered node set.
    """
    if top_n < 2:
        raise ConfigurationError("top_n must be >= 2")
    if chunk_size < 1:
        raise ConfigurationError("chunk_size must be >= 1")
    if not log.records:
        return []
    counts = Counter()
    for _, sender, recipient in log.records:
        counts[sender] += 1
        counts[recipient] += 1
    ranked = sorted(counts, key=lambda a: (-counts[a], a))
    if len(ranked) < top_n:
        warnings.warn(
            f"only {len(ranked)} distinct addresses for top_n={top_n}; keeping all",
            stacklevel=2,
        )
    kept = set(ranked[:top_n])
    index = {a: i for i, a in enumerate(sorted(kept))}
    filtered = [r for r in log.records if r[1] in kept and r[2] in kept]
    filtered.sort(key=lambda r: r[0])
    graphs = []
    v = len(index)
    for start in range(0, len(filtered) - chunk_size + 1, chunk_size):
        a = np.zeros((v, v), dtype=np.uint8)
        for _, sender, recipient in filtered[start : start + chunk_size]:
            i, j = index[sender], index[recipient]
            if i != j:
                a[i, j] = a[j, i] = 1
        graphs.append(Graph(a))
    return graphs


def build_epidemic_dataset(graphs, cfg: SirConfig) -> Dataset:
    """Label each graph with its mean ever-infected count over repeated
    simulations. The trial scatter estimates the label noise variance
    (variance of the mean), which rides along on the dataset."""
    graphs = list(graphs)
    if not graphs:
        raise ValueError("need at least one graph")
    children = np.random.SeedSequence(cfg.seed).spawn(len(graphs))
    y = np.empty(len(graphs))
    trial_vars = np.empty(len(graphs))
    for gi, g in enumerate(graphs):
        rng = np.random.default_rng(children[gi])
        outcomes = [sir_simulate(g, cfg, rng=rng) for _ in range(cfg.trials_per_graph)]
        y[gi] = np.mean(outcomes)
        trial_vars[gi] = np.var(outcomes, ddof=1) if len(outcomes) > 1 else 0.0
    noise_var = float(np.mean(trial_vars) / cfg.trials_per_graph)
    return Dataset(
        tensors=[g.to_tensor() for g in graphs],
        y=y,
        noise_var=max(noise_var, 1e-12),
    )
