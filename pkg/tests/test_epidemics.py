import numpy as np
import pytest

from amnr.epidemics import (
    EmailLog,
    Graph,
    SirConfig,
    build_epidemic_dataset,
    ingest_email_log,
    random_graph,
    read_email_tsv,
    sir_simulate,
)
from amnr.errors import ConfigurationError, ShapeError


def ring_graph(v, extra_chords=0, seed=0):
    a = np.zeros((v, v), dtype=np.uint8)
    for i in range(v):
        a[i, (i + 1) % v] = a[(i + 1) % v, i] = 1
    rng = np.random.default_rng(seed)
    for _ in range(extra_chords):
        i, j = rng.integers(0, v, 2)
        if i != j:
            a[i, j] = a[j, i] = 1
    return Graph(a)


def star_graph(leaves):
    a = np.zeros((leaves + 1, leaves + 1), dtype=np.uint8)
    a[0, 1:] = 1
    a[1:, 0] = 1
    return Graph(a)


class TestGraph:
    def test_validation(self):
        with pytest.raises(ShapeError):
            Graph(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            Graph(np.array([[0, 1], [0, 0]]))
        with pytest.raises(ValueError):
            Graph(np.eye(2))
        with pytest.raises(ValueError):
            Graph(np.array([[0, 2], [2, 0]]))

    def test_to_tensor(self):
        g = ring_graph(4)
        t = g.to_tensor()
        assert t.dims == (4, 4)
        assert np.array_equal(t.data, g.adjacency.astype(float))

    def test_random_graph_valid(self):
        g = random_graph(20, 0.3, np.random.default_rng(0))
        assert g.n_nodes == 20  # constructor validated symmetry etc.


class TestSirConfig:
    def test_validation(self):
        with pytest.raises(ConfigurationError):
            SirConfig(infection_prob=1.5)
        with pytest.raises(ConfigurationError):
            SirConfig(initial_infected=0)
        with pytest.raises(ConfigurationError):
            SirConfig(transmission="airborne")


class TestSirSimulate:
    def test_zero_probability_keeps_initial_count(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            g = random_graph(15, 0.2, rng)
            cfg = SirConfig(initial_infected=4, infection_prob=0.0, epochs=5)
            assert sir_simulate(g, cfg, rng=rng) == 4

    def test_certain_transmission_floods_connected_graph(self):
        g = ring_graph(30, extra_chords=10)
        cfg = SirConfig(initial_infected=2, infection_prob=1.0, epochs=10)
        rng = np.random.default_rng(2)
        for _ in range(10):
            assert sir_simulate(g, cfg, rng=rng) == 30

    def test_flooding_outruns_recovery(self):
        # frontier advances one hop per epoch; each cohort stays infectious
        # long enough to pass the infection on even on a long path
        g = ring_graph(50)
        cfg = SirConfig(initial_infected=1, infection_prob=1.0, epochs=10)
        assert sir_simulate(g, cfg, rng=np.random.default_rng(3)) == 50

    def test_two_node_analytic_mean(self):
        g = Graph(np.array([[0, 1], [1, 0]], dtype=np.uint8))
        cfg = SirConfig(initial_infected=1, infection_prob=0.3, epochs=1)
        rng = np.random.default_rng(4)
        n = 2 * 10**4
        total = sum(sir_simulate(g, cfg, rng=rng) for _ in range(n))
        mean = total / n
        se = np.sqrt(0.3 * 0.7 / n)
        assert abs(mean - 1.3) < 4 * se

    def test_monotone_in_probability_under_shared_seed(self):
        rng = np.random.default_rng(5)
        for trial in range(20):
            g = random_graph(25, 0.15, rng)
            cfg = dict(initial_infected=3, epochs=4, seed=1000 + trial)
            sizes = [
                sir_simulate(g, SirConfig(infection_prob=p, **cfg))
                for p in (0.05, 0.1, 0.3, 0.7, 1.0)
            ]
            assert all(a <= b for a, b in zip(sizes, sizes[1:]))

    def test_bounds(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            g = random_graph(12, 0.3, rng)
            cfg = SirConfig(initial_infected=5, infection_prob=0.4, epochs=3)
            out = sir_simulate(g, cfg, rng=rng)
            assert 5 <= out <= 12

    def test_initial_exceeding_nodes(self):
        g = ring_graph(4)
        with pytest.raises(ConfigurationError):
            sir_simulate(g, SirConfig(initial_infected=5))

    def test_per_node_transmission_extremes(self):
        g = ring_graph(10, extra_chords=5)
        rng = np.random.default_rng(7)
        off = SirConfig(initial_infected=2, infection_prob=0.0,
                        transmission="per-node")
        assert sir_simulate(g, off, rng=rng) == 2
        on = SirConfig(initial_infected=2, infection_prob=1.0,
                       transmission="per-node")
        assert sir_simulate(g, on, rng=rng) == 10

    def test_seed_reproducibility(self):
        g = ring_graph(20, extra_chords=8)
        cfg = SirConfig(initial_infected=3, infection_prob=0.2, seed=42)
        assert sir_simulate(g, cfg) == sir_simulate(g, cfg)


SIX_RECORDS = [
    (5, "b", "a"),
    (1, "a", "b"),
    (2, "a", "c"),
    (3, "c", "b"),
    (4, "a", "a"),
    (6, "c", "a"),
]


class TestIngest:
    def test_hand_enumerated_fixture(self):
        # frequencies: a=6, b=3, c=3; top 3 kept; sorted by timestamp the
        # chunks are [(1,a,b),(2,a,c),(3,c,b)] and [(4,a,a),(5,b,a),(6,c,a)]
        graphs = ingest_email_log(EmailLog(SIX_RECORDS), top_n=3, chunk_size=3)
        assert len(graphs) == 2
        g1 = np.zeros((3, 3), dtype=np.uint8)
        g1[0, 1] = g1[1, 0] = 1  # a-b
        g1[0, 2] = g1[2, 0] = 1  # a-c
        g1[2, 1] = g1[1, 2] = 1  # c-b
        assert np.array_equal(graphs[0].adjacency, g1)
        g2 = np.zeros((3, 3), dtype=np.uint8)
        g2[0, 1] = g2[1, 0] = 1  # b-a
        g2[0, 2] = g2[2, 0] = 1  # c-a (self-mail a-a dropped)
        assert np.array_equal(graphs[1].adjacency, g2)

    def test_self_addressed_only_gives_edgeless_graphs(self):
        log = EmailLog([(i, "x", "x") for i in range(4)] +
                       [(9, "y", "y"), (10, "y", "y")])
        graphs = ingest_email_log(log, top_n=2, chunk_size=3)
        assert len(graphs) == 2
        for g in graphs:
            assert g.adjacency.sum() == 0

    def test_partial_chunk_dropped(self):
        graphs = ingest_email_log(EmailLog(SIX_RECORDS), top_n=3, chunk_size=7)
        assert graphs == []

    def test_empty_log(self):
        assert ingest_email_log(EmailLog([]), top_n=2, chunk_size=1) == []

    def test_frequency_filter_drops_rare_addresses(self):
        log = EmailLog(SIX_RECORDS + [(7, "z", "a")])
        # frequencies: a=7, b=3, c=3, z=1; top 3 = a, b, c; record 7 dropped
        graphs = ingest_email_log(log, top_n=3, chunk_size=3)
        assert len(graphs) == 2
        assert all(g.n_nodes == 3 for g in graphs)

    def test_tie_break_lexicographic_deterministic(self):
        # b and c tie at 3; with top_n=2, a (6) and then b by name
        graphs = ingest_email_log(EmailLog(SIX_RECORDS), top_n=2, chunk_size=2)
        # surviving records touch only {a, b}: (1,a,b), (5,b,a) -> one chunk
        assert len(graphs) == 1
        assert np.array_equal(graphs[0].adjacency, np.array([[0, 1], [1, 0]]))

    def test_warns_when_fewer_addresses_than_requested(self):
        with pytest.warns(UserWarning, match="distinct addresses"):
            ingest_email_log(EmailLog(SIX_RECORDS), top_n=10, chunk_size=3)

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            ingest_email_log(EmailLog([]), top_n=1, chunk_size=1)
        with pytest.raises(ConfigurationError):
            ingest_email_log(EmailLog([]), top_n=2, chunk_size=0)


class TestEmailTsv:
    def test_reads_with_header(self, tmp_path):
        path = tmp_path / "mail.tsv"
        path.write_text("timestamp\tsender\trecipient\n3\tx\ty\n1\ty\tz\n")
        log = read_email_tsv(path)
        assert log.records == [(3, "x", "y"), (1, "y", "z")]

    def test_rejects_malformed_line(self, tmp_path):
        path = tmp_path / "mail.tsv"
        path.write_text("1\tx\n")
        with pytest.raises(ValueError):
            read_email_tsv(path)


class TestEpidemicDataset:
    def test_zero_probability_labels(self):
        rng = np.random.default_rng(8)
        graphs = [random_graph(12, 0.2, rng) for _ in range(5)]
        cfg = SirConfig(initial_infected=3, infection_prob=0.0, epochs=4,
                        trials_per_graph=4, seed=0)
        ds = build_epidemic_dataset(graphs, cfg)
        assert np.all(ds.y == 3.0)
        assert ds.dims == (12, 12)

    def test_edgeless_graphs(self):
        graphs = [Graph(np.zeros((6, 6), dtype=np.uint8))] * 3
        cfg = SirConfig(initial_infected=2, infection_prob=0.9, epochs=5,
                        trials_per_graph=3, seed=1)
        ds = build_epidemic_dataset(graphs, cfg)
        assert np.all(ds.y == 2.0)

    def test_star_floods_from_any_seed_node(self):
        cfg = SirConfig(initial_infected=1, infection_prob=1.0, epochs=10,
                        trials_per_graph=5, seed=2)
        ds = build_epidemic_dataset([star_graph(9)], cfg)
        assert ds.y[0] == 10.0

    def test_noise_var_estimated(self):
        rng = np.random.default_rng(9)
        graphs = [random_graph(15, 0.25, rng) for _ in range(4)]
        cfg = SirConfig(initial_infected=2, infection_prob=0.3, epochs=5,
                        trials_per_graph=6, seed=3)
        ds = build_epidemic_dataset(graphs, cfg)
        assert ds.noise_var is not None and ds.noise_var > 0

    def test_deterministic(self):
        rng = np.random.default_rng(10)
        graphs = [random_graph(10, 0.3, rng) for _ in range(3)]
        cfg = SirConfig(initial_infected=2, infection_prob=0.4,
                        trials_per_graph=5, seed=4)
        a = build_epidemic_dataset(graphs, cfg)
        b = build_epidemic_dataset(graphs, cfg)
        assert np.array_equal(a.y, b.y)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            build_epidemic_dataset([], SirConfig())
