import numpy as np

from carbonhybrid.parallel import parallel_map
from carbonhybrid.seeding import derive_seed, generator
from carbonhybrid.synth import synthetic_panel


def _square(x):
    return x * x


class TestSeeding:
    def test_path_determines_seed(self):
        assert derive_seed(0, "roll", 5) == derive_seed(0, "roll", 5)
        assert derive_seed(0, "roll", 5) != derive_seed(0, "roll", 6)
        assert derive_seed(0, "roll", 5) != derive_seed(1, "roll", 5)
        assert 0 <= derive_seed(2**40, "x") < 2**63

    def test_generator_streams(self):
        a = generator(7, "a").random(5)
        np.testing.assert_array_equal(a, generator(7, "a").random(5))
        assert not np.array_equal(a, generator(7, "b").random(5))


class TestParallelMap:
    def test_order_preserved(self):
        items = list(range(23))
        assert parallel_map(_square, items, 1) == parallel_map(_square, items, 3) == [i * i for i in items]

    def test_empty(self):
        assert parallel_map(_square, [], 4) == []


class TestSynth:
    def test_reproducible(self):
        assert synthetic_panel(200, seed=3).equals(synthetic_panel(200, seed=3))
        assert not synthetic_panel(200, seed=3).equals(synthetic_panel(200, seed=4))

    def test_positive_and_gapped(self):
        p = synthetic_panel(300, seed=1)
        assert p.has_missing()
        for code in p.codes:
            v = p[code]
            assert np.all(v[~np.isnan(v)] > 0)
        assert not np.isnan(p["SHEA"]).any()
