import pytest

from popfare.network import validate_network
from popfare.synthetic import synthesize


def test_default_dataset_shape():
    data = synthesize()
    assert data.network.n_stations == 91 and validate_network(data.network) == []
    total = sum(sum(v for _, v in dm.items()) for dm in data.demands.values())
    assert total == pytest.approx(729_110, rel=1e-3)
    peak = [p for _, p in data.tariffs["peak"].items()]
    off = [p for _, p in data.tariffs["offpeak"].items()]
    assert 2.0 <= min(off) and max(peak) <= 6.0
    assert all(data.tariffs["peak"][od] >= p for od, p in data.tariffs["offpeak"].items())


def test_seeded_and_reproducible():
    a, b = synthesize(seed=11, n_stations=20, n_lines=3), synthesize(seed=11, n_stations=20, n_lines=3)
    assert a.network.edge_set == b.network.edge_set
    assert dict(a.demands["Evening"].items()) == dict(b.demands["Evening"].items())
    c = synthesize(seed=12, n_stations=20, n_lines=3)
    assert dict(a.demands["Evening"].items()) != dict(c.demands["Evening"].items())


def test_full_demand_support():
    data = synthesize(seed=4, n_stations=15, n_lines=2)
    for dm in data.demands.values():
        dm.require_full_support(data.network)


@pytest.mark.parametrize("kwargs", [dict(n_stations=3, n_lines=2), dict(price_band=(5, 2)), dict(demand_scale=0)])
def test_bad_arguments(kwargs):
    with pytest.raises(ValueError):
        synthesize(**kwargs)
