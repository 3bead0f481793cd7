import pytest
import coca3d.futures
from distributed.core import Status


def test_factory_closes_cluster():
    with coca3d.futures.factory("local", 1) as executor:
        cluster = executor.cluster
        assert executor.submit(sum, [1, 2, 3]).result() == 6
        assert len(cluster.workers) == 1
    assert cluster.status == Status.closed


def test_factory_unknown_method():
    with pytest.raises(RuntimeError):
        coca3d.futures.factory("slurm", 1)
