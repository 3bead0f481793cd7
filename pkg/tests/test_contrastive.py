import numpy as np
import pytest
import coca3d.config
from math import cos
from math import exp
from math import log
from math import pi
from math import sin
from coca3d.contrastive import ContrastiveState
from coca3d.contrastive import DegenerateNormError
from coca3d.contrastive import ProjectionHead
from coca3d.contrastive import info_nce
from coca3d.contrastive import project_and_normalize
from coca3d.contrastive import retrieval_top1
from coca3d.contrastive import similarity_matrix
from coca3d.gradcheck import check_gradients
from coca3d.tensor import Parameter


def test_project_and_normalize():
    np.testing.assert_allclose(project_and_normalize(np.array([3.0, 4.0])).data, [0.6, 0.8])
    unit = np.array([0.0, 1.0, 0.0])
    np.testing.assert_array_equal(project_and_normalize(unit).data, unit)

    head = ProjectionHead(3, 2, np.random.default_rng(0))
    for p in head.parameters().values():
        p.data[...] = 0
    with pytest.raises(DegenerateNormError):
        project_and_normalize(np.ones((2, 3)), head)
    with pytest.raises(ValueError):
        project_and_normalize(np.ones((2, 4)), head)


def test_project_and_normalize_gives_unit_rows():
    head = ProjectionHead(5, 3, np.random.default_rng(0))
    z = project_and_normalize(np.random.default_rng(1).normal(size=(4, 5)), head)
    np.testing.assert_allclose(np.linalg.norm(z.data, axis=1), np.ones(4))


def test_similarity_matrix():
    rng = np.random.default_rng(0)
    z = project_and_normalize(rng.normal(size=(3, 4))).data
    np.testing.assert_allclose(np.diag(similarity_matrix(z, z).data), np.ones(3))
    np.testing.assert_allclose(similarity_matrix(np.eye(3), np.eye(3)).data, np.eye(3))

    a = np.array([[1.0, 0.0], [cos(pi / 6), sin(pi / 6)]])
    sim = similarity_matrix(a, a).data
    assert sim[0, 1] == pytest.approx(0.8660254, abs=1e-7)

    with pytest.raises(ValueError):
        similarity_matrix(np.ones((2, 2)), np.eye(2))


def test_info_nce_closed_forms():
    assert info_nce(np.array([[0.3]]), 0.7).item() == 0
    for n in [2, 5]:
        loss = info_nce(np.full((n, n), 0.25), 0.1).item()
        assert loss == pytest.approx(log(n), abs=1e-9)
    loss = info_nce(np.eye(2), 1.0).item()
    assert loss == pytest.approx(log(1 + exp(-1)), abs=1e-9)
    assert loss == pytest.approx(0.313262, abs=1e-6)

    with pytest.raises(ValueError):
        info_nce(np.ones((2, 3)), 1.0)


def test_info_nce_symmetric():
    rng = np.random.default_rng(0)
    sim = rng.uniform(-1, 1, size=(4, 4))
    forward = info_nce(sim, 0.5).item()
    backward = info_nce(sim.T, 0.5).item()
    assert info_nce(sim, 0.5, symmetric=True).item() == pytest.approx(
        0.5 * (forward + backward)
    )
    symmetric = sim + sim.T
    assert info_nce(symmetric, 0.5, symmetric=True).item() == pytest.approx(
        info_nce(symmetric, 0.5).item()
    )


def test_info_nce_gradient():
    rng = np.random.default_rng(0)
    sim = Parameter(rng.uniform(-1, 1, size=(3, 3)))
    state = ContrastiveState(coca3d.config.Contrastive(init_temperature=0.2))

    def loss():
        return info_nce(sim, state.temperature, symmetric=True)

    report = check_gradients(loss, {"sim": sim, "tau": state.log_temperature})
    assert report.passed, str(report)


def test_temperature_clamp():
    state = ContrastiveState(
        coca3d.config.Contrastive(
            init_temperature=0.07, min_temperature=0.05, max_temperature=1.0
        )
    )
    assert state.temperature.item() == pytest.approx(0.07)
    state.log_temperature.data[...] = log(0.001)
    state.clamp()
    assert state.temperature.item() == pytest.approx(0.05)
    state.log_temperature.data[...] = log(20.0)
    state.clamp()
    assert state.temperature.item() == pytest.approx(1.0)


def test_retrieval_top1():
    assert retrieval_top1(np.eye(4)) == 1.0
    assert retrieval_top1(np.eye(4)[::-1]) == 0.0

    # Identical scenes and captions tie on every row
    sim = np.ones((4, 4))
    assert retrieval_top1(sim) == 0.25
    assert retrieval_top1(sim, keys=["a red box"] * 4) == 1.0


def test_retrieval_at_chance():
    rng = np.random.default_rng(0)
    accuracy = np.mean(
        [retrieval_top1(rng.uniform(-1, 1, size=(8, 8))) for _ in range(1000)]
    )
    assert accuracy == pytest.approx(1 / 8, abs=0.05)
