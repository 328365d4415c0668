import numpy as np
import pytest

from tcbf_transfer import matops
from tcbf_transfer import simfn as sf
from tcbf_transfer.abstraction import AbstractState, ExpCbfParams, Obstacle, di_dynamics, grad_b1
from tcbf_transfer.margin import PowerMargin
from tcbf_transfer.quadrotor import ConcreteState, QuadParams, WrenchInput, dynamics
from tcbf_transfer.sim.engine import joint_dynamics, rk4_step

P = QuadParams()
P2 = np.array([[1.5, 0.5], [0.5, 1.0]])


@pytest.fixture(scope="module")
def cert():
    return sf.build_certificate(sf.InterfaceGains.isotropic(4.0, 3.0), np.eye(6))


def random_joint(rng):
    x2 = ConcreteState(rng.normal(size=3) * 3, rng.normal(size=3), sf.random_rotation(rng), rng.normal(size=3))
    x1 = AbstractState(x2.p2 + rng.normal(size=3), x2.v2 + rng.normal(size=3))
    u2 = WrenchInput(rng.uniform(0, 40), rng.uniform(-1, 1, 3))
    return x1, x2, u2


def test_certificate_1d():
    c = sf.build_certificate(sf.InterfaceGains.isotropic(1.0, 1.0, dim=1), np.eye(2))
    np.testing.assert_allclose(c.P, P2, atol=1e-12)
    lam_max = (5 + np.sqrt(5)) / 4  # eigenvalues of P2
    assert c.c_V == pytest.approx(1.0 / lam_max, abs=1e-12)
    assert c.c_V == pytest.approx(0.5528, abs=1e-4)
    assert c.gamma_coeff == pytest.approx(1.0 / np.sqrt((5 - np.sqrt(5)) / 4))


def test_certificate_3d_decouples():
    c = sf.build_certificate(sf.InterfaceGains.isotropic(1.0, 1.0), np.eye(6))
    for i in range(3):
        idx = [i, 3 + i]
        np.testing.assert_allclose(c.P[np.ix_(idx, idx)], P2, atol=1e-12)
    mask = np.ones((6, 6), bool)
    for i in range(3):
        for j in range(3):
            if i != j:
                assert np.all(c.P[np.ix_([i, 3 + i], [j, 3 + j])] == pytest.approx(0, abs=1e-12))
    assert c.lyapunov_residual <= 1e-9
    assert mask.all()


def test_certificate_errors():
    with pytest.raises(matops.LinAlgError):
        sf.build_certificate(sf.InterfaceGains(np.diag([1.0, 1.0, 0.0]), np.eye(3)), np.eye(6))
    with pytest.raises(matops.NotPositiveDefiniteError):
        sf.build_certificate(sf.InterfaceGains.isotropic(1, 1), -np.eye(6))
    with pytest.raises(ValueError):
        sf.build_certificate(sf.InterfaceGains.isotropic(1, 1), np.eye(4))


def test_certificate_report(cert):
    rep = cert.report()
    assert rep["lyapunov_residual_ok"]
    assert rep["c_V"] == cert.c_V > 0
    assert '"gamma_coeff"' in cert.report_json()


def test_V_examples(cert):
    x2 = ConcreteState.hover_at((1, 2, 3))
    assert sf.V(cert, sf.ExactArgmin().witness(x2), x2) == 0.0
    c1 = sf.build_certificate(sf.InterfaceGains.isotropic(1.0, 1.0), np.eye(6))
    x1 = AbstractState((0, 0, 0), np.zeros(3))
    x2 = ConcreteState.hover_at((1, 0, 0))
    assert sf.V(c1, x1, x2) == pytest.approx(1.5)


def test_V_eigen_bound(cert):
    rng = np.random.default_rng(0)
    for _ in range(200):
        x1, x2, _ = random_joint(rng)
        z = sf.error_state(x1, x2)
        assert sf.V(cert, x1, x2) >= cert.lambda_min_P * z @ z * (1 - 1e-12)


def test_grad_V(cert):
    rng = np.random.default_rng(1)
    x1, x2, _ = random_joint(rng)
    g1, g2 = sf.grad_V(cert, x1, x2)
    np.testing.assert_allclose(g1, -g2[:6])
    assert np.all(g2[6:] == 0)
    eps = 1e-6
    v1 = x1.as_vector()
    for i in range(6):
        e = np.zeros(6)
        e[i] = eps
        fd = (sf.V(cert, AbstractState.from_vector(v1 + e), x2) - sf.V(cert, AbstractState.from_vector(v1 - e), x2)) / (2 * eps)
        assert g1[i] == pytest.approx(fd, rel=1e-7, abs=1e-7)
    w = sf.ExactArgmin().witness(x2)
    g1, g2 = sf.grad_V(cert, w, x2)
    assert not np.any(g1) and not np.any(g2)


def test_witness_modes():
    x2 = ConcreteState((1, 2, 3), (4, 5, 6), np.eye(3), np.zeros(3))
    w = sf.witness(sf.ExactArgmin(), x2)
    np.testing.assert_array_equal(w.p1, x2.p2)
    np.testing.assert_array_equal(w.v1, x2.v2)
    tr = sf.TrackedAbstract.offset_from(x2, dp=(0.1, 0, 0))
    np.testing.assert_allclose(sf.witness(tr, x2).p1, [0.9, 2, 3])
    assert not np.any(sf.witness_jacobian(tr, x2))


def test_witness_jacobian():
    mode = sf.ExactArgmin()
    hover = ConcreteState.hover_at(np.zeros(3))
    D = sf.witness_jacobian(mode, hover)
    np.testing.assert_array_equal(D @ dynamics(P, hover, WrenchInput(P.m * P.g, np.zeros(3))), np.zeros(6))
    x2 = ConcreteState(np.zeros(3), (1, 2, 3), np.eye(3), np.zeros(3))
    np.testing.assert_allclose(D @ dynamics(P, x2, WrenchInput(0.0, np.zeros(3))), [1, 2, 3, 0, 0, -9.81])


def test_witness_jacobian_matches_flow():
    rng = np.random.default_rng(4)
    mode = sf.ExactArgmin()
    _, x2, u2 = random_joint(rng)
    f2 = dynamics(P, x2, u2)
    eps = 1e-6
    xp = ConcreteState.from_vector(x2.as_vector() + eps * f2)
    xm = ConcreteState.from_vector(x2.as_vector() - eps * f2)
    fd = (mode.witness(xp).as_vector() - mode.witness(xm).as_vector()) / (2 * eps)
    np.testing.assert_allclose(mode.jacobian(x2) @ f2, fd, rtol=1e-6, atol=1e-6)


def test_interface_examples():
    c1 = sf.build_certificate(sf.InterfaceGains.isotropic(1.0, 1.0), np.eye(6))
    hover = ConcreteState.hover_at(np.zeros(3))
    w = sf.ExactArgmin().witness(hover)
    np.testing.assert_allclose(sf.interface_F(c1, P, w, hover, WrenchInput(P.m * P.g, np.zeros(3))), 0, atol=1e-15)
    np.testing.assert_allclose(sf.interface_F(c1, P, w, hover, WrenchInput(0, np.zeros(3))), [0, 0, -9.81])
    x2 = ConcreteState.hover_at((1, 0, 0))
    np.testing.assert_allclose(sf.interface_F(c1, P, w, x2, WrenchInput(P.m * P.g, np.zeros(3))), [1, 0, 0],
                               atol=1e-15)


def test_interface_affine(cert):
    rng = np.random.default_rng(5)
    for _ in range(50):
        x1, x2, u2 = random_joint(rng)
        F0, F1 = sf.interface_F_affine(cert, P, x1, x2)
        np.testing.assert_allclose(F0 + F1 @ u2.as_vector(), sf.interface_F(cert, P, x1, x2, u2), atol=1e-12)


def test_exact_mismatch_vanishes(cert):
    rng = np.random.default_rng(6)
    mode = sf.ExactArgmin()
    obs = Obstacle((1, 1, 1), 0.5)
    cbf = ExpCbfParams(4.0, 8.0)
    for _ in range(1000):
        _, x2, u2 = random_joint(rng)
        assert np.linalg.norm(sf.mismatch_delta(cert, P, mode, x2, u2)) <= 1e-12
        assert abs(sf.pushforward_gap(cert, P, mode, x2, u2, obs, cbf)) <= 1e-10


def test_tracked_mismatch_nonzero(cert):
    rng = np.random.default_rng(7)
    x1, x2, u2 = random_joint(rng)
    assert np.linalg.norm(sf.mismatch_delta(cert, P, sf.TrackedAbstract(x1), x2, u2)) > 1e-3


def test_decay_samples(cert):
    rng = np.random.default_rng(8)
    for _ in range(1000):
        x1, x2, u2 = random_joint(rng)
        chk = sf.check_decay(cert, P, x1, x2, u2)
        z = sf.error_state(x1, x2)
        assert chk.Vdot == pytest.approx(-z @ cert.Q @ z, rel=1e-9, abs=1e-12)
        assert chk.passed and chk.output_ok


def test_decay_at_witness(cert):
    x2 = ConcreteState.hover_at(np.zeros(3))
    chk = sf.check_decay(cert, P, sf.ExactArgmin().witness(x2), x2, WrenchInput(3.0, np.zeros(3)))
    assert chk.residual == 0.0 and chk.V == 0.0


def test_tracked_shadow_decays(cert):
    f = joint_dynamics(P, cert)
    x2 = ConcreteState.hover_at(np.zeros(3))
    x1 = AbstractState((0.3, -0.2, 0.1), (0.0, 0.5, 0.0))
    x = np.concatenate([x2.as_vector(), x1.as_vector()])
    u = np.array([P.m * P.g + 0.5, 0.0, 0.0, 0.0])
    vals = []
    for _ in range(2000):
        x = rk4_step(f, x, u, 1e-3)
        vals.append(sf.V(cert, AbstractState.from_vector(x[18:]), ConcreteState.from_vector(x[:18])))
    vals = np.array(vals)
    assert vals[0] > 0
    assert np.all(np.diff(vals) <= 0)
    assert vals[-1] <= vals[0] * np.exp(-cert.c_V * 1.9)


def test_mismatch_estimate(cert):
    box = {"p": 2.0, "v": 1.0, "ep": 0.1, "ev": 0.1, "f": (5.0, 15.0), "M": 0.5}
    est = sf.estimate_mismatch_bounds(cert, P, Obstacle((0, 0, 0), 0.5), ExpCbfParams(4, 8), PowerMargin(0.05, 1, 1),
                                      box, n=200, seed=1)
    assert est.samples == 200
    assert est.sup_delta_norm > 0 and est.sup_h2 > 0
    assert set(est.to_dict()) >= {"sup_h2_ratio", "sup_h3_ratio"}
    again = sf.estimate_mismatch_bounds(cert, P, Obstacle((0, 0, 0), 0.5), ExpCbfParams(4, 8),
                                        PowerMargin(0.05, 1, 1), box, n=200, seed=1)
    assert again == est


def test_di_rhs_consistency(cert):
    # the shadow in joint_dynamics is driven by exactly interface_F
    rng = np.random.default_rng(9)
    x1, x2, u2 = random_joint(rng)
    d = joint_dynamics(P, cert)(np.concatenate([x2.as_vector(), x1.as_vector()]), u2.as_vector())
    np.testing.assert_allclose(d[18:], di_dynamics(x1, sf.interface_F(cert, P, x1, x2, u2)), atol=1e-12)
    assert grad_b1(x1, Obstacle((0, 0, 0), 0.5), ExpCbfParams(1, 1)).shape == (6,)
