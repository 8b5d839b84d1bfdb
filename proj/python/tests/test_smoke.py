import pathlib

import numpy as np
import pytest

import ofmpc

CONFIG = pathlib.Path(__file__).resolve().parents[2] / "configs" / "double_pendulum.json"


@pytest.fixture(scope="module")
def cfg():
    return ofmpc.load_config(str(CONFIG))


@pytest.fixture(scope="module")
def design(cfg):
    return ofmpc.Design(cfg.model, cfg.spec)


def test_config_loads_row_major(cfg):
    assert cfg.model.A.shape == (4, 4)
    assert cfg.model.A[1, 0] == pytest.approx(0.098)
    assert cfg.spec.N == 5
    assert cfg.model.lam == pytest.approx(0.6)


def test_gains_are_certified(cfg):
    g = ofmpc.synthesize_gains(cfg.model, cfg.spec)
    assert g.certified
    assert max(g.rho_phi, g.rho_ms, g.rho_lyap) < 1.0
    assert g.K.shape == (2, 4)
    assert g.M.shape == (4, 2)


def test_first_plan_meets_budget(cfg, design):
    sol = design.solve(cfg.belief.x_hat0, cfg.belief.sigma0, cfg.spec.epsilon)
    assert sol["status"] == "optimal"
    assert sol["constraint"] <= cfg.spec.epsilon * (1 + 1e-8)
    hc, gc, cc = design.forms(cfg.belief.x_hat0, cfg.belief.sigma0)["cost"]
    t = sol["theta"]
    assert 0.5 * t @ hc @ t + gc @ t + cc == pytest.approx(sol["cost"], rel=1e-9)


def test_infeasible_budget_raises(cfg, design):
    c = ofmpc.Controller(design, _belief(cfg))
    fresh = ofmpc.load_config(str(CONFIG))
    fresh.spec.epsilon = 100.0
    tight = ofmpc.Design(fresh.model, fresh.spec)
    with pytest.raises(ofmpc.InfeasibleAtStart):
        ofmpc.Controller(tight, _belief(cfg)).plan()
    assert c.plan()["status"] == "optimal"


def test_controller_steps(cfg, design):
    c = ofmpc.Controller(design, _belief(cfg))
    rng = np.random.default_rng(0)
    for k in range(5):
        p = c.plan()
        assert p["k"] == k
        gamma = int(rng.random() < 0.6)
        y = rng.normal(size=2) if gamma else None
        r = c.step(gamma, y)
        assert r["u"].shape == (2,)
    assert c.k == 5


def test_campaign_is_deterministic(cfg):
    cfg.episodes = 2
    cfg.steps = 20
    cfg.workers = 1
    a = ofmpc.run_campaign(cfg)
    cfg.workers = 2
    b = ofmpc.run_campaign(cfg)
    assert a["episode_constraint"] == b["episode_constraint"]
    assert a["infeasible_after_start"] == 0


def _belief(cfg):
    b = ofmpc.InitialBelief()
    b.x_hat0 = cfg.belief.x_hat0
    b.sigma0 = cfg.belief.sigma0
    return b
