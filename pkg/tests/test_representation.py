import math

import numpy as np
import pytest

from nsac1d.diagnostics import cumulative_trapezoid, trapezoid
from nsac1d.representation import (MIN_SNAPSHOTS, RepresentationError, eval_B, eval_D, eval_g,
                                   eval_J, eval_phi, find_alpha0, mean_value_point,
                                   reconstruct_v, write_comparison)
from nsac1d.state import FieldState, Grid, Params, make_initial_state, normalize_initial_data
from nsac1d.timestepper import History, advance


def _run(state, params, t, snapshot_dt=None):
    h = History.start(state, params, snapshot_dt)
    advance(state, t, params, h)
    return h


@pytest.fixture(scope="module")
def steady_history():
    s = make_initial_state(Grid(16), "steady")
    return _run(s, Params(), 5.0)


def test_eval_g_alpha0_zero():
    s = make_initial_state(Grid(16), "cosine")
    np.testing.assert_array_equal(eval_g(s, Params(alpha=0.0)), 0.0)


def test_eval_g_chi_one_zero():
    g = Grid(16)
    s = make_initial_state(g, "cosine").evolve(chi=np.ones(g.size))
    np.testing.assert_allclose(eval_g(s, Params(alpha=0.3)), 0.0, atol=1e-14)


def test_eval_g_rejects_floor():
    g = Grid(16)
    chi = np.ones(g.size)
    chi[3] = 0.0
    s = make_initial_state(g, "steady").evolve(chi=chi)
    with pytest.raises(RepresentationError):
        eval_g(s, Params(alpha=0.5))


def test_eval_g_difference_oracle():
    """Compare against direct differencing of 1/eta(chi(x,t)) for analytic fields."""
    a = 0.1
    p = Params(alpha=a)

    def chi_f(x, t):
        return 0.7 + 0.2 * np.cos(np.pi * x) * np.exp(-t)

    def eta_inv(x, t):
        return chi_f(x, t) ** (-a)

    x_u = lambda x: 0.2 * np.sin(np.pi * x)  # noqa: E731
    t0, h = 0.3, 1e-5
    errs = []
    for n in (32, 64, 128):
        g = Grid(n)
        x = g.nodes
        s = FieldState(g, t0, 1 + 0.1 * np.cos(np.pi * x), x_u(x), chi_f(x, t0),
                       1 + 0.2 * np.cos(np.pi * x))
        chi_t = (chi_f(x, t0 + h) - chi_f(x, t0 - h)) / (2 * h)
        ieta_t = (eta_inv(x, t0 + h) - eta_inv(x, t0 - h)) / (2 * h)
        ieta_x = (eta_inv(x + h, t0) - eta_inv(x - h, t0)) / (2 * h)
        eta_x = -ieta_x / eta_inv(x, t0) ** 2
        cx = -0.2 * np.pi * np.sin(np.pi * x) * np.exp(-t0)
        ux = 0.2 * np.pi * np.cos(np.pi * x)
        oracle = -(s.u * ieta_t + s.theta / s.v * ieta_x + cx ** 2 / (2 * s.v ** 2) * ieta_x
                   + eta_x * ux / (eta_inv(x, t0) ** -1 * s.v))
        got = eval_g(s, p, chi_t=chi_t)
        # the odd-extension derivative of u is first order at the two end nodes
        errs.append(np.max(np.abs(got - oracle)[1:-1]))
    for e1, e2 in zip(errs, errs[1:]):
        assert 3.2 <= e1 / e2 <= 4.8


def test_eval_J_steady_and_alpha0():
    g = Grid(16)
    s = make_initial_state(g, "steady")
    np.testing.assert_array_equal(eval_J(s, eval_g(s, Params()), Params()), 1.0)
    s = make_initial_state(g, "cosine")
    p = Params(alpha=0.0)
    J = eval_J(s, eval_g(s, p), p)
    from nsac1d.discretization import ddx_central
    cx = ddx_central(s.chi, g, "even")
    np.testing.assert_allclose(J, s.theta / s.v + cx ** 2 / (2 * s.v ** 2), rtol=1e-15)


def test_phi_t0_zero_velocity():
    g = Grid(16)
    s = make_initial_state(g, "cosine", amp_u=0.0)
    h = History.start(s, Params())
    np.testing.assert_array_equal(eval_phi(h, 0.0), 0.0)


def test_phi_t0_sine_velocity():
    errs = []
    for n in (32, 64, 128):
        g = Grid(n)
        s = make_initial_state(g, "cosine", amp_u=1.0, amp_chi=0.0, chi_base=1.0)
        h = History.start(s, Params(alpha=0.5))
        x = g.nodes
        errs.append(np.max(np.abs(eval_phi(h, 0.0) - (1 - np.cos(np.pi * x)) / np.pi)))
    assert 3.5 <= errs[0] / errs[1] <= 4.5 and 3.5 <= errs[1] / errs[2] <= 4.5


def test_phi_steady(steady_history):
    for t in (1.0, 5.0):
        np.testing.assert_allclose(eval_phi(steady_history, t), -t, rtol=1e-13)


def test_alpha0_examples(steady_history):
    assert find_alpha0(steady_history, 1.0) == 0.0
    g = Grid(20)
    assert mean_value_point(g.nodes, np.ones(g.size), g) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(RepresentationError):
        mean_value_point(g.nodes, np.full(g.size, 3.0), g)


def test_alpha0_postcondition():
    s = normalize_initial_data(make_initial_state(Grid(32), "cosine"))
    p = Params(alpha=0.05)
    h = _run(s, p, 0.5)
    for t in (0.0, 0.25, 0.5):
        phi = eval_phi(h, t)
        a0 = find_alpha0(h, t)
        assert 0 <= a0 <= 1
        target = trapezoid(h.states[h.index_of(t)].v * phi, h.grid)
        assert abs(np.interp(a0, h.grid.nodes, phi) - target) <= 1e-9


def test_B_examples(steady_history):
    assert eval_B(steady_history, 0.0) == 1.0
    assert eval_B(steady_history, 3.0) == pytest.approx(math.exp(-3.0), rel=1e-13)
    s = normalize_initial_data(make_initial_state(Grid(16), "cosine"))
    h = _run(s, Params(alpha=0.05), 0.5, snapshot_dt=0.05)
    B = [eval_B(h, t) for t in h.times]
    assert all(0 < b <= 1 for b in B) and np.all(np.diff(B) <= 0)


def test_D_examples(steady_history):
    np.testing.assert_array_equal(eval_D(steady_history, 2.0, 0.0), 1.0)
    s = normalize_initial_data(make_initial_state(Grid(32), "cosine"))
    h = _run(s, Params(alpha=0.05), 0.5)
    for t in (0.0, 0.5):
        D = eval_D(h, t, find_alpha0(h, t))
        assert np.all(D > 0)
    D0 = eval_D(h, 0.0, find_alpha0(h, 0.0))
    np.testing.assert_allclose(D0, s.v, rtol=1e-13)


def test_reconstruct_steady(steady_history):
    for t in (1.0, 5.0):
        r = reconstruct_v(steady_history, t)
        assert np.max(np.abs(r.v_repr - 1)) <= 1e-10
        assert r.residual_max <= 1e-10
        assert r.alpha0 == 0.0
        assert r.B_value == pytest.approx(math.exp(-t), rel=1e-13)


def test_reconstruct_t0_reproduces_v0():
    s = normalize_initial_data(make_initial_state(Grid(32), "cosine", amp_v=0.3))
    h = History.start(s, Params(alpha=0.05))
    r = reconstruct_v(h, 0.0)
    np.testing.assert_allclose(r.v_repr, s.v, rtol=1e-13)


def test_reconstruct_too_few_snapshots():
    s = normalize_initial_data(make_initial_state(Grid(16), "cosine"))
    h = _run(s, Params(), 0.5, snapshot_dt=0.1)
    with pytest.raises(RepresentationError, match="snapshots"):
        reconstruct_v(h, 0.5)
    with pytest.raises(RepresentationError):
        reconstruct_v(h, 0.55)


@pytest.mark.parametrize("alpha", [0.0, 0.05])
def test_reconstruct_second_order(alpha):
    p = Params(alpha=alpha)
    res = []
    for n in (16, 32, 64):
        s = normalize_initial_data(make_initial_state(Grid(n), "cosine"))
        h = _run(s, p, 0.5, snapshot_dt=0.5 / n)
        r = reconstruct_v(h, 0.5)
        assert np.all(r.v_repr > 0)
        np.testing.assert_allclose(r.a_factor * r.B_value * eval_D(h, 0.5, r.alpha0), r.v_sim,
                                   rtol=1e-12)
        res.append(r.residual_max)
    for a, b in zip(res, res[1:]):
        assert 3.2 <= a / b <= 4.8, res


def test_write_comparison(tmp_path, steady_history):
    r = reconstruct_v(steady_history, 1.0)
    p = tmp_path / "cmp.csv"
    write_comparison(r, steady_history.grid, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "x,v_sim,v_repr,diff"
    assert len(lines) == steady_history.grid.size + 1


def test_min_snapshots_constant():
    assert MIN_SNAPSHOTS == 16
