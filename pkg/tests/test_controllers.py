"""Baseline controllers: pendulum feedback law, rover procedure, pump-off."""

import numpy as np
import pytest

from simplexrl import controllers as ctl
from simplexrl.nn import forward, init_mlp
from simplexrl.plants import pendulum as ip
from simplexrl.plants import rover as rv
from simplexrl.runtime import rover_recoverable
from simplexrl.seeding import substream
from simplexrl.tasks import make_rover_task


# ---------------------------------------------------------------------------
# pendulum feedback law

def test_ip_gain_on_unit_position():
    prm = ctl.IpBcParams()
    assert ctl.ip_bc_action(np.array([1.0, 0.0, 0.0, 0.0]), prm) == pytest.approx(0.4072)


def test_ip_gain_is_linear_in_range():
    prm = ctl.IpBcParams()
    rng = substream(11, "ip-bc-linear")
    for _ in range(20):
        s = rng.uniform(-0.2, 0.2, size=4)
        assert ctl.ip_bc_action(s, prm) == pytest.approx(float(ctl.IP_GAIN @ s), abs=1e-15)


def test_ip_action_clamps_to_limit():
    prm = ctl.IpBcParams()
    # unit angle alone asks for 18.6269, far beyond the actuator
    assert ctl.ip_bc_action(np.array([0.0, 0.0, 1.0, 0.0]), prm) == pytest.approx(4.95)
    assert ctl.ip_bc_action(np.array([0.0, 0.0, -1.0, 0.0]), prm) == pytest.approx(-4.95)


def test_ip_quadratic_form_is_positive_definite():
    eigs = np.linalg.eigvalsh(ctl.IP_LYAPUNOV)
    assert np.all(eigs > 0.0)
    rng = substream(11, "ip-pd")
    for _ in range(200):
        x = rng.normal(size=4)
        assert float(x @ ctl.IP_LYAPUNOV @ x) > 0.0


def test_ip_params_reject_asymmetric_matrix():
    P = ctl.IP_LYAPUNOV.copy()
    P[0, 1] += 1e-3
    with pytest.raises(ValueError):
        ctl.IpBcParams(P=P)


def test_ip_bc_drives_boundary_state_to_rest():
    """Closed-loop baseline from the recoverable boundary ends near upright."""
    prm = ctl.IpBcParams()
    plant = ip.IpParams()
    rng = substream(11, "ip-bc-settle")
    for _ in range(5):
        x = rng.normal(size=4)
        s = x / np.sqrt(float(x @ prm.P @ x))      # exactly on the boundary
        # cart position carries a small gain, so settling takes tens of
        # seconds of plant time
        for _ in range(2000):
            s = ip.ip_closed_loop_step(s, prm.K, plant)
        assert float(s @ prm.P @ s) < 1e-2
        assert abs(s[ip.THETA]) < 0.01 and abs(s[ip.OMEGA]) < 0.01


# ---------------------------------------------------------------------------
# pump baseline

def test_ap_bc_is_always_off():
    rng = substream(11, "ap-bc")
    for _ in range(10):
        assert ctl.ap_bc_action(rng.normal(size=3)) == 0.0


# ---------------------------------------------------------------------------
# rover procedure

def _empty_field():
    return rv.ObstacleField(centers=np.zeros((0, 2)), radii=np.zeros(0))


def _ring_field(dist=0.45, rad=0.15, n=16):
    ang = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    return rv.ObstacleField(centers=dist * np.stack([np.cos(ang), np.sin(ang)], 1),
                            radii=np.full(n, rad))


def test_rover_bc_braking_action_opposes_motion():
    params = rv.RoverParams()
    field = _empty_field()
    s = rv.make_state(np.array([3.0, 3.0]), 0.0, params.v_max, field, params)
    rec = lambda st: rover_recoverable(st, params)
    a, nxt = ctl.rover_bc_action(s, ctl.RoverBcState(), params, field,
                                 ctl.RoverBcParams(), rec, substream(11, "brk"))
    assert nxt.phase == ctl.BRAKING
    assert a == pytest.approx([-params.a_max, 0.0])
    # slow rover brakes at exactly v/dt so it stops in one step
    s2 = rv.make_state(np.array([3.0, 3.0]), 0.0, 0.05, field, params)
    a2, _ = ctl.rover_bc_action(s2, ctl.RoverBcState(), params, field,
                                ctl.RoverBcParams(), rec, substream(11, "brk2"))
    assert a2 == pytest.approx([-0.5, 0.0])
    assert rv.rover_step(s2, a2, params, field)[rv.V] == pytest.approx(0.0)


def test_rover_bc_choosing_picks_clear_heading():
    params = rv.RoverParams()
    field = _empty_field()
    s = rv.make_state(np.array([3.0, 3.0]), 1.0, 0.0, field, params)
    rec = lambda st: rover_recoverable(st, params)
    a, nxt = ctl.rover_bc_action(s, ctl.RoverBcState(), params, field,
                                 ctl.RoverBcParams(), rec, substream(11, "choose"))
    assert nxt.phase == ctl.ROTATING
    assert a == pytest.approx([0.0, 0.0])
    clear = rv.ray_distance(s[:2], nxt.heading, field, params)
    assert clear >= params.d_safe + params.d_br_max + params.epsilon


def test_rover_bc_parks_when_ringed_by_obstacles():
    params = rv.RoverParams()
    field = _ring_field()
    s = rv.make_state(np.zeros(2), 0.0, 0.0, field, params)
    rec = lambda st: rover_recoverable(st, params)
    bc = ctl.RoverBcState()
    a, bc = ctl.rover_bc_action(s, bc, params, field, ctl.RoverBcParams(),
                                rec, substream(11, "ring"))
    assert bc.phase == ctl.EMERGENCY
    assert a == pytest.approx([0.0, 0.0])
    # emergency is absorbing
    a, bc = ctl.rover_bc_action(s, bc, params, field, ctl.RoverBcParams(),
                                rec, substream(11, "ring2"))
    assert bc.phase == ctl.EMERGENCY and a == pytest.approx([0.0, 0.0])


def test_rover_bc_rotates_then_cruises():
    params = rv.RoverParams()
    bcp = ctl.RoverBcParams()
    field = _empty_field()
    rec = lambda st: rover_recoverable(st, params)
    rng = substream(11, "rot")
    s = rv.make_state(np.array([3.0, 3.0]), 0.0, 0.0, field, params)
    bc = ctl.RoverBcState(ctl.ROTATING, np.pi / 2)
    # first pulse can turn by at most omega_bc * dt
    a, bc = ctl.rover_bc_action(s, bc, params, field, bcp, rec, rng)
    s = rv.rover_step(s, a, params, field)
    assert s[rv.THETA] == pytest.approx(bcp.omega_bc * params.dt)
    assert s[rv.V] == pytest.approx(bcp.rotate_pulse_speed)
    for _ in range(10):
        if bc.phase != ctl.ROTATING:
            break
        a, bc = ctl.rover_bc_action(s, bc, params, field, bcp, rec, rng)
        s = rv.rover_step(s, a, params, field)
    assert bc.phase == ctl.CRUISING
    assert s[rv.THETA] == pytest.approx(np.pi / 2)
    # the aligning call already cruised once: pulse speed plus one
    # acceleration-limited increment
    assert s[rv.V] == pytest.approx(bcp.rotate_pulse_speed + params.a_max * params.dt)
    target = bcp.cruise_speed_factor * params.v_max
    for _ in range(3):
        a, bc = ctl.rover_bc_action(s, bc, params, field, bcp, rec, rng)
        s = rv.rover_step(s, a, params, field)
    assert bc.phase == ctl.CRUISING
    assert s[rv.V] == pytest.approx(target)
    assert s[rv.THETA] == pytest.approx(np.pi / 2)


def test_rover_bc_keeps_standoff_from_random_starts():
    """The full procedure, holding the plant, never erodes the standoff."""
    bundle = make_rover_task(field_seed=3)
    params = bundle.extras["params"]
    rng = substream(11, "bc-holds")
    floor = params.d_safe - 1e-9
    for i in range(40):
        s = bundle.init_state(rng)
        # half the starts move at full speed toward whatever they face
        if i % 2 == 0:
            cand = rv.make_state(s[:2], s[rv.THETA], params.v_max,
                                 bundle.extras["field"], params)
            if bundle.recoverable(cand):
                s = cand
        bc = bundle.bc_controller()
        bc.reset()
        for _ in range(80):
            s, _ = bc.step_plant(s, rng)       # raises on any penetration
            assert rv.min_reading(s) >= floor


# ---------------------------------------------------------------------------
# learned-controller wrapper

def test_neural_controller_respects_action_box():
    rng = substream(11, "nc-box")
    low, high = np.array([-4.95]), np.array([4.95])
    off, sca = ctl.actor_box_params(low, high)
    net = init_mlp([4, 16, 1], rng, output_activation="tanh",
                   output_offset=off, output_scale=sca)
    nc = ctl.NeuralController(actor=net, action_low=low, action_high=high)
    for _ in range(50):
        a = ctl.nc_action(nc, rng.normal(size=4) * 3.0)
        assert a.shape == (1,)
        assert np.all(a >= low) and np.all(a <= high)


def test_neural_controller_matches_raw_forward():
    rng = substream(11, "nc-det")
    net = init_mlp([3, 8, 1], rng, output_activation="tanh")
    nc = ctl.NeuralController(actor=net, action_low=np.array([-1.0]),
                              action_high=np.array([1.0]))
    s = rng.normal(size=3)
    assert np.array_equal(ctl.nc_action(nc, s), np.atleast_1d(forward(net, s)))


def test_actor_box_params_center_and_halfwidth():
    off, sca = ctl.actor_box_params(np.array([0.0, -2.0]), np.array([100.0, 2.0]))
    assert off == pytest.approx([50.0, 0.0])
    assert sca == pytest.approx([50.0, 2.0])
