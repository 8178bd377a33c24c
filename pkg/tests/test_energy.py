import pytest
from hypothesis import given
from hypothesis import strategies as st

from react_sim.energy import DEFAULT_CAPACITY_J, Battery, Depleted, PowerProfile, drain, step_energy

DEFAULT = PowerProfile()


def test_idle_only():
    assert step_energy(DEFAULT, 0.0, False, 1.0) == 2.0


def test_full_speed_with_sensing():
    assert step_energy(DEFAULT, 1.0, True, 1.0) == pytest.approx(29.0)


@given(
    st.floats(0, 5), st.floats(0.01, 10), st.floats(0, 50), st.floats(0.01, 50), st.floats(0, 10)
)
def test_sensing_difference_is_linear(speed, dt, loco, sensing, idle):
    p = PowerProfile(loco, sensing, idle)
    diff = step_energy(p, speed, True, dt) - step_energy(p, speed, False, dt)
    assert diff == pytest.approx(sensing * dt, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("speed, dt", [(-0.1, 1.0), (1.0, 0.0)])
def test_step_energy_preconditions(speed, dt):
    with pytest.raises(ValueError):
        step_energy(DEFAULT, speed, True, dt)


def test_profile_requires_positive_sensing():
    with pytest.raises(ValueError):
        PowerProfile(sensing_w=0.0)
    with pytest.raises(ValueError):
        PowerProfile(idle_w=-1.0)


def test_drain_reference_capacity():
    b = drain(Battery.full(8245.96), 4238.01)
    assert isinstance(b, Battery)
    assert b.charge_j == pytest.approx(4007.95)
    assert DEFAULT_CAPACITY_J == 8245.96


def test_drain_zero_is_identity():
    b = Battery(100.0, 40.0)
    assert drain(b, 0.0) == b


def test_drain_past_empty_depletes():
    out = drain(Battery(100.0, 40.0), 40.0 + 1e-9)
    assert isinstance(out, Depleted)
    assert out.charge_j == 0.0


def test_drain_rejects_negative():
    with pytest.raises(ValueError):
        drain(Battery.full(), -1.0)


@given(st.lists(st.floats(0, 500), max_size=40))
def test_charge_never_negative_and_non_increasing(draws):
    b = Battery.full(1000.0)
    last = b.charge_j
    for j in draws:
        b = drain(b, j) if isinstance(b, Battery) else b
        assert 0.0 <= b.charge_j <= last
        last = b.charge_j
