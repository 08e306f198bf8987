import pytest

from oracle_bridge.timesteps import to_native_index


def test_gate_timestep_maps_to_index_200_on_1000_rungs():
    assert to_native_index(0.2, 1000) == 200


def test_floor_rounding():
    assert to_native_index(0.2004, 1000) == 200
    assert to_native_index(0.2999, 1000) == 299
    assert to_native_index(0.5, 1000) == 500


def test_ladder_bounds():
    assert to_native_index(1e-9, 1000) == 0
    assert to_native_index(1 - 1e-12, 1000) == 999
    assert to_native_index(0.5, 1) == 0


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.2, 3.0])
def test_out_of_range_rejected(bad):
    with pytest.raises(ValueError):
        to_native_index(bad, 1000)


def test_bad_ladder_rejected():
    with pytest.raises(ValueError):
        to_native_index(0.5, 0)
