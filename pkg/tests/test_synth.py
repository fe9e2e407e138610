import numpy as np
import pytest

from urbanfusion.core import Channel
from urbanfusion.errors import SpecInvalid
from urbanfusion.synth import WalkSpec, generate_walk, parse_rule


def test_rule_parser():
    r = parse_rule("sound_db > 66 or illuminance_lux < 580 and temp_c >= 20")
    assert r({"sound_db": 70, "illuminance_lux": 1000, "temp_c": 10})
    assert r({"sound_db": 60, "illuminance_lux": 500, "temp_c": 25})
    assert not r({"sound_db": 60, "illuminance_lux": 500, "temp_c": 15})
    assert not parse_rule(None)({})
    for bad in ("sound_db >> 3", "wind > 3", "sound_db > 66 xor temp_c < 3"):
        with pytest.raises(SpecInvalid):
            parse_rule(bad)


@pytest.mark.parametrize("kw", [{"corruption": "type3"}, {"tau": (0.5, 1.0)}, {"label_noise": 1.5},
                                {"duration": 0.0}])
def test_invalid_specs(kw):
    with pytest.raises(SpecInvalid):
        generate_walk(WalkSpec(**kw))


def test_slots_follow_the_rule():
    w = generate_walk(WalkSpec(duration=600.0, seed=4))
    counts = w.expected_nscr(5.0)
    assert len(counts) == len(w.slot_aroused) == 120
    assert np.array_equal(counts > 0, w.slot_aroused)
    rule = parse_rule(w.spec.rule)
    for k in range(120):
        mid = w.walk_start + 5 * k + 2.5
        env = next(e for a, b, e in w.segments if a <= mid < b)
        assert w.slot_aroused[k] == rule(env)


def test_no_rule_means_no_arousal():
    w = generate_walk(WalkSpec(duration=300.0, rule=None))
    assert not w.expected_nscr().any() and len(w.pulses) == 0


def test_generation_is_seeded():
    a = generate_walk(WalkSpec(duration=120.0, seed=2, sensor_noise=1.0))
    b = generate_walk(WalkSpec(duration=120.0, seed=2, sensor_noise=1.0))
    for ch in Channel:
        assert np.array_equal(a.streams[ch].values, b.streams[ch].values)
