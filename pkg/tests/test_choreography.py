import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_beats
from swarmchor import errors as E
from swarmchor.choreography import (
    PromptBundle,
    build_initial_prompt,
    build_reprompt,
    decimate_beats,
    extract_first_json,
    parse_waypoint_response,
    procedural_generate,
    request_choreography,
    style_from_reprompts,
)
from swarmchor.config import (
    DroneLimits,
    FlightVolume,
    GenBackendConfig,
    PromptConfig,
    SeparationPolicy,
)

FIXTURES = Path(__file__).parent / "fixtures" / "responses"


class TestDecimateBeats:
    def test_under_budget_untouched(self):
        times = np.arange(10, dtype=float)
        kept, stride = decimate_beats(times, 64)
        np.testing.assert_array_equal(kept, times)
        assert stride == 1

    def test_over_budget(self):
        times = np.arange(130, dtype=float)
        kept, stride = decimate_beats(times, 64)
        assert stride == 3
        np.testing.assert_array_equal(kept, times[::3])
        assert len(kept) <= 64


class TestPrompt:
    def _bundle(self, n=3, n_beats=6):
        init = np.stack([np.array([0.5 * i - 0.5, 0.0, 1.0]) for i in range(n)])
        return build_initial_prompt(
            make_beats(n_beats), n, init, FlightVolume(), DroneLimits(), SeparationPolicy()
        )

    def test_contents(self):
        b = self._bundle()
        assert "3 drones" in b.user_text
        assert "0.500" in b.user_text and "3.000" in b.user_text
        assert "x in [-1.5, 1.5]" in b.user_text
        assert "1 m/s" in b.user_text
        assert "0.5 m" in b.user_text
        assert '"drones"' in b.user_text  # output format instruction
        assert b.n_drones == 3
        assert b.constraints_echo["v_max"] == 1.0
        assert b.constraints_echo["accel_max"] == pytest.approx(14.7 - 9.81)

    def test_song_meta_included(self):
        init = np.array([[0.0, 0.0, 1.0]])
        b = build_initial_prompt(
            make_beats(4), 1, init, FlightVolume(), DroneLimits(), SeparationPolicy(),
            song_meta={"name": "Test Song", "genre": "electronic", "mood": "upbeat"},
        )
        assert "Test Song" in b.user_text and "electronic" in b.user_text

    def test_initial_position_outside_volume_rejected(self):
        init = np.array([[9.0, 0.0, 1.0]])
        with pytest.raises(ValueError):
            build_initial_prompt(
                make_beats(4), 1, init, FlightVolume(), DroneLimits(), SeparationPolicy()
            )

    def test_decimation_noted(self):
        init = np.array([[0.0, 0.0, 1.0]])
        b = build_initial_prompt(
            make_beats(10), 1, init, FlightVolume(), DroneLimits(), SeparationPolicy(),
            prompt_cfg=PromptConfig(beat_budget=5),
        )
        assert "every 2th beat" in b.user_text
        assert len(b.beat_times) == 5

    def test_reprompt_appends(self):
        b = self._bundle()
        b2 = build_reprompt(build_reprompt(b, "faster"), "go higher")
        assert b2.reprompt_history == ("faster", "go higher")
        with pytest.raises(E.EmptyReprompt):
            build_reprompt(b, "   ")


class TestExtractFirstJson:
    def test_plain(self):
        assert extract_first_json('{"a": 1}') == {"a": 1}

    def test_embedded(self):
        assert extract_first_json('bla {"a": [1, 2]} bla') == {"a": [1, 2]}

    def test_braces_in_strings(self):
        assert extract_first_json('{"a": "with } brace"}') == {"a": "with } brace"}

    def test_escaped_quotes(self):
        assert extract_first_json('{"a": "quo\\"te}"}') == {"a": 'quo"te}'}

    def test_skips_invalid(self):
        assert extract_first_json("{invalid} then {\"ok\": true}") == {"ok": True}

    def test_none_when_absent(self):
        assert extract_first_json("no json here") is None
        assert extract_first_json("{never closed") is None


class TestParserRobustnessCorpus:
    index = json.loads((FIXTURES / "index.json").read_text())

    @pytest.mark.parametrize("name", sorted(index["cases"]))
    def test_case(self, name):
        expect = self.index["cases"][name]
        text = (FIXTURES / name).read_text()
        try:
            script = parse_waypoint_response(
                text, self.index["n_drones"], self.index["beat_times"]
            )
            got = "ok"
        except E.SwarmchorError as exc:
            got = exc.code
        assert got == expect
        if expect == "ok":
            assert script.n_drones == self.index["n_drones"]
            np.testing.assert_allclose(script.timestamps, self.index["beat_times"], atol=1e-3)


class TestProceduralGenerate:
    def test_deterministic(self):
        beats = make_beats(8)
        a = procedural_generate(beats, 5, seed=42)
        b = procedural_generate(beats, 5, seed=42)
        np.testing.assert_array_equal(a.as_array(), b.as_array())

    def test_seed_changes_output(self):
        beats = make_beats(8)
        a = procedural_generate(beats, 5, seed=1)
        b = procedural_generate(beats, 5, seed=2)
        assert not np.array_equal(a.as_array(), b.as_array())

    def test_inside_volume(self):
        vol = FlightVolume()
        script = procedural_generate(make_beats(12), 7, seed=0, volume=vol)
        pts = script.as_array()
        assert np.all(pts >= vol.lo) and np.all(pts <= vol.hi)

    def test_one_waypoint_per_beat(self):
        beats = make_beats(9)
        script = procedural_generate(beats, 3, seed=0)
        np.testing.assert_allclose(script.timestamps, beats.beat_times)

    def test_adversarial_plants_close_pairs(self):
        script = procedural_generate(make_beats(16), 9, seed=5, style="adversarial",
                                     min_separation=0.5)
        pts = script.as_array()
        dmin = np.inf
        for b in range(pts.shape[1]):
            p = pts[:, b]
            d = np.linalg.norm(p[:, None] - p[None, :], axis=2)
            np.fill_diagonal(d, np.inf)
            dmin = min(dmin, float(d.min()))
        assert dmin < 0.5  # at least one planted conflict

    def test_altitude_styles(self):
        hi = procedural_generate(make_beats(8), 3, seed=0, style="high").as_array()[..., 2]
        lo = procedural_generate(make_beats(8), 3, seed=0, style="low").as_array()[..., 2]
        assert hi.mean() > lo.mean()


class TestStyleFromReprompts:
    @pytest.mark.parametrize(
        "history,expected",
        [
            ((), "default"),
            (("make it faster please",), "fast"),
            (("slow down",), "slow"),
            (("fly higher", "no, slower"), "slow"),
            (("something unrelated",), "default"),
            (("go lower",), "low"),
        ],
    )
    def test_mapping(self, history, expected):
        assert style_from_reprompts(history) == expected


class TestBackends:
    def test_procedural_full_path(self):
        beats = make_beats(6)
        init = np.array([[0.0, 0.0, 1.0], [0.6, 0.0, 1.0]])
        bundle = build_initial_prompt(
            beats, 2, init, FlightVolume(), DroneLimits(), SeparationPolicy()
        )
        text = request_choreography(bundle, GenBackendConfig(seed=3))
        script = parse_waypoint_response(text, 2, bundle.beat_times, beat_grid=beats)
        assert script.n_drones == 2
        # deterministic for a fixed seed
        assert text == request_choreography(bundle, GenBackendConfig(seed=3))

    def test_http_backend_unreachable(self):
        bundle = PromptBundle(system_text="s", user_text="u", n_drones=1,
                              beat_times=(0.5, 1.0), initial_positions=((0.0, 0.0, 1.0),))
        backend = GenBackendConfig(kind="http_chat", base_url="http://127.0.0.1:1",
                                   model_name="m", timeout=0.2)
        with pytest.raises(E.BackendUnavailable):
            request_choreography(bundle, backend)


@settings(max_examples=25, deadline=None)
@given(
    n=st.integers(min_value=1, max_value=6),
    n_beats=st.integers(min_value=2, max_value=12),
    seed=st.integers(min_value=0, max_value=1000),
    style=st.sampled_from(["default", "fast", "slow", "high", "low", "adversarial"]),
)
def test_procedural_generate_always_valid(n, n_beats, seed, style):
    vol = FlightVolume()
    script = procedural_generate(make_beats(n_beats), n, seed=seed, style=style, volume=vol)
    pts = script.as_array()
    assert pts.shape == (n, n_beats, 3)
    assert np.all(pts >= vol.lo) and np.all(pts <= vol.hi)
    assert np.all(np.diff(script.timestamps) > 0)
