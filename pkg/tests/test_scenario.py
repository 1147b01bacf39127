"""
Tests for the scenario model: loading, saving and validation.
"""

import copy

import pytest

from core.errors import ParseError, ValidationError
from core.scenario import load_scenario, save_scenario, scenario_from_dict, scenario_to_dict
from tests.conftest import commute_document, crossing_document, with_changes


class TestLoading:
    def test_grid_scenario_loads(self, grid_path):
        scenario = load_scenario(grid_path)
        assert len(scenario.junctions) == 9
        assert len(scenario.streets) == 24
        assert len(scenario.population) == 20
        assert sum(j.has_light for j in scenario.junctions) == 2

    def test_commute_scenario_loads(self, commute_path):
        scenario = load_scenario(commute_path)
        assert scenario.population[0].depart_work_tick == 20
        assert scenario.place_map("home")["h1"].activity == "Watch TV"
        assert scenario.params.max_ticks == 200

    def test_save_then_load_is_identity(self, tmp_path, crossing):
        path = save_scenario(crossing, str(tmp_path / "crossing.yaml"))
        assert load_scenario(path) == crossing

    def test_round_trip_keeps_camel_case_keys(self, commute):
        document = scenario_to_dict(commute)
        assert document["streets"][0]["speedLimit"] == 10
        assert document["streets"][0]["from"] == "A"
        assert "kind" not in document["homes"][0]
        assert document["params"]["gapMin"] == 5

    def test_defaults_fill_missing_params(self):
        document = commute_document()
        document["params"] = {}
        scenario = scenario_from_dict(document)
        assert scenario.params.tick_seconds == 1
        assert scenario.params.green_ticks == 10
        assert scenario.params.max_ticks == 5000

    def test_helpers(self, crossing):
        assert crossing.incoming("B") == ["s1", "s3"]
        assert crossing.outgoing("B") == ["s2", "s4"]
        assert [p.id for p in crossing.places_at("C")] == ["w1"]

    def test_missing_file_is_parse_error(self, tmp_path):
        with pytest.raises(ParseError):
            load_scenario(str(tmp_path / "nope.yaml"))

    def test_malformed_yaml_is_parse_error(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("junctions: [unclosed\n")
        with pytest.raises(ParseError):
            load_scenario(str(path))

    def test_non_mapping_is_parse_error(self):
        with pytest.raises(ParseError):
            scenario_from_dict(["junctions"])


class TestValidation:
    def _offending(self, document):
        with pytest.raises(ValidationError) as info:
            scenario_from_dict(document)
        return info.value.offending_id

    def test_street_with_unknown_junction(self):
        assert self._offending(with_changes(commute_document(), "streets", 0, to="Z")) == "Z"

    def test_duplicate_street_id(self):
        document = with_changes(commute_document(), "streets", 1, id="s1")
        assert self._offending(document) == "s1"

    def test_duplicate_agent(self):
        document = commute_document()
        document["population"].append(dict(document["population"][0]))
        assert self._offending(document) == "alice"

    def test_non_positive_length(self):
        assert self._offending(with_changes(commute_document(), "streets", 0, length=0)) == "s1"

    def test_street_shorter_than_gap(self):
        assert self._offending(with_changes(commute_document(), "streets", 1, length=3)) == "s2"

    def test_self_loop_street(self):
        assert self._offending(with_changes(commute_document(), "streets", 0, to="A")) == "s1"

    def test_unknown_key_is_rejected(self):
        document = with_changes(commute_document(), "junctions", 0, colour="red")
        assert self._offending(document) == "colour"

    def test_kind_key_is_rejected(self):
        document = with_changes(commute_document(), "homes", 0, kind="work")
        assert self._offending(document) == "kind"

    def test_shared_home_is_rejected(self):
        document = commute_document()
        document["works"].append({"id": "w2", "junction": "B", "activity": "Work"})
        document["population"].append(
            {"agentId": "bob", "home": "h1", "work": "w2", "departHomeTick": 5, "departWorkTick": 25}
        )
        assert self._offending(document) == "h1"

    def test_shared_work_is_rejected(self):
        document = commute_document()
        document["homes"].append({"id": "h2", "junction": "A", "activity": "Watch TV"})
        document["population"].append(
            {"agentId": "bob", "home": "h2", "work": "w1", "departHomeTick": 5, "departWorkTick": 25}
        )
        assert self._offending(document) == "w1"

    def test_home_and_work_may_share_an_id(self):
        document = with_changes(commute_document(), "works", 0, id="h1")
        document = with_changes(document, "population", 0, work="h1")
        assert scenario_from_dict(document).population[0].work == "h1"

    def test_person_with_unknown_home(self):
        assert self._offending(with_changes(commute_document(), "population", 0, home="h9")) == "h9"

    def test_place_with_unknown_junction(self):
        assert self._offending(with_changes(commute_document(), "works", 0, junction="Q")) == "Q"

    def test_work_departure_before_home_departure(self):
        document = with_changes(commute_document(), "population", 0, departHomeTick=30)
        assert self._offending(document) == "alice"

    def test_home_and_work_on_same_junction(self):
        assert self._offending(with_changes(commute_document(), "works", 0, junction="A")) == "alice"

    def test_unroutable_commute(self):
        document = commute_document()
        document["streets"].pop(1)
        assert self._offending(document) == "alice"

    def test_lit_junction_needs_an_approach(self):
        document = crossing_document()
        document["junctions"].append({"id": "D", "hasLight": True})
        assert self._offending(document) == "D"

    def test_non_positive_param(self):
        document = commute_document()
        document["params"]["gapMin"] = 0
        assert self._offending(document) == "gapMin"

    def test_missing_section(self):
        document = copy.deepcopy(commute_document())
        del document["works"]
        assert self._offending(document) == "works"
