import json
import os

import pytest

from src.core.errors import DataError, ValidationError
from src.data.annotations import load_annotations, parse_annotations, save_annotations


def _raw():
    return {
        "labels": ["take", "chop"],
        "videos": [
            {
                "id": "v1",
                "duration_s": 30.0,
                "subset": "training",
                "actions": [
                    {"start_s": 1.0, "end_s": 4.0, "label": "chop"},
                    {"start_s": 10.0, "end_s": 12.5, "label": "take"},
                ],
            },
            {"id": "v2", "duration_s": 12.0, "subset": "validation", "actions": []},
        ],
    }


def test_parse_maps_labels_to_indices():
    ann = parse_annotations(_raw())
    assert ann.num_classes == 2
    actions = ann.by_id()["v1"].actions
    assert [(a.start, a.end, a.label) for a in actions] == [(1.0, 4.0, 1), (10.0, 12.5, 0)]
    assert [v.video_id for v in ann.subset("validation")] == ["v2"]
    assert len(ann.subset(None)) == 2


def test_save_then_load(tmp_path):
    path = os.path.join(tmp_path, "a.json")
    save_annotations(path, parse_annotations(_raw()))
    again = load_annotations(path)
    assert again.to_dict() == parse_annotations(_raw()).to_dict()


@pytest.mark.parametrize(
    "start,end",
    [(4.0, 4.0), (5.0, 3.0), (-1.0, 2.0), (29.0, 31.0)],
)
def test_invalid_action_bounds(start, end):
    raw = _raw()
    raw["videos"][0]["actions"][0].update({"start_s": start, "end_s": end})
    with pytest.raises(ValidationError) as info:
        parse_annotations(raw)
    assert "v1.actions[0]" in str(info.value)


def test_unknown_label_and_missing_id():
    raw = _raw()
    raw["videos"][0]["actions"][0]["label"] = "stir"
    with pytest.raises(ValidationError):
        parse_annotations(raw)
    raw = _raw()
    del raw["videos"][1]["id"]
    with pytest.raises(ValidationError):
        parse_annotations(raw)


def test_load_errors_are_data_errors(tmp_path):
    with pytest.raises(DataError):
        load_annotations(os.path.join(tmp_path, "absent.json"))
    path = os.path.join(tmp_path, "broken.json")
    with open(path, "w") as f:
        f.write("{not json")
    with pytest.raises(DataError):
        load_annotations(path)
    with open(path, "w") as f:
        json.dump({"labels": []}, f)
    with pytest.raises(ValidationError):
        load_annotations(path)
