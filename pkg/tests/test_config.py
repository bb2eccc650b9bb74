"""Configuration tests."""
import pytest

from pyisac.config import ExperimentSpec, load_spec
from pyisac.const import COST_BCE
from pyisac.exceptions import ConfigError

from .util import sample_path, small_spec


def test_defaults_without_a_file():
    spec = load_spec()

    assert spec == ExperimentSpec()
    assert spec.radar.grid_n_r == 256
    assert spec.experiment.trials == 50


def test_load_sample_spec():
    spec = small_spec()

    assert spec.scenario.kind == "A"
    assert spec.radar.n_az == 32
    assert spec.comm.array_sizes == ((4, 4),)
    assert spec.comm.snr_grid_db == (-20, -10)
    assert spec.experiment.clutter_grid == (0, 1)
    assert spec.detect.guard == 8


def test_unknown_key_is_rejected():
    with pytest.raises(ConfigError, match=r"Unknown key \[bandwidth\] in section \[radar\]"):
        load_spec(sample_path("unknown_key.yaml"))


def test_unknown_section_is_rejected():
    with pytest.raises(ConfigError, match="Unknown section"):
        ExperimentSpec.from_dict({"tracking": {}})
    with pytest.raises(ConfigError, match="must be a mapping"):
        ExperimentSpec.from_dict({"radar": [1, 2]})


def test_unreadable_or_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="must be a mapping"):
        load_spec(sample_path("not_a_mapping.yaml"))
    with pytest.raises(ConfigError, match="Cannot read"):
        load_spec(tmp_path / "missing.yaml")

    broken = tmp_path / "broken.yaml"
    broken.write_text("radar: {n_az: [1,\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="Invalid YAML"):
        load_spec(broken)


def test_empty_file_gives_defaults(tmp_path):
    empty = tmp_path / "empty.yaml"
    empty.write_text("", encoding="utf-8")

    assert load_spec(empty) == ExperimentSpec()


@pytest.mark.parametrize(
    "data",
    [
        {"scenario": {"kind": "Z"}},
        {"scenario": {"n_ve": 5}},
        {"radar": {"taper": "kaiser"}},
        {"radar": {"r_min_m": 40.0, "r_max_m": 20.0}},
        {"comm": {"array_sizes": [[4, 0]]}},
        {"comm": {"los_share": 0.0}},
        {"detect": {"nms_iou": 1.0}},
        {"assoc": {"cost": "hinge"}},
        {"experiment": {"threads": 0}},
    ],
)
def test_invalid_values(data):
    with pytest.raises(ConfigError):
        ExperimentSpec.from_dict(data)


def test_lists_become_tuples():
    spec = ExperimentSpec.from_dict(
        {"comm": {"array_sizes": [[8, 4], [16, 4]]}, "assoc": {"cost": COST_BCE}}
    )

    assert spec.comm.array_sizes == ((8, 4), (16, 4))
    assert spec.assoc.cost == COST_BCE
    assert ExperimentSpec.from_dict(spec.as_dict()) == spec


def test_digest_ignores_threads():
    spec = small_spec()

    assert spec.override(threads=4).digest == spec.digest
    assert spec.override(seed=8).digest != spec.digest
    assert spec.override() is spec


def test_override():
    spec = small_spec().override(seed=3, threads=2, dump_images=True)

    assert spec.experiment.seed == 3
    assert spec.experiment.threads == 2
    assert spec.experiment.dump_images is True
    assert spec.radar == small_spec().radar
