import csv
import os

import pytest
import yaml

import cli
from dataio import MESSIDOR_GRADE_COUNTS, load_csv
from errors import ConfigError
from fusion import STRATEGIES
from harness import emit_report, load_manifest, run_experiment
from selection import ENERGY_KINDS

ROW = [0.9, 1, 12, 10, 8, 6, 4, 2] + [0.01] * 9 + [0.52, 0.3]


def config_document(out_dir):
    return {
        "data": {"synth": {"n": 160, "separation": 3, "seed": 1}},
        "scenario": "nodr_vs_dr",
        "pool": [{"kind": "naive_bayes"}, {"kind": "decision_tree", "max_depth": 2}],
        "fusion": ["avg", "wmaj"],
        "search": "backward",
        "energy": "accuracy",
        "cv": {"k": 3, "seed": 0},
        "out_dir": str(out_dir),
    }


def write_config(path, document):
    with open(path, "w") as handle:
        yaml.safe_dump(document, handle)
    return str(path)


def read_bytes(directory):
    contents = {}
    for root, _, files in os.walk(directory):
        for name in files:
            path = os.path.join(root, name)
            with open(path, "rb") as handle:
                contents[os.path.relpath(path, directory)] = handle.read()
    return contents


class TestParseConfig:
    def test_keywords_expand_to_the_vocabulary(self, tmp_path):
        document = config_document(tmp_path)
        document.update(fusion="all-strategies", energy="all-energies", scenario="all-scenarios")
        config = cli.parse_config(document)
        assert config.fusion == STRATEGIES
        assert config.energy == ENERGY_KINDS
        assert [s.value for s in config.scenarios] == ["r0_vs_r1", "nodr_vs_dr"]

    @pytest.mark.parametrize("path,value,key", [
        (("bogus",), 1, "bogus"),
        (("data", "synth", "sigma"), 2, "data.synth.sigma"),
        (("pool", 1, "depth"), 3, "pool.1.depth"),
        (("pool", 0, "kind"), "svm", "pool.0.kind"),
        (("cv", "folds"), 5, "cv.folds"),
        (("fusion",), "median", "fusion"),
        (("cv", "k"), "ten", "cv.k"),
    ])
    def test_errors_name_the_dotted_key(self, tmp_path, path, value, key):
        document = config_document(tmp_path)
        node = document
        for part in path[:-1]:
            node = node[part]
        node[path[-1]] = value
        with pytest.raises(ConfigError) as info:
            cli.parse_config(document)
        assert info.value.key == key

    def test_relative_data_path_follows_the_config_file(self, tmp_path):
        document = config_document(tmp_path)
        document["data"] = {"path": "features.csv"}
        config = cli.parse_config(document, base_dir=str(tmp_path))
        assert config.data_path == os.path.join(str(tmp_path), "features.csv")


class TestOverrides:
    def test_values_use_yaml_scalars(self, tmp_path):
        document = cli.apply_override(config_document(tmp_path), "cv.seed=7")
        assert document["cv"]["seed"] == 7
        document = cli.apply_override(document, "pool.1.max_depth=4")
        assert document["pool"][1]["max_depth"] == 4
        document = cli.apply_override(document, "fusion=[maj, pro]")
        assert document["fusion"] == ["maj", "pro"]

    def test_original_is_untouched(self, tmp_path):
        original = config_document(tmp_path)
        cli.apply_override(original, "cv.seed=7")
        assert original["cv"]["seed"] == 0

    @pytest.mark.parametrize("assignment", ["cv.seed", "pool.5.k=3", "cv.k.x=1"])
    def test_bad_overrides(self, tmp_path, assignment):
        with pytest.raises(ConfigError):
            cli.apply_override(config_document(tmp_path), assignment)


class TestRun:
    def test_happy_path(self, tmp_path, capsys):
        out = tmp_path / "out"
        path = write_config(tmp_path / "experiment.yaml", config_document(out))
        assert cli.main(["run", "--config", path]) == cli.EXIT_OK
        assert capsys.readouterr().out.strip() == str(out)
        assert (out / "manifest.json").exists()
        assert (out / "grid_nodr_vs_dr_backward.txt").exists()

    def test_unknown_strategy_exits_2(self, tmp_path, capsys):
        document = config_document(tmp_path / "out")
        document["fusion"] = "median"
        path = write_config(tmp_path / "experiment.yaml", document)
        assert cli.main(["run", "--config", path]) == cli.EXIT_CONFIG
        assert "fusion" in capsys.readouterr().err

    @pytest.mark.parametrize("field,value", [
        ("proportions", [0.5, 0.5, 0.5, 0.5]),
        ("n", 2),
        ("separation", -1.0),
    ])
    def test_bad_synth_parameters_exit_2(self, tmp_path, capsys, field, value):
        document = config_document(tmp_path / "out")
        document["data"]["synth"][field] = value
        path = write_config(tmp_path / "experiment.yaml", document)
        assert cli.main(["run", "--config", path]) == cli.EXIT_CONFIG
        assert f"data.synth.{field}" in capsys.readouterr().err
        assert not (tmp_path / "out").exists()

    def test_missing_data_file_exits_3(self, tmp_path):
        document = config_document(tmp_path / "out")
        document["data"] = {"path": "does_not_exist.csv"}
        path = write_config(tmp_path / "experiment.yaml", document)
        assert cli.main(["run", "--config", path]) == cli.EXIT_DATA

    def test_seed_override_changes_only_the_seed(self, tmp_path):
        first = write_config(tmp_path / "a.yaml", config_document(tmp_path / "a"))
        second = write_config(tmp_path / "b.yaml", config_document(tmp_path / "b"))
        assert cli.main(["run", "--config", first]) == 0
        assert cli.main(["run", "--config", second, "--override", "cv.seed=7"]) == 0
        a = load_manifest(str(tmp_path / "a"))["config"]
        b = load_manifest(str(tmp_path / "b"))["config"]
        assert b["cv"]["seed"] == 7
        b["cv"]["seed"] = a["cv"]["seed"]
        assert a == b

    def test_one_thread_reproduces_the_default(self, tmp_path):
        first = write_config(tmp_path / "a.yaml", config_document(tmp_path / "a"))
        second = write_config(tmp_path / "b.yaml", config_document(tmp_path / "b"))
        assert cli.main(["run", "--config", first]) == 0
        assert cli.main(["run", "--config", second, "--threads", "1"]) == 0
        assert read_bytes(tmp_path / "a") == read_bytes(tmp_path / "b")

    def test_library_path_gives_the_same_files(self, tmp_path):
        path = write_config(tmp_path / "experiment.yaml", config_document(tmp_path / "cli"))
        assert cli.main(["run", "--config", path]) == 0
        emit_report(run_experiment(cli.load_config(path)), str(tmp_path / "library"))
        assert read_bytes(tmp_path / "cli") == read_bytes(tmp_path / "library")


class TestSynth:
    def test_messidor_population(self, tmp_path):
        out = str(tmp_path / "cohort.csv")
        assert cli.main(["synth", "--n", "1200", "--separation", "2", "--seed", "0", "--out", out]) == 0
        assert load_csv(out).grade_counts() == MESSIDOR_GRADE_COUNTS

    def test_same_flags_same_file(self, tmp_path):
        paths = [str(tmp_path / f"{name}.csv") for name in ("a", "b")]
        for path in paths:
            assert cli.main(["synth", "--n", "300", "--seed", "4", "--out", path]) == 0
        with open(paths[0], "rb") as a, open(paths[1], "rb") as b:
            assert a.read() == b.read()

    def test_bad_proportions_exit_2(self, tmp_path):
        out = str(tmp_path / "cohort.csv")
        argv = ["synth", "--n", "1200", "--proportions", "0.46,0.1275,0.2058,0.2167", "--out", out]
        assert cli.main(argv) == cli.EXIT_CONFIG
        assert not os.path.exists(out)


class TestValidate:
    def write(self, path, rows):
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow([f"chi{i}" for i in range(19)] + ["grade"])
            writer.writerows(rows)
        return str(path)

    def test_clean_file(self, tmp_path):
        assert cli.main(["validate", "--data", self.write(tmp_path / "ok.csv", [ROW + [0], ROW + [1]])]) == 0

    def test_range_violation_reports_its_line(self, tmp_path, capsys):
        bad = list(ROW)
        bad[0] = 1.5
        path = self.write(tmp_path / "bad.csv", [ROW + [0], bad + [1]])
        assert cli.main(["validate", "--data", path]) == cli.EXIT_DATA
        assert "line 3" in capsys.readouterr().out

    def test_truncated_row(self, tmp_path, capsys):
        path = self.write(tmp_path / "short.csv", [ROW[:12]])
        assert cli.main(["validate", "--data", path]) == cli.EXIT_DATA
        assert "expected 20 columns" in capsys.readouterr().out
