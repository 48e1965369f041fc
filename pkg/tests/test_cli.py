"""End-to-end tests of ``pshlab run`` / ``pshlab validate`` through ``main``."""
import csv
import json
import math
import os

import pytest

from pshlab.cli import main
from pshlab.convergence_lab import family_from_recipe


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(cfg if isinstance(cfg, str) else json.dumps(cfg))
    return str(path)


def _run(tmp_path, cfg, *extra):
    out = tmp_path / "out"
    code = main(["run", _write(tmp_path, cfg), "--out", str(out), *extra])
    rep = json.loads((out / "report.json").read_text())
    return code, rep, out


def _read_csv(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    rows = list(csv.DictReader(ln for ln in lines if not ln.startswith("#")))
    return comments, rows


CONSTANT = {"schema_version": 1, "experiment": "classify", "family": {"type": "constant", "seed": 0},
            "parameters": {"j_max": 32}}


def test_constant_family_all_modes_converge(tmp_path):
    code, rep, out = _run(tmp_path, CONSTANT)
    assert code == 0 and rep["status"] == "pass"
    verdicts = rep["results"]["classify"]["constant"]["verdicts"]
    assert {v["status"] for v in verdicts.values()} == {"converges"}
    for stem in ("capacity", "energy", "gap", "l1"):
        assert (out / f"{stem}_constant.csv").exists()


def test_csv_header_lines(tmp_path):
    _, rep, out = _run(tmp_path, CONSTANT)
    comments, rows = _read_csv(out / "capacity_constant.csv")
    assert comments[0].startswith("# ") and comments[1] == "# columns: j, delta, cap"
    assert rows and set(rows[0]) == {"j", "delta", "cap"}
    assert "capacity_constant.csv" in rep["files"]


def test_malformed_json_is_config_error(tmp_path, capsys):
    code, rep, _ = _run(tmp_path, '{"schema_version": 1,\n  "experiment": }')
    assert code == 2 and rep["status"] == "config_error"
    assert "line 2" in rep["errors"][0]


@pytest.mark.parametrize("chi", [{"type": "power", "p": -1}, {"type": "power"}, {"type": "exp"}, "p1"])
def test_malformed_chi_is_config_error(tmp_path, chi):
    cfg = dict(CONSTANT, parameters={"chi": chi})
    code, rep, _ = _run(tmp_path, cfg)
    assert code == 2
    assert "parameters/chi" in rep["errors"][0]
    assert main(["validate", _write(tmp_path, cfg, "v.json")]) == 2


def test_semantic_error_is_config_error(tmp_path):
    cfg = {"schema_version": 1, "experiment": "distance",
           "potentials": [{"type": "reference"}]}
    code, rep, _ = _run(tmp_path, cfg)
    assert code == 2 and "exactly 2" in rep["errors"][0]


def test_model_mismatch_is_config_error(tmp_path):
    cfg = {"schema_version": 1, "experiment": "envelope", "model": "toric1d",
           "potentials": [{"type": "atoms", "atoms": [{"theta": 0, "azimuth": 0, "mass": 1}]}]}
    assert _run(tmp_path, cfg)[0] == 2


def test_failed_check_exits_one(tmp_path):
    # kappa = 1 would need every ratio to equal 1 exactly
    cfg = {"schema_version": 1, "experiment": "sweep",
           "parameters": {"eps": [1.0], "C": [1.0, 4.0], "p": [1.0], "kappa_max": 1.0}}
    code, rep, out = _run(tmp_path, cfg)
    assert code == 1 and rep["status"] == "fail"
    assert rep["failed_checks"]
    assert (out / "sweep_p1.csv").exists()


def test_pshlab_out_overrides_flag(tmp_path, monkeypatch):
    env_out = tmp_path / "from_env"
    monkeypatch.setenv("PSHLAB_OUT", str(env_out))
    code = main(["run", _write(tmp_path, CONSTANT), "--out", str(tmp_path / "flag")])
    assert code == 0
    assert (env_out / "report.json").exists()
    assert not (tmp_path / "flag").exists()


def test_seed_override_recorded(tmp_path):
    _, rep, _ = _run(tmp_path, CONSTANT, "--seed", "7")
    assert rep["seed"] == 7 and rep["config"]["seed"] == 7


def test_report_is_strict_json(tmp_path):
    cfg = {"schema_version": 1, "experiment": "energy",
           "potentials": [{"type": "truncated_log", "eps": 1.0, "C": "inf"}, {"type": "reference"}]}
    code, rep, out = _run(tmp_path, cfg)
    assert code == 0
    text = (out / "report.json").read_text()
    assert "NaN" not in text and "Infinity" not in text
    first, second = rep["results"]["energy"]
    assert first["membership"]["member"] is False and first["energy_E"] is None
    assert second["membership"]["member"] is True and math.isclose(second["energy_E"], 0.0, abs_tol=1e-9)


def test_empty_table_note_direct(tmp_path):
    from pshlab.report import Report, Table, emit_plot_data
    rep = Report(config={}, seed=0)
    rep.tables.append(Table("nothing", ["j", "x"], [], "an empty table"))
    assert emit_plot_data(rep, tmp_path) == []
    assert rep.notes == ["table 'nothing' is empty; no CSV written"]


def test_recipe_round_trip_through_report(tmp_path):
    recipe = {"type": "energy", "eps": "2^-j", "C": "j"}
    cfg = {"schema_version": 1, "experiment": "classify", "family": recipe, "parameters": {"j_max": 32}}
    code, rep, _ = _run(tmp_path, cfg)
    assert code == 0
    again = family_from_recipe(rep["config"]["family"])
    ref = family_from_recipe(recipe)
    assert again.recipe == ref.recipe
    assert (again.member(5).f_values == ref.member(5).f_values).all()


def test_ma_masses_sum_to_one(tmp_path):
    cfg = {"schema_version": 1, "experiment": "ma",
           "potentials": [{"type": "random", "seed": 2}, {"type": "truncated_log", "eps": 0.5, "C": 3}]}
    code, rep, out = _run(tmp_path, cfg)
    assert code == 0
    _, rows = _read_csv(out / "ma.csv")
    for i in (0, 1):
        assert math.isclose(sum(float(r["mass"]) for r in rows if r["potential"] == str(i)), 1.0, abs_tol=1e-9)


def test_capacity_routes_agree(tmp_path):
    cfg = {"schema_version": 1, "experiment": "capacity", "grid": {"t_min": -20, "t_max": 20, "n_nodes": 801},
           "sets": [{"intervals": [[-1, 1]]}, {"intervals": [["-inf", -3], [2, 4]]}]}
    code, rep, _ = _run(tmp_path, cfg)
    assert code == 0 and len(rep["checks"]) == 2


def test_distance_and_extract(tmp_path):
    cfg = {"schema_version": 1, "experiment": "distance",
           "potentials": [{"type": "truncated_log", "eps": 0.5, "C": 2}, {"type": "reference"}]}
    code, rep, _ = _run(tmp_path, cfg)
    assert code == 0 and rep["results"]["distance"]["I_chi"] > 0
    cfg = {"schema_version": 1, "experiment": "extract", "family": {"type": "tuned"},
           "parameters": {"method": "cauchy", "members": 12}}
    code, rep, out = _run(tmp_path, cfg)
    assert code == 0
    assert (out / "cauchy_distances.csv").exists()


def test_figures_written_next_to_csv(tmp_path):
    _, rep, out = _run(tmp_path, CONSTANT, "--figures")
    pngs = sorted(p for p in os.listdir(out) if p.endswith(".png"))
    csvs = sorted(p for p in os.listdir(out) if p.endswith(".csv"))
    assert pngs and {p[:-4] for p in pngs} <= {c[:-4] for c in csvs}
    assert set(pngs) <= set(rep["files"])


def test_validate_ok(tmp_path, capsys):
    assert main(["validate", _write(tmp_path, CONSTANT)]) == 0
    assert "ok" in capsys.readouterr().out


def test_paper_suite_subset(tmp_path):
    cfg = {"schema_version": 1, "experiment": "paper_suite", "parameters": {"criteria": [2, 4]}}
    code, rep, out = _run(tmp_path, cfg)
    assert code == 0 and len(rep["checks"]) == 2
    assert (out / "suite_capacity.csv").exists()


def test_example_configs_validate():
    root = os.path.join(os.path.dirname(__file__), os.pardir, "configs")
    for name in sorted(os.listdir(root)):
        assert main(["validate", os.path.join(root, name)]) == 0, name


def test_crash_still_writes_report(tmp_path, monkeypatch):
    from pshlab import experiments

    def boom(prep, cfg, rep, jobs):
        raise RuntimeError("solver exploded")

    monkeypatch.setitem(experiments.EXPERIMENTS, "solve", (experiments.prep_solve, boom))
    code, rep, _ = _run(tmp_path, {"schema_version": 1, "experiment": "solve", "measure": {"type": "reference"}})
    assert code == 1 and rep["status"] == "fail"
    assert "RuntimeError" in rep["failed_checks"][0]
