import numpy as np
import pytest

from mfqwt.config import (
    EXPERIMENTS,
    OUTPUT_DIR_ENV,
    ConfigError,
    ExperimentConfig,
    apply_overrides,
    parse_config,
    serialize_config,
)
from mfqwt.harness import EnsembleSpec, read_csv_body, run_ensemble, run_experiment


def small(name, **kv):
    return apply_overrides(ExperimentConfig.defaults(name), {k: str(v) for k, v in kv.items()})


class TestConfig:
    @pytest.mark.parametrize("name", EXPERIMENTS)
    def test_defaults_validate_and_round_trip(self, name):
        cfg = ExperimentConfig.defaults(name).validate()
        assert parse_config(serialize_config(cfg)) == cfg

    def test_ranges_and_comments(self):
        cfg = parse_config("experiment = fig6_tau2_cascade  # cascade\nn = 8..10, 12\nq = 2,3\n")
        assert cfg.n == (8, 9, 10, 12) and cfg.q == (2.0, 3.0)

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            parse_config("experiment = fig2_zdensity\nbogus = 1\n")

    def test_missing_experiment(self):
        with pytest.raises(ConfigError):
            parse_config("n = 8\n")

    @pytest.mark.parametrize("kv", [
        {"n2": "4", "n1": "2"},  # not coprime
        {"n": "8", "fit_window": "4,-3"},  # too few levels
        {"n": "13"},  # above dense cap
        {"filter": "db8"},
        {"workers": "0"},
    ])
    def test_invalid(self, kv):
        with pytest.raises(ConfigError):
            small("fig7_tau2_eigvecs", **kv).validate()

    def test_output_env(self, monkeypatch, tmp_path):
        monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path))
        assert ExperimentConfig.defaults("fig2_zdensity").output_path() == tmp_path / "fig2_zdensity.csv"

    def test_runtime_keys_not_echoed(self):
        keys = [k for k, _ in small("fig2_zdensity", workers=3).echo_items()]
        assert "workers" not in keys and "output" not in keys and "seed" in keys


class TestEnsemble:
    def _spec(self, kind="eigvec", per=0):
        return EnsembleSpec(kind, 5, 1, 3, 0, 10, per, (2.0,), "daub4", ("density", "amplitude"))

    def test_count_and_determinism(self):
        a = run_ensemble(self._spec(), 80)
        b = run_ensemble(self._spec(), 80)
        assert a.count == 80 and not a.failures
        np.testing.assert_array_equal(a.tables["density"].values, b.tables["density"].values)

    def test_iterates(self):
        res = run_ensemble(self._spec("iterate", per=8), 20)
        assert res.count == 20
        assert np.all(np.isfinite(res.tables["amplitude"].values))


def _run(tmp_path, name, workers, **kv):
    cfg = small(name, workers=workers, output=str(tmp_path / f"{name}_{workers}.csv"), **kv)
    run_experiment(cfg)
    return read_csv_body(cfg.output_path())


@pytest.mark.parametrize("name,kv", [
    ("fig7_tau2_eigvecs", dict(n="6,7,8", ensemble_size=64)),
    ("fig8_tau2_iterates", dict(n="6,7,8", ensemble_size=40, t=20)),
    ("fig4_tauprime_cascade", dict(n="6,8")),
])
def test_csv_identical_across_workers(tmp_path, name, kv):
    assert _run(tmp_path, name, 1, **kv) == _run(tmp_path, name, 2, **kv)


def test_csv_schema(tmp_path):
    body = _run(tmp_path, "fig6_tau2_cascade", 1, n="8..10", p1="0.3")
    header = body.splitlines()[0].split(",")
    assert header[0] == "experiment" and header[-4:] == ["statistic", "value", "stderr", "count"]
    text = (tmp_path / "fig6_tau2_cascade_1.csv").read_text()
    assert text.startswith("# mfqwt ") and "# seed = 0" in text and "fit_window_levels" in text


def test_fig6_matches_analytic(tmp_path):
    rows = run_experiment(small("fig6_tau2_cascade", n="14", p1="0.3"), write=False)
    vals = {r.statistic: r.value for r in rows}
    assert abs(vals["tau2_density"] - vals["tau2_analytic"]) < 0.1


@pytest.mark.parametrize("name,kv", [
    ("fig2_zdensity", dict(n="6", ensemble_size=16)),
    ("fig3_zamplitude", dict(n="6", ensemble_size=16)),
    ("fig5_tauprime_vs_q", dict(n="6", ensemble_size=16, n2="3,5")),
    ("fig9_tauprime_vs_n2", dict(n="6,7", ensemble_size=16, n2="3")),
    ("cost_table", dict(n="5,6,7", ensemble_size=8, n2="3")),
    ("emulation_demo", dict(n="4")),
])
def test_every_experiment_runs(name, kv):
    rows = run_experiment(small(name, **kv), write=False)
    assert rows and all(np.isfinite(r.value) for r in rows if r.value is not None)


def test_success_threshold_flags_demo():
    rows = run_experiment(small("emulation_demo", n="4", success_threshold="0.999", n2="3"), write=False)
    flags = {r.param("source"): r.value for r in rows if r.statistic == "grover_flagged"}
    assert flags["cascade"] == 1.0
    with pytest.raises(ConfigError):
        small("emulation_demo", success_threshold="1.5").validate()
