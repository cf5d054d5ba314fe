import json
import math

import numpy as np
import pytest

from maxkant import harness, shipped_configs
from maxkant.harness import (BoundLedger, BoundRow, ExperimentConfig, emit_reports, fit_rate,
                             kernel_constants, run_config, run_kfunctional_bound,
                             run_lipschitz_rate, run_shifted_variant, run_theorem_bound_real_line)
from maxkant.kernels import bspline, fejer

SMALL = [4, 8, 16]


def cfg(**kw):
    base = dict(name="t", kernel="bspline:2", phi="p:1", signal="hat", n_grid=SMALL, H=8)
    base.update(kw)
    return ExperimentConfig.from_dict(base)


class TestConfig:
    @pytest.mark.parametrize("bad", [
        {"experiment": "nope"}, {"alpha": 1.0}, {"n_grid": [8, 4]}, {"n_grid": []},
        {"n_grid": [0, 4]}, {"colour": "red"}])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            cfg(**bad)

    def test_unknown_names_fail_at_load(self):
        with pytest.raises(KeyError):
            cfg(kernel="gauss")
        with pytest.raises(KeyError):
            cfg(signal="sawtooth")

    def test_ladder_string(self):
        assert cfg(ladder="dyadic:3").ladder == [1.0, 0.5, 0.25, 0.125]

    @pytest.mark.parametrize("suffix", [".toml", ".json"])
    def test_round_trip(self, tmp_path, suffix):
        c = cfg(shift=-0.25, experiment="shifted", signal="sin")
        path = tmp_path / f"c{suffix}"
        c.save(path)
        assert ExperimentConfig.load(path) == c

    def test_output_path_env(self, monkeypatch, tmp_path):
        c = cfg(output_dir="elsewhere")
        monkeypatch.delenv(harness.OUTPUT_ENV, raising=False)
        assert str(c.output_path()) == "elsewhere"
        monkeypatch.setenv(harness.OUTPUT_ENV, str(tmp_path))
        assert c.output_path() == tmp_path

    def test_shipped_configs_load(self):
        paths = shipped_configs()
        assert len(paths) >= 12
        kinds = {ExperimentConfig.load(p).experiment for p in paths}
        assert kinds == {"bound-real", "bound-interval", "rate", "shifted"}


class TestConstants:
    def test_compact_kernel(self):
        kc = kernel_constants(bspline(2), "real_line", 0.5, [4])
        assert kc.chi4.M == 0.0 and kc.chi4.gamma == math.inf
        assert kc.M0_tau == pytest.approx(2.0)
        assert kc.sup_norm == pytest.approx(1.0) and kc.l1_norm == pytest.approx(1.0)

    def test_fejer_interval_flavor(self):
        kc = kernel_constants(fejer(), "compact", need_m1=True)
        assert kc.chi4 is None and kc.m1 > 0 and kc.m0 == pytest.approx(0.5)
        assert kc.a_chi < fejer().a_chi("real_line")


class TestBoundLedger:
    def test_zero_signal(self):
        led = run_theorem_bound_real_line(cfg(signal="zero"))
        assert all(r.lhs == 0.0 and r.rhs == 0.0 for r in led.rows)
        assert led.decay_ok() is None and led.passed

    def test_violation_detected(self):
        led = BoundLedger(cfg(), 1.0, {})
        led.rows = [BoundRow(4, 1.0, 0.0, 0.1, 0.0, 0.1, 0.1, 0.1, True),
                    BoundRow(8, 0.5, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, True)]
        assert [r.n for r in led.violations()] == [4] and not led.passed
        led.rows[0].asserted = False
        assert led.passed

    def test_decay_required(self):
        led = BoundLedger(cfg(), 1.0, {})
        led.rows = [BoundRow(4, 0.1, 0.0, 1, 0, 1, 1, 1, True),
                    BoundRow(8, 0.2, 0.0, 1, 0, 1, 1, 1, True)]
        assert led.decay_ok() is False and not led.passed

    def test_hat_passes(self):
        led = run_theorem_bound_real_line(cfg())
        assert led.passed and led.lam == 1.0
        assert all(r.term1 >= r.term1_coarse and r.term3 >= r.term3_coarse for r in led.rows)
        assert led.rows[-1].lhs < led.rows[0].lhs

    def test_negative_signal_needs_shift(self):
        with pytest.raises(ValueError):
            run_theorem_bound_real_line(cfg(signal="sin"))
        with pytest.raises(ValueError):
            run_theorem_bound_real_line(cfg(domain="interval:0:1"))

    def test_shifted_defaults_to_lower_bound(self):
        led = run_shifted_variant(cfg(signal="sin", experiment="shifted"))
        assert led.constants["shift"] == -1.0 and led.passed

    def test_zero_shift_matches_plain(self, tmp_path):
        a = run_config(cfg(name="a"), tmp_path)[1]["csv"].read_bytes()
        b = run_config(cfg(name="b", experiment="shifted", shift=0.0), tmp_path)[1]["csv"].read_bytes()
        assert a == b


class TestRate:
    def test_fit_rate_synthetic(self):
        ns = [32, 64, 128, 256]
        rho, resid = fit_rate(ns, [3.0 * n ** -0.7 for n in ns])
        assert rho == pytest.approx(0.7) and resid < 1e-12

    def test_zero_signal_skips(self):
        fit, _ = run_lipschitz_rate(cfg(signal="zero", experiment="rate",
                                        n_grid=[4, 8, 16, 32, 64]))
        assert fit.skipped and fit.passed

    def test_needs_five_points(self):
        with pytest.raises(ValueError):
            run_lipschitz_rate(cfg(experiment="rate"))


class TestKFunctional:
    def test_zero_signal(self):
        rep = run_kfunctional_bound(cfg(kernel="fejer", signal="zero", domain="interval:0:1",
                                        experiment="bound-interval"))
        assert all(r.lhs == 0.0 for r in rep.rows if r.asserted)

    def test_sinsq(self):
        rep = run_kfunctional_bound(cfg(kernel="fejer", signal="sinsq", domain="interval:0:1",
                                        experiment="bound-interval", n_grid=[8, 16, 32]))
        c = rep.constants
        assert c["lambda1"] == pytest.approx(c["lambda0"] * c["kernel"]["a_chi"]
                                             / (6 * c["kernel"]["m0"]))
        assert rep.passed
        assert all(r.lhs <= r.witness_rhs for r in rep.rows if r.asserted)

    def test_below_interval_threshold(self):
        rep = run_kfunctional_bound(cfg(kernel="fejer", signal="sinsq",
                                        domain="interval:0:0.5", experiment="bound-interval",
                                        n_grid=[1, 16]))
        assert not rep.rows[0].asserted and math.isnan(rep.rows[0].lhs) and rep.rows[0].note
        assert rep.rows[1].asserted

    def test_real_line_rejected(self):
        with pytest.raises(ValueError):
            run_kfunctional_bound(cfg(experiment="bound-interval"))


class TestReports:
    def test_empty_ledger_has_header_only(self, tmp_path):
        paths = emit_reports(None, tmp_path, "empty")
        assert paths["csv"].read_text() == "n,lhs,term1,term2,term3,slack\n"
        assert json.loads(paths["json"].read_text()) == {}

    def test_json_summary_reloads_as_config(self, tmp_path):
        c = cfg(name="rt")
        paths = run_config(c, tmp_path)[1]
        assert ExperimentConfig.load(paths["json"]) == c

    def test_deterministic(self, tmp_path):
        c = cfg(kernel="fejer", name="det")
        first = run_config(c, tmp_path / "1")[1]
        second = run_config(c, tmp_path / "2")[1]
        assert first["csv"].read_bytes() == second["csv"].read_bytes()
        assert first["json"].read_bytes() == second["json"].read_bytes()

    def test_csv_format(self, tmp_path):
        text = run_config(cfg(name="fmt"), tmp_path)[1]["csv"].read_text().splitlines()
        assert text[0] == "n,lhs,term1,term2,term3,slack"
        assert [int(line.split(",")[0]) for line in text[1:]] == SMALL
        for line in text[1:]:
            float(line.split(",")[-1])

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError):
            emit_reports(None, blocker / "sub", "s")

    def test_nonfinite_json(self):
        assert harness._jsonable([math.inf, math.nan, np.float64(2.0)]) == ["inf", "nan", 2.0]
