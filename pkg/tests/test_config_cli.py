import math
import subprocess
import sys
from argparse import Namespace

import numpy as np
import pytest

from kaonlab.cli import main
from kaonlab.config import build_run_config, parse_config_file
from kaonlab.core import DecayModel, KaonParams
from kaonlab.entangled import BipartiteState, Family, joint_pdf_11, joint_survival_11
from kaonlab.inference import extract_epsilon
from kaonlab.sampler import RunSeed, read_events, sample_decay_times
from kaonlab.single_models import cronin_fitch_state, pdf, survival_standard

# every config knob: key, flag attribute, config-file value, flag value,
# default, and how to read the resolved value back out of RunConfig
KNOBS = [
    ("kaon.gamma_s", "gamma_s", "2.0e10", 3.0e10, 1.0 / 8.92e-11,
     lambda rc: rc.params.gamma_s),
    ("kaon.gamma_l", "gamma_l", "1.5e7", 1.6e7, 1.0 / 5.17e-8,
     lambda rc: rc.params.gamma_l),
    ("kaon.delta_m", "delta_m", "4.0e9", 6.0e9, None,
     lambda rc: rc.params.delta_m),
    ("kaon.epsilon_abs", "epsilon_abs", "3.0e-3", 4.0e-3, 2.27e-3,
     lambda rc: abs(rc.params.epsilon)),
    ("kaon.epsilon_arg_deg", "epsilon_arg_deg", "10.0", 20.0, 43.37,
     lambda rc: math.degrees(np.angle(rc.params.epsilon))),
    ("detector.window_tau", "window_tau", "1e-12", 2e-12, 0.0,
     lambda rc: rc.detector.window_tau),
    ("detector.t_min", "t_min", "1e-12", 2e-12, 0.0,
     lambda rc: rc.detector.t_min),
    ("detector.t_max", "t_max", "1e-7", 2e-7, 1e-6,
     lambda rc: rc.detector.t_max),
    ("detector.n_bins", "bins", "64", 128, 100,
     lambda rc: rc.detector.n_bins),
    ("detector.background_rate", "background_rate", "12.5", 25.0, 0.0,
     lambda rc: rc.detector.background_rate),
    ("detector.efficiency", "efficiency", "0.5", 0.25, 1.0,
     lambda rc: rc.detector.efficiency),
    ("detector.branching_charged", "branching_charged", "0.6", 0.7, 2.0 / 3.0,
     lambda rc: rc.detector.branching_charged),
    ("seed", "seed", "111", 222, 20250808, lambda rc: rc.seed.seed),
    ("stream_id", "stream_id", "3", 4, 0, lambda rc: rc.seed.stream_id),
    ("model", "model", "hybrid", "twfo", None, lambda rc: rc.model_name),
    ("out", "out", "cfg.csv", "flag.csv", None, lambda rc: rc.out),
]


def empty_args(**overrides):
    names = {knob[1] for knob in KNOBS}
    values = {name: None for name in names}
    values.update(overrides)
    return Namespace(**values)


class TestConfigFile:
    def test_parse_with_comments_and_blanks(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# a comment\n"
            "\n"
            "kaon.gamma_s = 2.0e10   # trailing comment\n"
            "seed=42\n")
        cfg = parse_config_file(path)
        assert cfg == {"kaon.gamma_s": "2.0e10", "seed": "42"}

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("kaon.gamma_x = 1\n")
        with pytest.raises(ValueError):
            parse_config_file(path)

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("just words\n")
        with pytest.raises(ValueError):
            parse_config_file(path)

    @pytest.mark.parametrize("knob", KNOBS, ids=[k[0] for k in KNOBS])
    def test_precedence_per_knob(self, knob):
        key, attr, cfg_value, flag_value, default, read = knob
        config = {key: cfg_value}
        # config beats default
        resolved = read(build_run_config(empty_args(), config))
        expected_cfg = type(flag_value)(cfg_value) if not isinstance(flag_value, str) \
            else cfg_value
        assert resolved == pytest.approx(expected_cfg) \
            if not isinstance(expected_cfg, str) else resolved == expected_cfg
        # flag beats config
        resolved = read(build_run_config(empty_args(**{attr: flag_value}), config))
        assert resolved == pytest.approx(flag_value) \
            if not isinstance(flag_value, str) else resolved == flag_value
        # default when neither is given
        if default is not None:
            resolved = read(build_run_config(empty_args(), {}))
            assert resolved == pytest.approx(default)

    def test_invalid_config_fails_before_compute(self):
        with pytest.raises(ValueError):
            build_run_config(empty_args(), {"detector.efficiency": "1.5"})
        with pytest.raises(ValueError):
            build_run_config(empty_args(), {"kaon.gamma_s": "1.0",
                                            "kaon.gamma_l": "2.0"})


class TestCliGolden:
    def test_predict_curves_match_library(self, tmp_path):
        out = tmp_path / "curve.csv"
        code = main(["predict", "--model", "standard", "--state", "k0",
                     "--t-max", "2e-8", "--bins", "400", "--out", str(out)])
        assert code == 0
        rows = out.read_text().splitlines()
        assert rows[0] == "t_s,survival,pdf"
        assert len(rows) == 401
        data = np.array([[float(x) for x in row.split(",")] for row in rows[1:]])
        params = KaonParams()
        state = cronin_fitch_state(params, +1)
        assert data[:, 1] == pytest.approx(survival_standard(state, data[:, 0]),
                                           rel=1e-12)
        assert data[:, 2] == pytest.approx(pdf(DecayModel.STANDARD, state, data[:, 0]),
                                           rel=1e-12, abs=1e-300)
        # the long-lived plateau is visible at the end of the range
        tail = data[-1, 1] / math.exp(-params.gamma_l * data[-1, 0])
        plateau = abs(params.epsilon) ** 2 / abs(1 + params.epsilon) ** 2
        assert tail == pytest.approx(plateau, rel=1e-6)

    def test_predict_cp_conserving_time_operator_is_pure_exponential(self, tmp_path):
        out = tmp_path / "c.csv"
        code = main(["predict", "--model", "twfo", "--epsilon-abs", "0",
                     "--t-max", "5e-10", "--bins", "50", "--out", str(out)])
        assert code == 0
        rows = out.read_text().splitlines()[1:]
        data = np.array([[float(x) for x in row.split(",")] for row in rows])
        p = KaonParams(epsilon=0.0)
        assert data[:, 2] == pytest.approx(p.gamma_s * np.exp(-p.gamma_s * data[:, 0]),
                                           rel=1e-12)

    def test_predict_joint_matches_closed_form_row_by_row(self, tmp_path):
        out = tmp_path / "joint.csv"
        code = main(["predict", "--joint", "--family", "beta", "--phase", "0",
                     "--bins", "12", "--out", str(out)])
        assert code == 0
        rows = out.read_text().splitlines()
        assert rows[0] == "tl_s,tr_s,survival,pdf"
        state = BipartiteState.beta(0.0, KaonParams())
        for row in rows[1:]:
            tl, tr, surv, dens = (float(x) for x in row.split(","))
            assert surv == pytest.approx(joint_survival_11(state, tl, tr),
                                         rel=1e-12, abs=1e-300)
            assert dens == pytest.approx(
                joint_pdf_11(DecayModel.STANDARD, state, tl, tr),
                rel=1e-12, abs=1e-300)

    def test_simulate_writes_events_matching_library(self, tmp_path):
        out = tmp_path / "events.csv"
        code = main(["simulate", "--model", "twfo", "--n", "20",
                     "--seed", "99", "--out", str(out)])
        assert code == 0
        events = read_events(out)
        expected = sample_decay_times(DecayModel.TIME_OPERATOR,
                                      cronin_fitch_state(KaonParams(), +1),
                                      20, RunSeed(99))
        assert events == expected

    def test_simulate_standard_pathology_exits_three(self, tmp_path, capsys):
        out = tmp_path / "events.csv"
        code = main(["simulate", "--model", "standard", "--n", "10",
                     "--seed", "1", "--out", str(out)])
        assert code == 3
        err = capsys.readouterr().err
        assert err.startswith("error: model-pathology:")

    def test_detect_pipeline(self, tmp_path):
        events = tmp_path / "events.csv"
        binned = tmp_path / "binned.csv"
        assert main(["simulate", "--model", "twfo", "--n", "500",
                     "--seed", "7", "--out", str(events)]) == 0
        assert main(["detect", "--events", str(events), "--t-max", "3e-9",
                     "--bins", "30", "--seed", "7", "--out", str(binned)]) == 0
        rows = binned.read_text().splitlines()
        assert rows[0] == "bin_lo_s,bin_hi_s,pair_count,triplet_count"
        assert len(rows) == 31

    def test_fit_report(self, tmp_path):
        events = tmp_path / "events.csv"
        binned = tmp_path / "binned.csv"
        main(["simulate", "--model", "twfo", "--n", "20000", "--seed", "3",
              "--out", str(events)])
        main(["detect", "--events", str(events), "--t-max", "2.7e-9",
              "--bins", "60", "--branching-charged", "1.0", "--seed", "3",
              "--out", str(binned)])
        report = tmp_path / "fit.txt"
        code = main(["fit", "--data", str(binned), "--model", "twfo",
                     "--free", "epsilon_abs,i0", "--out", str(report)])
        assert code == 0
        text = report.read_text()
        assert "RESULT fit model=twfo" in text
        assert "neg_log_likelihood:" in text

    def test_discriminate_report(self, tmp_path):
        out = tmp_path / "power.txt"
        code = main(["discriminate", "--model-a", "twfo", "--model-b", "standard",
                     "--n-events", "1000,100000", "--trials", "150",
                     "--seed", "4", "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("power: n=1000 ")
        assert lines[-1].startswith("RESULT discriminate ")

    def test_extract_epsilon_matches_library(self, capsys):
        code = main(["extract-epsilon", "--pairs", "45", "--decays", "22700"])
        assert code == 0
        out = capsys.readouterr().out
        marker = "epsilon_abs="
        value = float(out.rsplit(marker, 1)[1].split()[0])
        lib = extract_epsilon(45, 22700, KaonParams()).epsilon_abs
        assert value == pytest.approx(lib, rel=1e-15)

    def test_zeno_schedules_agree_end_to_end(self, tmp_path):
        reports = []
        for measurements in ("", "3e-11,8e-11"):
            out = tmp_path / f"zeno{len(reports)}.txt"
            argv = ["zeno", "--readout", "2e-10", "--out", str(out)]
            if measurements:
                argv += ["--measurements", measurements]
            assert main(argv) == 0
            text = out.read_text()
            reports.append({line.split(":")[0]: line.split(":")[1].strip()
                            for line in text.splitlines() if ":" in line})
        for key in ("analytic_p_plus", "analytic_p_minus", "analytic_p_survival"):
            assert float(reports[0][key]) == pytest.approx(float(reports[1][key]),
                                                           abs=1e-12)

    def test_spectrum_density_curve_normalised(self, tmp_path):
        out = tmp_path / "spec.csv"
        code = main(["spectrum", "--width", "2.0", "--points", "2001",
                     "--out", str(out)])
        assert code == 0
        rows = out.read_text().splitlines()
        assert rows[0] == "energy_s_inv,density"
        data = np.array([[float(x) for x in r.split(",")] for r in rows[1:]])
        assert np.trapezoid(data[:, 1], data[:, 0]) == pytest.approx(1.0, abs=1e-9)

    def test_spectrum_survival_curve(self, tmp_path):
        out = tmp_path / "surv.csv"
        code = main(["spectrum", "--width", "2.0", "--survival",
                     "--t-max", "2.0", "--bins", "40", "--out", str(out)])
        assert code == 0
        data = np.array([[float(x) for x in r.split(",")]
                         for r in out.read_text().splitlines()[1:]])
        assert data[0, 1] == pytest.approx(1.0, abs=1e-10)
        assert np.all(np.diff(data[:, 1]) < 0)


class TestCliContract:
    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        argv = ["simulate", "--model", "hybrid", "--n", "200", "--seed", "12345",
                "--stream-id", "6"]
        assert main(argv + ["--out", str(a)]) == 0
        assert main(argv + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_config_flag_precedence_end_to_end(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("kaon.epsilon_abs = 1.0e-3\nseed = 9\n")
        out1 = tmp_path / "r1.txt"
        assert main(["extract-epsilon", "--pairs", "45", "--decays", "22700",
                     "--config", str(cfg), "--out", str(out1)]) == 0
        # the config's epsilon does not affect the counting identity, but the
        # config must parse and the run must succeed; a flag overrides it
        out2 = tmp_path / "r2.txt"
        assert main(["extract-epsilon", "--pairs", "45", "--decays", "22700",
                     "--config", str(cfg), "--gamma-s", "2e10", "--gamma-l",
                     "1e7", "--out", str(out2)]) == 0
        assert out1.read_text() != out2.read_text()

    def test_usage_error_exit_code(self, capsys):
        assert main(["predict", "--no-such-flag"]) == 2

    def test_invalid_argument_single_line_reason(self, capsys):
        code = main(["detect", "--events", "/nonexistent/path.csv"])
        assert code == 2
        err = capsys.readouterr().err
        assert err.startswith("error: invalid-argument:")
        assert err.count("\n") == 1

    def test_bad_detector_bounds_rejected(self, tmp_path, capsys):
        events = tmp_path / "e.csv"
        main(["simulate", "--model", "twfo", "--n", "5", "--seed", "2",
              "--out", str(events)])
        code = main(["detect", "--events", str(events), "--t-min", "1e-6",
                     "--t-max", "1e-7"])
        assert code == 2
        assert capsys.readouterr().err.startswith("error: invalid-argument:")

    def test_module_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "kaonlab", "extract-epsilon", "--pairs",
             "45", "--decays", "22700"], capture_output=True, text=True)
        assert proc.returncode == 0
        assert "RESULT extract-epsilon" in proc.stdout

    def test_help_mentions_subcommands(self):
        proc = subprocess.run([sys.executable, "-m", "kaonlab", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        for name in ("predict", "simulate", "detect", "fit", "discriminate",
                     "extract-epsilon", "zeno", "spectrum"):
            assert name in proc.stdout
