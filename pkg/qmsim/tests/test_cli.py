import json
import textwrap
import pytest

from models import CriticalCouplingResult
from core.config import Settings
from core.errors import BracketError, ConfigError, RecordError
from cli.config_loader import load_config, parse_config
from cli.main import main, EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG


def _write_config(tmp_path, body, name="run.cfg"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(body))
    return str(path)


def _sweep_config(tmp_path, sweep, out="out"):
    return _write_config(tmp_path, f"""
[model]
n_sites = 12
noise_amp = 0.0

[sweep]
{sweep}
rate = 2.0
n_cycles = 2
record_stride = 10

[output]
directory = "{tmp_path / out}"
formats = ["csv"]
""")


def _relax_config(tmp_path, model="n_sites = 16\nnoise_amp = 0.0", out="out"):
    return _write_config(tmp_path, f"""
[model]
{model}

[relax]
h_ext = 0.0
max_tau = 2.0
min_tau = 0.0
window = 5
record_stride = 10

[output]
directory = "{tmp_path / out}"
formats = ["csv", "json"]
""")


@pytest.mark.cli
class TestConfigLoading:
    """TOML parsing and validation of run configurations"""

    @pytest.mark.parametrize("name,protocol", [
        ("fig2.cfg", "relax"), ("fig3.cfg", "sweep"), ("fig4.cfg", "sweep"), ("kink-oracle.cfg", "relax")
    ])
    def test_shipped_configs_parse(self, config_dir, name, protocol):
        config = load_config(str(config_dir / name))
        assert config.protocol_name == protocol

    def test_relax_config_values(self, config_dir):
        config = load_config(str(config_dir / "fig2.cfg"))
        assert config.model.n_sites == 400
        assert config.model.s == 1.0
        assert config.relax.h_ext == 0.05
        assert config.output.formats == ["csv", "json"]

    def test_sweep_h_min_mirrors_h_max(self, config_dir):
        config = load_config(str(config_dir / "fig3.cfg"))
        assert config.sweep.h_max is None
        protocol = config.sweep.protocol(2.0)
        assert protocol.h_min == -2.0
        assert protocol.rate == 2.5e-4

    @pytest.mark.parametrize("body", ["h_max = 1.0\nh_min = 2.0", "h_max = 1.0\nh_min = 1.0", "h_max = -1.0"])
    def test_sweep_bounds_rejected(self, body):
        """h_min (or its mirrored default) must lie below h_max"""
        with pytest.raises(ConfigError) as exc_info:
            parse_config(f"[sweep]\n{body}\n")
        assert any("must be < sweep.h_max" in v for v in exc_info.value.violations)

    def test_prescanned_h_max_checked_against_h_min(self):
        config = parse_config("[sweep]\nh_min = 1.0\n")
        with pytest.raises(ConfigError) as exc_info:
            config.sweep.protocol(0.5)
        assert exc_info.value.violations == ["sweep: h_min (1.0) must be < h_max (0.5)"]
        assert config.sweep.protocol(2.0).h_min == 1.0

    def test_unknown_key_is_named(self):
        with pytest.raises(ConfigError) as exc_info:
            parse_config("[model]\ngamm = 0.25\n\n[relax]\nh_ext = 0.0\n")
        assert any("gamm" in v for v in exc_info.value.violations)

    def test_exactly_one_protocol(self):
        with pytest.raises(ConfigError) as exc_info:
            parse_config("[relax]\nh_ext = 0.0\n\n[sweep]\nh_max = 1.0\n")
        assert any("exactly one protocol" in v for v in exc_info.value.violations)

        with pytest.raises(ConfigError):
            parse_config("[model]\nn_sites = 10\n")

    def test_syntax_error_has_location(self):
        with pytest.raises(ConfigError) as exc_info:
            parse_config("[model]\nn_sites = = 3\n")
        assert exc_info.value.line == 2
        assert exc_info.value.column is not None

    def test_all_violations_at_once(self):
        """Parameter bounds and section structure are reported together"""
        with pytest.raises(ConfigError) as exc_info:
            parse_config("[model]\nn_sites = 2\ndt = 0.5\n\n[relax]\n\n[scan]\nh_ext = [0.0]\ns_lo = 0.1\ns_hi = 1.0\n")
        violations = exc_info.value.violations
        assert "n_sites must be ≥ 3" in violations
        assert "dt must be ≤ 0.1" in violations
        assert any("exactly one protocol" in v for v in violations)

    def test_field_errors_collected(self):
        with pytest.raises(ConfigError) as exc_info:
            parse_config("[model]\ngamm = 0.25\n\n[sweep]\nrate = 0.0\n")
        assert len(exc_info.value.violations) == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "absent.cfg"))

    def test_overrides(self, config_dir, tmp_path):
        config = load_config(str(config_dir / "fig2.cfg")).with_overrides(
            seed=99, out=str(tmp_path), format="json"
        )
        assert config.model.rng_seed == 99
        assert config.output.directory == str(tmp_path)
        assert config.output.formats == ["json"]

    def test_threads_from_environment(self, monkeypatch):
        monkeypatch.setenv("QMS_THREADS", "3")
        assert Settings().threads == 3


@pytest.mark.cli
class TestMain:
    """Subcommands, exit codes and outputs"""

    def test_validate_config(self, config_dir, capsys):
        assert main(["validate-config", "--config", str(config_dir / "fig2.cfg")]) == EXIT_OK
        assert "relax protocol, N=400" in capsys.readouterr().out

    def test_invalid_config_writes_nothing(self, tmp_path, capsys):
        path = _relax_config(tmp_path, model="n_sites = 16\ngamm = 0.1")
        assert main(["relax", "--config", path]) == EXIT_CONFIG
        assert "gamm" in capsys.readouterr().err
        assert not (tmp_path / "out").exists()

    def test_protocol_mismatch(self, tmp_path, capsys):
        path = _relax_config(tmp_path)
        assert main(["sweep", "--config", path]) == EXIT_CONFIG
        assert "configures 'relax'" in capsys.readouterr().err

    def test_blowup_exit_code(self, tmp_path, capsys):
        path = _relax_config(tmp_path, model="n_sites = 8\ndt = 0.1\nfrozen_v = 1000.0\nnoise_amp = 0.0")
        assert main(["relax", "--config", path, "--quiet"]) == EXIT_NUMERICAL
        err = capsys.readouterr().err
        assert "site 0" in err
        assert "tau=0.1" in err

    def test_relax_run(self, tmp_path, capsys):
        path = _relax_config(tmp_path)
        assert main(["relax", "--config", path]) == EXIT_OK
        assert "winding=0" in capsys.readouterr().out

        out = tmp_path / "out"
        assert (out / "relax.profile.csv").exists()
        assert (out / "relax.json").exists()
        assert json.loads((out / "relax.meta.json").read_text())["model"]["n_sites"] == 16

    def test_command_line_overrides(self, tmp_path, capsys):
        path = _relax_config(tmp_path)
        other = tmp_path / "elsewhere"
        args = ["relax", "--config", path, "--seed", "99", "--out", str(other), "--format", "json", "--quiet"]
        assert main(args) == EXIT_OK

        assert capsys.readouterr().out == ""
        assert json.loads((other / "relax.meta.json").read_text())["rng_seed"] == 99
        assert (other / "relax.json").exists()
        assert not (other / "relax.profile.csv").exists()
        assert not (tmp_path / "out").exists()

    def test_bad_seed_rejected(self, tmp_path):
        with pytest.raises(SystemExit) as exc_info:
            main(["relax", "--config", _relax_config(tmp_path), "--seed", "-4"])
        assert exc_info.value.code == 2

    def test_sweep_run(self, tmp_path, capsys):
        path = _write_config(tmp_path, f"""
[model]
n_sites = 12
noise_amp = 0.0

[sweep]
h_max = 5.0
rate = 2.0
n_cycles = 2
record_stride = 10

[output]
directory = "{tmp_path / 'out'}"
formats = ["csv"]
""")
        assert main(["sweep", "--config", path]) == EXIT_OK
        assert "converged=" in capsys.readouterr().out

        out = tmp_path / "out"
        for name in ("sweep.csv", "sweep.events.csv", "loops.json", "sweep.meta.json"):
            assert (out / name).exists()
        assert json.loads((out / "sweep.meta.json").read_text())["protocol"]["h_min"] == -5.0

    def test_sweep_without_h_max_prescans(self, tmp_path, mocker):
        prescan = mocker.patch("cli.main.prescan_h_max", return_value=4.0)
        path = _write_config(tmp_path, f"""
[model]
n_sites = 12
noise_amp = 0.0

[sweep]
rate = 2.0
n_cycles = 2
record_stride = 10
target_winding = 3

[output]
directory = "{tmp_path / 'out'}"
""")
        assert main(["sweep", "--config", path, "--quiet"]) == EXIT_OK
        assert prescan.call_args.kwargs["target_winding"] == 3
        metadata = json.loads((tmp_path / "out" / "sweep.meta.json").read_text())
        assert metadata["protocol"]["h_max"] == 4.0

    def _scan_config(self, tmp_path):
        return _write_config(tmp_path, f"""
[model]
n_sites = 16

[scan]
h_ext = [0.0, 0.1]
s_lo = 0.1
s_hi = 2.0

[output]
directory = "{tmp_path / 'out'}"
formats = ["csv", "json"]
""")

    def test_scan_run(self, tmp_path, mocker, capsys):
        results = [
            CriticalCouplingResult(h_ext=0.0, s_critical=0.8, s_lo=0.1, s_hi=2.0, tol=0.02),
            CriticalCouplingResult(h_ext=0.1, s_critical=0.7, s_lo=0.1, s_hi=2.0, tol=0.02),
        ]
        mocker.patch("cli.main.critical_coupling_curve", return_value=results)
        assert main(["scan", "--config", self._scan_config(tmp_path)]) == EXIT_OK

        assert "s*(0)=0.8000 s*(0.1)=0.7000" in capsys.readouterr().out
        assert (tmp_path / "out" / "scan.csv").exists()
        assert (tmp_path / "out" / "scan.json").exists()

    def test_scan_bracket_failure(self, tmp_path, mocker, capsys):
        mocker.patch("cli.main.critical_coupling_curve", side_effect=BracketError("vacuum still stable at s_hi=2.0"))
        assert main(["scan", "--config", self._scan_config(tmp_path)]) == EXIT_NUMERICAL
        assert "vacuum still stable" in capsys.readouterr().err

    def test_sweep_bounds_exit_config(self, tmp_path, capsys):
        path = _sweep_config(tmp_path, "h_max = 1.0\nh_min = 2.0")
        assert main(["sweep", "--config", path]) == EXIT_CONFIG
        assert "config error: sweep.h_min (2) must be < sweep.h_max (1)" in capsys.readouterr().err
        assert not (tmp_path / "out").exists()

    def test_prescanned_h_max_below_h_min(self, tmp_path, mocker, capsys):
        """An explicit h_min above the pre-scanned h_max is a config failure"""
        mocker.patch("cli.main.prescan_h_max", return_value=0.5)
        sweep = mocker.patch("cli.main.virgin_then_cycle")
        path = _sweep_config(tmp_path, "h_min = 1.0")

        assert main(["sweep", "--config", path, "--quiet"]) == EXIT_CONFIG
        assert "h_min (1.0) must be < h_max (0.5)" in capsys.readouterr().err
        sweep.assert_not_called()
        assert not (tmp_path / "out").exists()

    def test_failed_write_leaves_no_partial_outputs(self, tmp_path, mocker, capsys):
        """sweep.csv is written before loops.json fails; neither reaches the output directory"""
        mocker.patch("cli.main.write_model", side_effect=RecordError("disk full"))
        path = _sweep_config(tmp_path, "h_max = 5.0")

        assert main(["sweep", "--config", path, "--quiet"]) == EXIT_NUMERICAL
        assert "disk full" in capsys.readouterr().err
        assert not (tmp_path / "out").exists()
        assert sorted(p.name for p in tmp_path.iterdir()) == ["run.cfg"]
