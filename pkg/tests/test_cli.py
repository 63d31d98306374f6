import json
import math

import pandas as pd
import pytest
from click.testing import CliRunner

from app import cli
from models.simulation import DgpSpec

SIMULATE = """
mode = "simulate"
seed = 5

[dgp]
spec = "default"
T = 5
burn_in = 2
"""

ESTIMATE = """
mode = "estimate"
seed = 3

[dgp]
spec = "default"
T = 20
burn_in = 2

[[interventions]]
name = "h3"
kind = "homogeneous"
h = 3.0

[estimate]
M = [1]
use_counts = true

[propensity]
flavors = ["true", "unadjusted"]
"""


COVERAGE = """
mode = "coverage"
seed = 11

[dgp]
spec = "default"
burn_in = 2

[[interventions]]
name = "h5"
kind = "homogeneous"
h = 5.0

[estimate]
M = [1, 2]
use_counts = true

[propensity]
flavors = ["true", "unadjusted"]

[coverage]
T = [20]
datasets = 3
R = 5
"""


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def scenario(tmp_path):
    def _write(text, name="scenario.toml"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)
    return _write


class TestRun:

    def test_invalid_config_exits_with_code_2(self, runner, scenario, tmp_path):
        path = scenario('mode = "plot"\nseed = 1\n')
        result = runner.invoke(cli, ['run', path, '--threads', '1', '--out', str(tmp_path / 'out')])
        assert result.exit_code == 2
        assert "Error:" in result.output

    def test_missing_config(self, runner, tmp_path):
        result = runner.invoke(cli, ['run', str(tmp_path / 'nada.toml'), '--threads', '1'])
        assert result.exit_code == 2

    def test_simulate_writes_artifacts(self, runner, scenario, tmp_path):
        path = scenario(SIMULATE)
        out = tmp_path / 'sim'
        result = runner.invoke(cli, ['run', path, '--threads', '1', '--out', str(out)])
        assert result.exit_code == 0, result.output
        for name in ('series.csv', 'results.csv', 'results.json', 'manifest.json'):
            assert (out / name).exists()
        manifest = json.loads((out / 'manifest.json').read_text(encoding='utf-8'))
        assert manifest['mode'] == 'simulate'
        assert len(manifest['config_sha256']) == 64
        assert manifest['seeds'] == {'root': 5}
        counts = pd.read_csv(out / 'results.csv')
        assert list(counts['t']) == list(range(1, 8))
        assert list(counts['observed']) == [False, False] + [True] * 5

    def test_simulate_is_reproducible(self, runner, scenario, tmp_path):
        path = scenario(SIMULATE)
        for name in ('a', 'b'):
            result = runner.invoke(cli, ['run', path, '--threads', '1', '--out', str(tmp_path / name)])
            assert result.exit_code == 0, result.output
        for artifact in ('results.csv', 'series.csv'):
            assert (tmp_path / 'a' / artifact).read_bytes() == (tmp_path / 'b' / artifact).read_bytes()

    def test_estimate(self, runner, scenario, tmp_path):
        path = scenario(ESTIMATE)
        out = tmp_path / 'est'
        result = runner.invoke(cli, ['run', path, '--threads', '1', '--out', str(out)])
        assert result.exit_code == 0, result.output
        table = pd.read_csv(out / 'results.csv')
        assert len(table) == 2 * 2
        assert set(table['propensity']) == {'true', 'unadjusted'}
        assert set(table['estimator']) == {'ipw', 'hajek'}
        assert (table['lower'] <= table['estimate']).all()
        assert (table['estimate'] <= table['upper']).all()
        payload = json.loads((out / 'results.json').read_text(encoding='utf-8'))
        assert payload['T'] == 20
        assert 'unadjusted_model' in payload

    @pytest.mark.parametrize("text", [ESTIMATE, COVERAGE], ids=["estimate", "coverage"])
    def test_thread_count_does_not_change_results(self, runner, scenario, tmp_path, text):
        path = scenario(text)
        for threads in ('1', '8'):
            result = runner.invoke(cli, ['run', path, '--threads', threads, '--out', str(tmp_path / threads)])
            assert result.exit_code == 0, result.output
        for artifact in ('results.csv', 'records.csv'):
            serial = tmp_path / '1' / artifact
            if not serial.exists():
                continue
            pd.testing.assert_frame_equal(pd.read_csv(serial), pd.read_csv(tmp_path / '8' / artifact),
                                          check_exact=False, rtol=1e-12)


class TestCalibrate:

    def test_closed_form_intercepts(self, runner, flat_spec, tmp_path):
        spec_path = tmp_path / 'flat.toml'
        spec_path.write_text(flat_spec.to_toml(), encoding='utf-8')
        out_path = tmp_path / 'calibrated.toml'
        result = runner.invoke(cli, ['calibrate', str(spec_path), '--out', str(out_path), '--pilot-t', '10',
                                     '--replicates', '1', '--threads', '1'])
        assert result.exit_code == 0, result.output
        text = out_path.read_text(encoding='utf-8')
        assert text.startswith("# Especificación del DGP")
        calibrated = DgpSpec.from_toml(str(out_path))
        assert calibrated.treatment.intercept == pytest.approx(math.log(5.0))
        assert calibrated.outcome.intercept == pytest.approx(math.log(flat_spec.targets.outcome_mean))
        assert calibrated.T == flat_spec.T

    def test_invalid_spec(self, runner, tmp_path):
        spec_path = tmp_path / 'roto.toml'
        spec_path.write_text("[series]\nT = 1\n", encoding='utf-8')
        result = runner.invoke(cli, ['calibrate', str(spec_path), '--out', str(tmp_path / 'x.toml'),
                                     '--threads', '1'])
        assert result.exit_code == 2
        assert "Error:" in result.output
