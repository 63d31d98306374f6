from pathlib import Path

import pytest

from models.scenario import ScenarioConfig
from models.surface import QuadratureGrid
from services import scenarios
from utils.errors import ConfigError

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def base(**overrides):
    data = {
        'mode': 'estimate',
        'seed': 1,
        'regions': {'lower': [[0.0, 0.0, 1.0, 0.5]]},
        'interventions': [
            {'name': 'h3', 'kind': 'homogeneous', 'h': 3.0},
            {'name': 'h7', 'kind': 'homogeneous', 'h': 7.0},
        ],
        'estimate': {'M': [1, 2], 'regions': ['window', 'lower'], 'contrasts': [['h3', 'h7']]},
    }
    data.update(overrides)
    return data


class TestFromDict:

    def test_defaults(self):
        config = ScenarioConfig.from_dict(base())
        assert config.profile == 'desk'
        assert config.coverage.datasets == 50
        assert config.estimate.levels == (0.95,)
        assert config.estimate.bandwidth is None
        assert config.propensity.flavors == ('estimated',)
        assert [d.name for d in config.selected_interventions] == ['h3', 'h7']

    def test_profile_override(self):
        config = ScenarioConfig.from_dict(base(profile='desk'), profile='full')
        assert config.profile == 'full'
        assert config.coverage.R == 1000
        assert config.balance.datasets == 200

    @pytest.mark.parametrize("overrides,key", [
        ({'extra': 1}, "extra"),
        ({'estimate': {'regions': ['nowhere']}}, "estimate.regions"),
        ({'estimate': {'contrasts': [['h3', 'h9']]}}, "estimate.contrasts"),
        ({'estimate': {'level': 0.9, 'levels': [0.9]}}, "estimate.levels"),
        ({'estimate': {'levels': [1.5]}}, "estimate.levels"),
        ({'estimate': {'estimators': ['aipw']}}, "estimate.estimators"),
        ({'regions': {'window': [[0.0, 0.0, 1.0, 1.0]]}}, "regions.window"),
        ({'propensity': {'flavors': ['oracle']}}, "propensity.flavors"),
        ({'seed': -1}, "seed"),
        ({'mode': 'plot'}, "mode"),
    ])
    def test_invalid(self, overrides, key):
        with pytest.raises(ConfigError, match=key) as info:
            ScenarioConfig.from_dict(base(**overrides))
        assert info.value.exit_code == 2

    def test_references(self):
        local = {'name': 'loc', 'kind': 'local', 'region': 'upper', 'c_inside': 2.0}
        with pytest.raises(ConfigError, match="Región desconocida"):
            ScenarioConfig.from_dict(base(interventions=[local]))
        seq = {'name': 's', 'kind': 'staged', 'stages': ['h3', 'h5']}
        with pytest.raises(ConfigError, match="Intervención desconocida"):
            ScenarioConfig.from_dict(base(sequences=[seq]))
        twice = [{'name': 'h3', 'kind': 'homogeneous', 'h': 3.0}] * 2
        with pytest.raises(ConfigError, match="repetido"):
            ScenarioConfig.from_dict(base(interventions=twice))

    def test_kind_specific_keys(self):
        bad = {'name': 'x', 'kind': 'homogeneous', 'h': 1.0, 'c': 2.0}
        with pytest.raises(ConfigError, match="interventions\\[0\\].c"):
            ScenarioConfig.from_dict(base(interventions=[bad], estimate={}))

    def test_modes_need_interventions(self):
        with pytest.raises(ConfigError, match="al menos una intervención"):
            ScenarioConfig.from_dict(base(interventions=[], estimate={}))
        assert ScenarioConfig.from_dict({'mode': 'simulate', 'seed': 1}).mode == 'simulate'

    def test_true_propensity_rejected_for_data(self):
        data = base(data={'path': 'events.csv'}, propensity={'flavors': ['true']})
        with pytest.raises(ConfigError, match="propensity.flavors"):
            ScenarioConfig.from_dict(data)

    def test_oracle_alias(self):
        config = ScenarioConfig.from_dict(base(mode='truth-oracle', oracle={'R': 20, 'period_stride': 5}))
        assert config.coverage.R == 20
        assert config.coverage.period_stride == 5
        with pytest.raises(ConfigError, match="oracle"):
            ScenarioConfig.from_dict(base(oracle={'R': 2}, coverage={'R': 2}))
        with pytest.raises(ConfigError, match="oracle.extra"):
            ScenarioConfig.from_dict(base(oracle={'extra': 2}))

    def test_paths_resolve_against_the_file(self, tmp_path):
        data = base(data={'path': 'events.csv', 'dgp_spec': 'dgp.toml'}, output_dir='out')
        config = ScenarioConfig.from_dict(data, base_dir=str(tmp_path))
        assert config.data.path == str(tmp_path / 'events.csv')
        assert config.data.dgp_spec == str(tmp_path / 'dgp.toml')
        assert config.output_dir == str(tmp_path / 'out')
        assert config.dgp.spec == 'default'

    def test_to_dict_omits_source(self):
        config = ScenarioConfig.from_dict(base(), source='x.toml')
        resolved = config.to_dict()
        assert 'source' not in resolved
        assert scenarios.config_hash(resolved) == scenarios.config_hash(ScenarioConfig.from_dict(base()).to_dict())


class TestShippedScenarios:

    @pytest.mark.parametrize("name", ["simulate", "estimate", "coverage", "balance", "truth_oracle"])
    def test_parse(self, name):
        config = ScenarioConfig.from_toml(str(SCENARIO_DIR / f"{name}.toml"))
        assert config.mode == name.replace('_', '-')

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="No existe"):
            ScenarioConfig.from_toml(str(tmp_path / "nada.toml"))

    def test_invalid_toml(self, tmp_path):
        path = tmp_path / "roto.toml"
        path.write_text("mode = \n", encoding="utf-8")
        with pytest.raises(ConfigError, match="TOML inválido"):
            ScenarioConfig.from_toml(str(path))


class TestPieces:

    def test_regions_and_sequences(self, window):
        config = ScenarioConfig.from_dict(base())
        regions = scenarios.build_regions(config, window)
        assert set(regions) == {'window', 'lower'}
        assert regions['lower'].area == pytest.approx(0.5)
        grid = QuadratureGrid.regular(window, 16)
        interventions = scenarios.build_interventions(config, window, grid, regions)
        named = scenarios.build_sequences(config, interventions)
        assert [(n, s.M) for n, s in named] == [('h3', 1), ('h3', 2), ('h7', 1), ('h7', 2)]
        assert scenarios.contrast_pairs(config, named) == [(0, 2), (1, 3)]

    def test_region_outside_window(self, window):
        config = ScenarioConfig.from_dict(base(regions={'lower': [[0.0, 0.0, 2.0, 0.5]]}))
        with pytest.raises(ConfigError, match="regions.lower"):
            scenarios.build_regions(config, window)

    def test_observed_baseline_needs_points(self, window):
        focal = {'name': 'f', 'kind': 'focal', 'c': 2.0, 'center': [0.5, 0.5], 'precision': 10.0,
                 'baseline': 'observed'}
        config = ScenarioConfig.from_dict(base(interventions=[focal], estimate={}))
        grid = QuadratureGrid.regular(window, 16)
        with pytest.raises(ConfigError, match="interventions.f.baseline"):
            scenarios.build_interventions(config, window, grid, scenarios.build_regions(config, window), [])
