import os
import tempfile
import unittest

import yaml

from src.config import RunConfig
from src.config import dump_config
from src.config import from_dict
from src.config import load_config
from src.config import write_config_echo
from src.likelihood import RidgeConfig
from src.utils import ConfigError


class TestConfig(unittest.TestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.directory.cleanup()

    def _yaml(self, text: str) -> str:
        path = os.path.join(self.directory.name, 'run.yaml')
        with open(path, 'w', encoding='utf-8') as fp:
            fp.write(text)
        return path

    def test_defaults(self):
        config = load_config()
        self.assertEqual(RunConfig(), config)
        self.assertEqual(RidgeConfig(1., 1., 5.), config.ridge)
        self.assertEqual(1., config.dt)
        self.assertEqual(['C', 'D', 'S'], [g.label for g in config.group_specs()])

    def test_file_then_overrides(self):
        path = self._yaml('dt: 1e-1\nseed: 4\nseeds: [1, 2]\nridge: {lambda_err: 2}\nbounds:\n  tau: [1, 20]\n')
        config = load_config(path, {'seed': 9, 'jobs': None})
        self.assertEqual(0.1, config.dt)
        self.assertEqual(9, config.seed)
        self.assertEqual((1, 2), config.seeds)
        self.assertEqual(RidgeConfig(lambda_err=2.), config.ridge)
        self.assertEqual((1., 20.), config.bounds.tau)
        self.assertEqual(1, config.jobs)

    def test_rejections(self):
        for text in ('dtt: 1\n', 'dt: -1\n', 'dt: fast\n', 'featureset: eeg\n', 'fdr_q: 1.5\n',
                     'bounds:\n  tau: [5, 1]\n', 'ridge: {lambda_neg: -1}\n', 'svm_gamma: auto\n', 'paths: {foo: a.csv}\n', '[1, 2]\n', 'dt: [\n'):
            with self.subTest(text=text), self.assertRaises(ConfigError):
                load_config(self._yaml(text))
        with self.assertRaises(ConfigError):
            from_dict({'groups': [{'label': 'C'}]}).group_specs()

    def test_echo_reloads(self):
        config = from_dict({'seed': 3, 'jobs': 4, 'svm_gamma': 0.5, 'n_starts': 2})
        path = write_config_echo(config, os.path.join(self.directory.name, 'out.csv'))
        self.assertTrue(path.endswith('out.csv.config.yaml'))
        with open(path, 'r', encoding='utf-8') as fp:
            echoed = yaml.safe_load(fp)
        self.assertNotIn('jobs', echoed)
        self.assertEqual(from_dict({**echoed, 'jobs': 4}), config)

    def test_echo_ignores_jobs(self):
        self.assertEqual(dump_config(from_dict({'jobs': 1})), dump_config(from_dict({'jobs': -1})))


if __name__ == '__main__':
    unittest.main()
