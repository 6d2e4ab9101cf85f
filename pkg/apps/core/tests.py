import json
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from .exceptions import ConfigurationError, LineSearchError, OptimizerError, ReconstructionError
from .utils import atomic_write, config_hash, derive_seed, read_csv, write_csv, write_json


class DeriveSeedTests(SimpleTestCase):

    def test_known_value_is_stable(self):
        self.assertEqual(derive_seed(7, 'counts'), derive_seed(7, 'counts'))
        self.assertLess(derive_seed(7, 'counts'), 2 ** 64)

    def test_components_and_indices_differ(self):
        seeds = {
            derive_seed(7, 'phantom'),
            derive_seed(7, 'counts'),
            derive_seed(7, 'thinning', 0),
            derive_seed(7, 'thinning', 1),
            derive_seed(8, 'counts'),
        }
        self.assertEqual(len(seeds), 5)


class FileWriteTests(SimpleTestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def test_atomic_write_leaves_no_file_on_error(self):
        target = self.root / 'nested' / 'out.bin'
        with self.assertRaises(RuntimeError):
            with atomic_write(target) as handle:
                handle.write(b'partial')
                raise RuntimeError('interrupted')
        self.assertFalse(target.exists())
        self.assertEqual(list(target.parent.iterdir()), [])

    def test_json_is_sorted_and_readable(self):
        write_json(self.root / 'a.json', {'b': 1, 'a': [1.5]})
        text = (self.root / 'a.json').read_text(encoding='utf-8')
        self.assertLess(text.index('"a"'), text.index('"b"'))
        self.assertEqual(json.loads(text), {'a': [1.5], 'b': 1})

    def test_csv_floats_are_exact(self):
        value = 0.1 + 0.2
        write_csv(self.root / 't.csv', ('n', 'x'), [(1, value)])
        rows = read_csv(self.root / 't.csv')
        self.assertEqual(rows[0]['n'], '1')
        self.assertEqual(float(rows[0]['x']), value)


class ConfigHashTests(SimpleTestCase):

    def test_key_order_does_not_matter(self):
        self.assertEqual(config_hash({'a': 1, 'b': {'c': 2}}), config_hash({'b': {'c': 2}, 'a': 1}))
        self.assertNotEqual(config_hash({'a': 1}), config_hash({'a': 2}))


class ExceptionTests(SimpleTestCase):

    def test_configuration_error_names_key(self):
        error = ConfigurationError('must be > 0', key='admm.rho')
        self.assertEqual(str(error), 'admm.rho: must be > 0')
        self.assertEqual(error.code, 'config_error')
        self.assertIsInstance(error, ReconstructionError)

    def test_line_search_error_is_optimizer_error(self):
        error = LineSearchError('no step', iteration=4)
        self.assertIsInstance(error, OptimizerError)
        self.assertEqual(error.iteration, 4)
        self.assertEqual(error.code, 'line_search_failed')
