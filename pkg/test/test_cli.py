import contextlib
import io
import json
import os
import unittest
from pathlib import Path
from tempfile import TemporaryDirectory
from unittest import mock

from fpensemble import config
from fpensemble.cli import main
from fpensemble.gallery import Gallery
from fpensemble.imaging import read_pgm, flip_y


def run(*argv):
    """ Run the CLI, returning (exit code, stdout, stderr) """
    out, err = io.StringIO(), io.StringIO()
    code = 0
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        try:
            main([str(a) for a in argv])
        except SystemExit as ex:
            code = ex.code or 0
    return code, out.getvalue(), err.getvalue()


class CliCase(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.env = mock.patch.dict(os.environ,
                                  {config.CFG_EVAR: '/nonexistent'})
        cls.env.start()
        config.load.cache_clear()
        cls.tmp = TemporaryDirectory()
        cls.root = Path(cls.tmp.name)
        cls.data = cls.root / 'data'
        code, _, err = run('gen-synth', cls.data, '--subjects', 6,
                           '--impressions', 3, '--size', 48, '--seed', 1)
        assert code == 0, err
        cls.store = cls.root / 'all.fpes'
        code, _, err = run('encode', cls.data, '-o', cls.store)
        assert code == 0, err

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()
        cls.env.stop()
        config.load.cache_clear()

    def check(self, *argv):
        code, out, err = run(*argv)
        self.assertEqual(code, 0, err)
        return out


class TestDataCommands(CliCase):
    def test_gen_synth_layout(self):
        self.assertEqual(len(list(self.data.glob('images/*.pgm'))), 18)
        self.assertTrue((self.data / 'labels.tsv').is_file())

    def test_encode(self):
        store = Gallery.load(self.store)
        self.assertEqual([str(t) for t in store.tags], list('OYXRM'))
        self.assertEqual(store.count('O'), 18)
        self.assertEqual(store.ids('O')[:2], ['s0000_0', 's0000_1'])

    def test_transform(self):
        out = self.root / 'flipped.pgm'
        image = self.data / 'images' / 's0001_0.pgm'
        self.check('transform', image, 'Y', '-o', out)
        self.assertEqual(read_pgm(out), flip_y(read_pgm(image)))

    def test_transform_needs_minutiae(self):
        code, _, err = run('transform', self.data / 'images' / 's0001_0.pgm',
                           'M', '-o', self.root / 'x.pgm')
        self.assertEqual(code, 1)
        self.assertTrue(err.startswith('error: MissingMinutiae: '), err)

    def test_enroll_and_search(self):
        gallery = self.root / 'gallery.fpes'
        self.check('enroll', self.store, '-o', gallery)
        self.assertEqual(Gallery.load(gallery).ids('O'),
                         [f's000{i}' for i in range(6)])
        probe = self.data / 'images' / 's0002_0.pgm'
        out = self.check('search', gallery, probe, '--k', 1)
        rank, sid, score = out.strip().split('\t')
        self.assertEqual((rank, sid), ('1', 's0002'))
        self.assertAlmostEqual(float(score), 1.0, places=5)

        result = self.root / 'search.json'
        out = self.check('search', gallery, probe, '--k', 3, '--fuse',
                         'median', '--minutiae',
                         self.data / 'minutiae' / 's0002.minu', '-o', result)
        self.assertEqual(len(out.splitlines()), 3)
        data = json.loads(result.read_text())
        self.assertEqual(data['method'], 'score-median')
        self.assertEqual(data['ranked'][0]['id'], 's0002')

    def test_calibrate(self):
        out = self.check('calibrate', self.store, '--fmr', 0.1)
        table = json.loads(out)
        self.assertEqual(table['target_fmr'], 0.1)
        self.assertEqual(sorted(table['thresholds']), sorted('OYXRM'))

    def test_fuse_single_supervisor_is_identity(self):
        cfg = self.root / 'ridge.json'
        cfg.write_text(json.dumps({'transforms': 'R', 'supervisors': 'R'}))
        store = self.root / 'ridge.fpes'
        self.check('encode', self.data, '--config', cfg, '-o', store)
        fused = self.root / 'ridge.fused.fpes'
        self.check('fuse', store, '--config', cfg)
        self.assertEqual(fused.read_bytes(), store.read_bytes())

    def test_fuse_default_supervisors(self):
        out = self.root / 'rm.fpes'
        self.check('fuse', self.store, '-o', out)
        fused = Gallery.load(out)
        self.assertEqual([str(t) for t in fused.tags], ['O'])
        self.assertEqual(fused.count('O'), 18)

    def test_dirs(self):
        out = self.check('dirs')
        self.assertIn('config:', out)
        self.assertIn('templates:', out)


class TestEvalCommands(CliCase):
    def test_verify_eval_reproducible(self):
        reports = []
        for name in ['a.json', 'b.json']:
            out = self.check('verify-eval', self.data, '--fmr', 0.1, '-o',
                             self.root / name)
            self.assertIn('## Verification', out)
            data = json.loads((self.root / name).read_text())
            data.pop('created')
            reports.append(data)
        self.assertEqual(reports[0], reports[1])
        verification = reports[0]['verification']
        self.assertEqual(verification['genuine_pairs'], 18)
        self.assertEqual(verification['impostor_pairs'], 15)
        self.assertEqual(reports[0]['dataset']['images'], 18)

    def test_identify_eval(self):
        out = self.root / 'ident.json'
        self.check('identify-eval', self.data, '--max-rank', 6, '-o', out)
        data = json.loads(out.read_text())['identification']
        self.assertEqual(data['gallery_size'], 6)
        self.assertEqual(data['probes'], 12)
        table = (self.root / 'ident.cmc.csv').read_text().splitlines()
        self.assertEqual(len(table), 7)
        self.assertTrue(table[0].startswith('rank,'))

    def test_openset_eval(self):
        out = self.check('openset-eval', self.data, '--fnir', 0.2)
        self.assertIn('## Open-set', out)

    def test_ablation(self):
        cfg = self.root / 'or.json'
        cfg.write_text(json.dumps({'transforms': 'OR'}))
        report = self.root / 'ablation.json'
        self.check('ablation', self.data, '--config', cfg, '--fmr', 0.1,
                   '-o', report)
        rows = json.loads(report.read_text())['ablation']
        self.assertEqual([r['subset'] for r in rows], ['O', 'R', 'OR'])

    def test_bench(self):
        out = self.check('bench', '--entries', 500, '--dim', 16,
                         '--seconds', 0.05)
        self.assertIn('## Throughput', out)

    def test_fusion_benefit(self):
        report = self.root / 'benefit.json'
        self.check('fusion-benefit', '--datasets', 2, '--subjects', 4,
                   '--impressions', 2, '--size', 32, '-o', report)
        data = json.loads(report.read_text())['fusion_benefit']
        self.assertEqual(len(data['fused_rank1']), 2)
        self.assertIn('significant', data['ttest'])


class TestErrors(CliCase):
    def test_usage_errors(self):
        cases = [['search'],
                 ['frobnicate'],
                 ['search', self.store, 'x.pgm', '--k', 'many'],
                 ['verify-eval', self.data, '--protocol', 'half'],
                 ['bench', '--seconds', 0],
                 ['fuse', self.store, '--rule', 'vote'],
                 ['verify-eval', self.data, '--seed', 3],
                 ['identify-eval', self.data, '--seed', 3]]
        for argv in cases:
            with self.subTest(argv=argv[:2]):
                self.assertEqual(run(*argv)[0], 2)

    def test_missing_input(self):
        code, _, err = run('verify-eval', self.root / 'nothing')
        self.assertEqual(code, 1)
        self.assertTrue(err.startswith('error: FileNotFoundError: '), err)

    def test_bad_store(self):
        bad = self.root / 'bad.fpes'
        bad.write_bytes(b'NOPE' + bytes(12))
        code, _, err = run('enroll', bad)
        self.assertEqual(code, 1)
        self.assertIn('error: StoreFormatError: ', err)

    def test_bad_config(self):
        cfg = self.root / 'bad.json'
        cfg.write_text('{"colour": "blue"}')
        code, _, err = run('encode', self.data, '--config', cfg)
        self.assertEqual(code, 1)
        self.assertIn('error: ConfigError: ', err)
