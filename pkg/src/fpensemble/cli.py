"""Ensembles of fingerprint representations: encode, fuse, search, evaluate

Usage: fpensemble [--help] [options] <command> [<args>...]

To see command-specific help, run `fpensemble <command> --help`

Commands:
    gen-synth           Write a synthetic fingerprint dataset
    transform           Apply one input transformation to a PGM image
    encode              Encode a dataset into an embedding store
    enroll              Build a gallery from an encoded store
    search              Search a gallery with a probe image
    verify-eval         Verification experiment (TAR at FMR)
    identify-eval       Closed-set identification experiment (CMC)
    openset-eval        Open-set identification experiment (FPIR at FNIR)
    calibrate           Calibrate per-model thresholds from a store
    fuse                Centroid-fuse the supervisor columns of a store
    bench               Measure exhaustive search throughput
    ablation            Verification TAR for every model subset
    fusion-benefit      Rank-1 of O alone vs. feature fusion, with a t-test
    dirs                Print directory paths used by fpensemble

Options:
    -V, --version       Print version and exit

    The following options are accepted by (almost) all commands:

    -h, --help          Print this help
    -q, --quiet         Quiet output
    -v, --verbose       Verbose output
    -D, --debug         Even more verbose output
    --pdb               Start interactive debugger on crash

Examples:
    A desk-scale evaluation looks like this:

    $ fpensemble gen-synth data --subjects 100 --impressions 8
    $ fpensemble verify-eval data --protocol fvc -o verify.json
    $ fpensemble identify-eval data -o ident.json
"""

import sys
import logging
import logging.config
import textwrap
import pdb
from datetime import datetime
from functools import partial
from inspect import getdoc
from pathlib import Path
from textwrap import dedent

import numpy as np
from addict import Dict
from appdirs import AppDirs
from docopt import docopt, DocoptExit
from alive_progress import alive_bar

from . import util, config
from .config import RunConfig
from .core import ModelTag, ModelSubset
from .encoder import encode_ensemble
from .evaluation import PairingProtocol, throughput_bench
from .exceptions import FpensembleError, InsufficientData, ConfigError
from .exceptions import error_line
from .experiments import EncodedSet, encode_dataset, run_verification
from .experiments import run_identification, run_openset, run_ablation
from .experiments import calibrate_encoded, fusion_benefit
from .fusion import FusionWeights, ScoreRule, fuse_matrix
from .gallery import Gallery
from .imaging import TransformTag, apply_transform, read_pgm, format_pgm
from .minutiae import read_minutiae
from .report import EvalReport
from .synth import SyntheticSpec, generate_synthetic, load_dataset

try:
    from .version import version
except ImportError:
    version = 'UNKNOWN'

log = logging.getLogger(__name__)

try:
    # Try to do the right thing when piping to head, etc.
    from signal import signal, SIGPIPE, SIG_DFL
    signal(SIGPIPE, SIG_DFL)
except ImportError:
    pass


def _number(value, name, kind=int, low=None, high=None):
    """ Convert a flag value, turning bad input into a usage error """
    try:
        number = kind(value)
    except (TypeError, ValueError):
        raise DocoptExit(f"--{name} must be a number, got {value!r}") \
            from None
    if (low is not None and number < low) or \
            (high is not None and number > high):
        raise DocoptExit(f"--{name} out of range: {value}")
    return number


def _choice(parse, value, name):
    try:
        return parse(value)
    except ValueError as ex:
        raise DocoptExit(f"--{name}: {ex}") from None


def _config(args, **overrides):
    """ The run config for a command: defaults, --config, then flags """
    if args.seed:
        overrides['seed'] = _number(args.seed, 'seed', low=0, high=2**64 - 1)
    cfg = RunConfig.resolve(args.config or None, overrides)
    util.debug_structure(cfg.to_mapping())
    return cfg


def _threads(args):
    return _number(args.threads or 1, 'threads', low=1)


def _encoding(cfg):
    return dict(cfg=cfg.encoder, blur=cfg.blur, block=cfg.ridge.block,
                offset=cfg.ridge.offset)


def _pbar(args):
    return partial(alive_bar, disable=not args.progress, enrich_print=False)


def _dataset(args):
    with _pbar(args)(title='loading') as bar:
        return load_dataset(args.dataset, bar)


def _encode(args, cfg, dataset):
    with _pbar(args)(len(dataset), title='encoding') as bar:
        return encode_dataset(dataset, cfg.transforms, threads=_threads(args),
                              bar=bar, **_encoding(cfg))


def _dataset_info(dataset):
    return {'root': str(dataset.root), 'subjects': len(dataset.subjects()),
            'images': len(dataset)}


def _finish(args, report):
    if args.out:
        report.save(args.out)
    print(report.markdown(), end='')


def cmd_gen_synth(args):
    """ Write a synthetic fingerprint dataset

    Usage: fpensemble gen-synth [--help] [options] <outdir>

    Writes images/<subject>_<impression>.pgm, minutiae/<subject>.minu and
    labels.tsv under <outdir>. The same options and seed always produce the
    same files.

    Options:
        --subjects N        Number of subjects [default: 50]
        --impressions N     Impressions per subject [default: 4]
        --size N            Image width and height [default: 128]
        --noise X           Noise level in [0, 1) [default: 0.2]
        --minutiae N        Minutiae per subject [default: 12]
        --seed N            Random seed
        --config PATH       JSON run configuration
        -P, --progress      Display progress bar

        -h, --help          Print this help
        -q, --quiet         Quiet output
        -v, --verbose       Verbose output
        -D, --debug         Even more verbose output
        --pdb               Start interactive debugger on crash
    """
    cfg = _config(args)
    spec = SyntheticSpec(
            n_subjects=_number(args.subjects, 'subjects', low=1),
            impressions_per_subject=_number(args.impressions, 'impressions',
                                            low=1),
            image_size=_number(args.size, 'size', low=16),
            noise_level=_number(args.noise, 'noise', float, low=0),
            minutiae_per_subject=_number(args.minutiae, 'minutiae', low=0),
            seed=cfg.seed)
    total = spec.n_subjects * spec.impressions_per_subject
    with _pbar(args)(total, title='generating') as bar:
        dataset = generate_synthetic(spec, args.outdir, bar)
    log.info("wrote %s", dataset)


def cmd_transform(args):
    """ Apply one input transformation to a PGM image

    Usage: fpensemble transform [--help] [options] <image> <tag>

    Arguments:
        image       A PGM image
        tag         O (identity), Y (flip columns), X (flip rows),
                    R (ridge binarization) or M (minutiae soft gate)

    Writes the transformed image as binary PGM to --out, or to stdout.

    Options:
        --minutiae FILE     Minutiae template (required for M)
        --config PATH       JSON run configuration
        -o, --out PATH      Output file

        -h, --help          Print this help
        -q, --quiet         Quiet output
        -v, --verbose       Verbose output
        -D, --debug         Even more verbose output
        --pdb               Start interactive debugger on crash
    """
    cfg = _config(args)
    tag = _choice(TransformTag.parse, args.tag, 'tag')
    image = read_pgm(args.image)
    minutiae = read_minutiae(args.minutiae) if args.minutiae else None
    out = apply_transform(image, tag, minutiae, cfg.blur, cfg.ridge.block,
                          cfg.ridge.offset)
    if args.out:
        util.atomic_write(args.out, format_pgm(out))
    else:
        sys.stdout.buffer.write(format_pgm(out))


def cmd_encode(args):
    """ Encode every image of a dataset into an embedding store

    Usage: fpensemble encode [--help] [options] <dataset>

    Every image is encoded under every configured transformation. The store
    holds one column per model, keyed by image id; it is written to --out,
    or to <dataset>/embeddings.fpes.

    Options:
        --config PATH       JSON run configuration
        --threads N         Worker threads [default: 1]
        -o, --out PATH      Output store
        -P, --progress      Display progress bar

        -h, --help          Print this help
        -q, --quiet         Quiet output
        -v, --verbose       Verbose output
        -D, --debug         Even more verbose output
        --pdb               Start interactive debugger on crash
    """
    cfg = _config(args)
    encoded = _encode(args, cfg, _dataset(args))
    out = args.out or Path(args.dataset, 'embeddings.fpes')
    encoded.to_gallery().save(out)


def cmd_enroll(args):
    """ Build a gallery from one impression per subject of an encoded store

    Usage: fpensemble enroll [--help] [options] <store>

    The gallery is keyed by subject id and written to --out, or next to the
    store as <store-stem>.gallery.fpes.

    Options:
        --impression N      Impression to enroll [default: 0]
        -o, --out PATH      Output gallery

        -h, --help          Print this help
        -q, --quiet         Quiet output
        -v, --verbose       Verbose output
        -D, --debug         Even more verbose output
        --pdb               Start interactive debugger on crash
    """
    impression = _number(args.impression, 'impression', low=0)
    encoded = EncodedSet.from_gallery(Gallery.load(args.store))
    rows = [n for n, i in enumerate(encoded.impressions) if i == impression]
    if not rows:
        raise InsufficientData(f"no images with impression {impression} "
                               f"in {args.store}")
    gallery = Gallery.from_matrices(
            [encoded.subjects[n] for n in rows],
            {t: m[rows] for t, m in encoded.matrices.items()})
    store = Path(args.store)
    gallery.save(args.out or store.with_name(f'{store.stem}.gallery.fpes'))


def cmd_search(args):
    """ Encode a probe image and search a gallery

    Usage: fpensemble search [--help] [options] <gallery> <probe>

    Prints rank, id and score of the best candidates as tab-separated
    lines. Searches one model's column (--tag), or all columns with score
    fusion (--fuse).

    Options:
        --k N               Candidates to return [default: 5]
        --tag TAG           Model column to search [default: O]
        --fuse RULE         Score-fuse all columns (mean or median)
        --minutiae FILE     Probe minutiae template (required for M)
        --config PATH       JSON run configuration
        --threads N         Search threads [default: 1]
        -o, --out PATH      Also write the results as JSON

        -h, --help          Print this help
        -q, --quiet         Quiet output
        -v, --verbose       Verbose output
        -D, --debug         Even more verbose output
        --pdb               Start interactive debugger on crash
    """
    cfg = _config(args)
    k = _number(args.k, 'k', low=1)
    threads = _threads(args)
    gallery = Gallery.load(args.gallery)
    probe = read_pgm(args.probe)
    minutiae = read_minutiae(args.minutiae) if args.minutiae else None
    if args.fuse:
        rule = _choice(ScoreRule.parse, args.fuse, 'fuse')
        embeddings = encode_ensemble(probe, minutiae,
                                     ModelSubset(gallery.tags),
                                     **_encoding(cfg))
        result = gallery.ensemble_search_scorefuse(embeddings, rule, k,
                                                   threads)
        method = f'score-{rule}'
    else:
        tag = _choice(ModelTag.parse, args.tag, 'tag')
        embedding = encode_ensemble(probe, minutiae, ModelSubset([tag]),
                                    **_encoding(cfg))[tag]
        result = gallery.search_topk(tag, embedding, k, threads)
        method = str(tag)
    for rank, (sid, score) in enumerate(result.ranked, 1):
        print(f"{rank}\t{sid}\t{score:.6f}")
    if args.out:
        util.atomic_write(args.out, util.canonical_json({
            'probe': args.probe, 'method': method, 'k': k,
            'gallery_size': result.total,
            'ranked': [{'id': sid, 'score': score}
                       for sid, score in result.ranked]}))


def cmd_verify_eval(args):
    """ Verification experiment: TAR at FMR for models and fused methods

    Usage: fpensemble verify-eval [--help] [options] <dataset>

    Compares single models, OR decision fusion, mean and median score
    fusion and centroid feature fusion of the configured supervisors.

    Options:
        --protocol NAME     Pairing protocol, fvc or full [default: fvc]
        --fmr X             Target FMR (default from config)
        --config PATH       JSON run configuration
        --threads N         Worker threads [default: 1]
        -o, --out PATH      Write the JSON report here
        -P, --progress      Display progress bar

        -h, --help          Print this help
        -q, --quiet         Quiet output
        -v, --verbose       Verbose output
        -D, --debug         Even more verbose output
        --pdb               Start interactive debugger on crash
    """
    overrides = {}
    if args.fmr:
        overrides['target_fmr'] = _number(args.fmr, 'fmr', float)
    cfg = _config(args, **overrides)
    protocol = _choice(PairingProtocol.parse, args.protocol, 'protocol')
    dataset = _dataset(args)
    encoded = _encode(args, cfg, dataset)
    result = run_verification(encoded, protocol, cfg.target_fmr,
                              cfg.supervisors, cfg.weights)
    _finish(args, EvalReport('verify-eval', cfg.to_mapping(),
                             _dataset_info(dataset),
                             verification=result.to_mapping()))


def cmd_identify_eval(args):
    """ Closed-set identification experiment

    Usage: fpensemble identify-eval [--help] [options] <dataset>

    Enrolls one impression per subject and searches with the rest. Reports
    CMC curves for every model, score fusion and centroid feature fusion,
    plus rank-1 of the OR rule. With --out, the CMC points also go to
    <out-stem>.cmc.csv.

    Options:
        --max-rank N        Deepest CMC rank [default: 20]
        --impression N      Impression to enroll [default: 0]
        --config PATH       JSON run configuration
        --threads N         Worker threads [default: 1]
        -o, --out PATH      Write the JSON report here
        -P, --progress      Display progress bar

        -h, --help          Print this help
        -q, --quiet         Quiet output
        -v, --verbose       Verbose output
        -D, --debug         Even more verbose output
        --pdb               Start interactive debugger on crash
    """
    cfg = _config(args)
    max_rank = _number(args.max_rank, 'max-rank', low=1)
    impression = _number(args.impression, 'impression', low=0)
    dataset = _dataset(args)
    encoded = _encode(args, cfg, dataset)
    probes = sum(1 for i in encoded.impressions if i != impression)
    with _pbar(args)(probes, title='searching') as bar:
        result = run_identification(encoded, max_rank, cfg.score_rule,
                                    cfg.supervisors, cfg.weights, impression,
                                    threads=_threads(args), bar=bar)
    _finish(args, EvalReport('identify-eval', cfg.to_mapping(),
                             _dataset_info(dataset),
                             identification=result.to_mapping()))


def cmd_openset_eval(args):
    """ Open-set identification experiment

    Usage: fpensemble openset-eval [--help] [options] <dataset>

    Enrolls a seeded fraction of the subjects. Their remaining impressions
    are mated probes; every impression of the other subjects is a
    non-mated probe. Reports FPIR at the target FNIR, where a mated probe
    also misses if its top candidate is the wrong subject.

    Options:
        --mate-fraction X   Fraction of subjects enrolled [default: 0.5]
        --fnir X            Target FNIR [default: 0.01]
        --config PATH       JSON run configuration
        --seed N            Random seed
        --threads N         Worker threads [default: 1]
        -o, --out PATH      Write the JSON report here
        -P, --progress      Display progress bar

        -h, --help          Print this help
        -q, --quiet         Quiet output
        -v, --verbose       Verbose output
        -D, --debug         Even more verbose output
        --pdb               Start interactive debugger on crash
    """
    cfg = _config(args)
    fraction = _number(args.mate_fraction, 'mate-fraction', float)
    fnir = _number(args.fnir, 'fnir', float)
    dataset = _dataset(args)
    encoded = _encode(args, cfg, dataset)
    with _pbar(args)(len(encoded), title='searching') as bar:
        result = run_openset(encoded, fnir, fraction, cfg.score_rule,
                             cfg.supervisors, cfg.weights, cfg.seed,
                             threads=_threads(args), bar=bar)
    _finish(args, EvalReport('openset-eval', cfg.to_mapping(),
                             _dataset_info(dataset),
                             openset=result.to_mapping()))


def cmd_calibrate(args):
    """ Calibrate per-model thresholds from an encoded store

    Usage: fpensemble calibrate [--help] [options] <store>

    Every model's threshold is set on the store's impostor pairs so that
    its empirical FMR does not exceed the target. The threshold table is
    written as JSON to --out, or to stdout.

    Options:
        --fmr X             Target FMR (default from config)
        --protocol NAME     Pairing protocol, fvc or full [default: fvc]
        --config PATH       JSON run configuration
        -o, --out PATH      Output file

        -h, --help          Print this help
        -q, --quiet         Quiet output
        -v, --verbose       Verbose output
        -D, --debug         Even more verbose output
        --pdb               Start interactive debugger on crash
    """
    overrides = {}
    if args.fmr:
        overrides['target_fmr'] = _number(args.fmr, 'fmr', float)
    cfg = _config(args, **overrides)
    protocol = _choice(PairingProtocol.parse, args.protocol, 'protocol')
    encoded = EncodedSet.from_gallery(Gallery.load(args.store))
    table = calibrate_encoded(encoded, cfg.target_fmr, protocol)
    if args.out:
        table.save(args.out)
    else:
        print(table.dumps(), end='')


def cmd_fuse(args):
    """ Centroid-fuse the supervisor columns of a store

    Usage: fpensemble fuse [--help] [options] <store>

    Replaces the supervisor columns with one column holding the unit-length
    weighted centroid of each entry's supervisor embeddings. Supervisors
    default to the configured ones present in the store. With a single
    supervisor the output is the input column unchanged.

    Options:
        --rule RULE         Fusion rule; only centroid [default: centroid]
        --supervisors SET   Models to fuse, e.g. ORM
        --as TAG            Tag of the fused column (default: the sole
                            supervisor, or O)
        --config PATH       JSON run configuration
        -o, --out PATH      Output store (default: <store-stem>.fused.fpes)

        -h, --help          Print this help
        -q, --quiet         Quiet output
        -v, --verbose       Verbose output
        -D, --debug         Even more verbose output
        --pdb               Start interactive debugger on crash
    """
    if args.rule != 'centroid':
        raise DocoptExit(f"--rule: unknown fusion rule {args.rule!r}")
    cfg = _config(args)
    store = Gallery.load(args.store)
    if args.supervisors:
        supervisors = _choice(ModelSubset, args.supervisors, 'supervisors')
    else:
        present = [t for t in cfg.supervisors if t in store.tags]
        if not present and len(store.tags) == 1:
            present = store.tags
        if not present:
            raise ConfigError(f"none of the supervisors {cfg.supervisors} "
                              f"are in {args.store}")
        supervisors = ModelSubset(present)
    missing = [t for t in supervisors if t not in store.tags]
    if missing:
        raise ConfigError(f"{args.store} has no column for "
                          f"{ModelSubset(missing)}")
    if args['as']:
        tag = _choice(ModelTag.parse, args['as'], 'as')
    else:
        tag = next(iter(supervisors)) if len(supervisors) == 1 \
            else ModelTag.O
    ids = store.ids(next(iter(supervisors)))
    for sup in supervisors:
        if store.ids(sup) != ids:
            raise ConfigError(f"columns of {args.store} are not aligned")
    weights = FusionWeights.for_subset(
            supervisors, cfg.fusion_weights.weights)
    fused = fuse_matrix({t: store.matrix(t) for t in supervisors}, weights)
    store_path = Path(args.store)
    out = args.out or store_path.with_name(f'{store_path.stem}.fused.fpes')
    Gallery.from_matrices(ids, {tag: fused}).save(out)


def cmd_bench(args):
    """ Measure exhaustive search throughput

    Usage: fpensemble bench [--help] [options] [<gallery>]

    Repeats full top-1 scans of one gallery column for at least the given
    time and reports probe-vs-entry comparisons per second. Without a
    gallery file, a seeded random gallery is generated.

    Options:
        --entries N         Random gallery size [default: 100000]
        --dim N             Random gallery dimension [default: 192]
        --tag TAG           Gallery column to scan [default: O]
        --seconds X         Minimum wall time [default: 5]
        --probes N          Distinct random probes [default: 16]
        --threads N         Search threads [default: 1]
        --config PATH       JSON run configuration
        --seed N            Random seed
        -o, --out PATH      Write the JSON report here
        -P, --progress      Display progress bar

        -h, --help          Print this help
        -q, --quiet         Quiet output
        -v, --verbose       Verbose output
        -D, --debug         Even more verbose output
        --pdb               Start interactive debugger on crash
    """
    cfg = _config(args)
    seconds = _number(args.seconds, 'seconds', float)
    if seconds <= 0:
        raise DocoptExit("--seconds must be positive")
    tag = _choice(ModelTag.parse, args.tag, 'tag')
    rng = np.random.default_rng(cfg.seed)

    def unit_rows(n, dim):
        rows = rng.standard_normal((n, dim), dtype=np.float32)
        return rows / np.linalg.norm(rows, axis=1, keepdims=True)

    if args.gallery:
        gallery = Gallery.load(args.gallery)
        dataset = {'root': args.gallery, 'entries': gallery.count(tag)}
    else:
        entries = _number(args.entries, 'entries', low=1)
        dim = _number(args.dim, 'dim', low=1, high=65535)
        gallery = Gallery.from_matrices([f'e{n:07d}' for n in range(entries)],
                                        {tag: unit_rows(entries, dim)})
        dataset = {'root': None, 'entries': entries}
    probes = list(unit_rows(_number(args.probes, 'probes', low=1),
                            gallery.dim))
    with _pbar(args)(title='benchmarking') as bar:
        result = throughput_bench(gallery, tag, probes, seconds,
                                  _threads(args), bar)
    bench = dict(result._asdict(), tag=str(tag))
    _finish(args, EvalReport('bench', cfg.to_mapping(), dataset,
                             bench=bench))


def cmd_ablation(args):
    """ Verification TAR for every non-empty subset of the models

    Usage: fpensemble ablation [--help] [options] <dataset>

    For each subset, reports the TAR at the target FMR under OR decision
    fusion, score fusion (configured rule) and centroid feature fusion.

    Options:
        --protocol NAME     Pairing protocol, fvc or full [default: fvc]
        --fmr X             Target FMR (default from config)
        --config PATH       JSON run configuration
        --threads N         Worker threads [default: 1]
        -o, --out PATH      Write the JSON report here
        -P, --progress      Display progress bar

        -h, --help          Print this help
        -q, --quiet         Quiet output
        -v, --verbose       Verbose output
        -D, --debug         Even more verbose output
        --pdb               Start interactive debugger on crash
    """
    overrides = {}
    if args.fmr:
        overrides['target_fmr'] = _number(args.fmr, 'fmr', float)
    cfg = _config(args, **overrides)
    protocol = _choice(PairingProtocol.parse, args.protocol, 'protocol')
    dataset = _dataset(args)
    encoded = _encode(args, cfg, dataset)
    rows = run_ablation(encoded, cfg.transforms, protocol, cfg.target_fmr,
                        cfg.score_rule, cfg.fusion_weights)
    _finish(args, EvalReport('ablation', cfg.to_mapping(),
                             _dataset_info(dataset),
                             ablation=[r.to_mapping() for r in rows]))


def cmd_fusion_benefit(args):
    """ Compare rank-1 of O alone with feature fusion over many datasets

    Usage: fpensemble fusion-benefit [--help] [options]

    Synthesizes --datasets datasets with consecutive seeds, measures
    closed-set rank-1 of the O model and of the centroid of --subset on
    each, and compares the two with Welch's t-test.

    Options:
        --datasets N        Number of datasets [default: 20]
        --subset SET        Models to fuse [default: ORM]
        --subjects N        Subjects per dataset [default: 100]
        --impressions N     Impressions per subject [default: 4]
        --size N            Image width and height [default: 128]
        --noise X           Noise level in [0, 1) [default: 0.4]
        --alpha X           Significance level [default: 0.05]
        --config PATH       JSON run configuration
        --seed N            Seed of the first dataset
        --threads N         Worker threads [default: 1]
        -o, --out PATH      Write the JSON report here
        -P, --progress      Display progress bar

        -h, --help          Print this help
        -q, --quiet         Quiet output
        -v, --verbose       Verbose output
        -D, --debug         Even more verbose output
        --pdb               Start interactive debugger on crash
    """
    cfg = _config(args)
    subset = _choice(ModelSubset, args.subset, 'subset')
    spec = SyntheticSpec(
            n_subjects=_number(args.subjects, 'subjects', low=2),
            impressions_per_subject=_number(args.impressions, 'impressions',
                                            low=2),
            image_size=_number(args.size, 'size', low=16),
            noise_level=_number(args.noise, 'noise', float, low=0),
            seed=cfg.seed)
    n = _number(args.datasets, 'datasets', low=2)
    weights = FusionWeights.for_subset(subset, cfg.fusion_weights.weights)
    with _pbar(args)(n, title='datasets') as bar:
        result = fusion_benefit(spec, n, subset, weights,
                                alpha=_number(args.alpha, 'alpha', float),
                                threads=_threads(args), bar=bar,
                                **_encoding(cfg))
    _finish(args, EvalReport('fusion-benefit', cfg.to_mapping(),
                             {'datasets': n, 'subjects': spec.n_subjects,
                              'impressions': spec.impressions_per_subject,
                              'noise': spec.noise_level},
                             fusion_benefit=result.to_mapping()))


def cmd_dirs(args):  # pylint: disable=unused-argument
    """ Print fpensemble directory paths

    Usage: fpensemble dirs [--help]

    fpensemble looks for configuration overrides and report templates in
    user directories that vary between platforms. This command prints the
    directories used on your current platform.
    """
    ad = AppDirs("fpensemble")  # pylint: disable=invalid-name
    out = f"""
        config:     {ad.user_config_dir}
        data:       {ad.user_data_dir}
        templates:  {Path(ad.user_data_dir, 'templates')}
        cache:      {ad.user_cache_dir}
        logs:       {ad.user_log_dir}
        """
    print(dedent(out).strip())


class Args(Dict):
    """ Convenience wrapper for the docopt dict

    This exists so I can do args.whatever and get the Right Thing out of it.
    Underscores in attribute names match hyphens in option names, so
    args.max_rank finds --max-rank.
    """

    keyfmts = ['{key}',
               '-{key}',
               '--{key}',
               '<{key}>']

    def _realkey(self, key):
        # Look for the first key-variant that's present, otherwise use the
        # original key.
        for variant in (key, key.replace('_', '-')):
            for fmt in type(self).keyfmts:
                realkey = fmt.format(key=variant)
                if realkey in self:
                    return realkey
        return key

    def __getitem__(self, key):
        key = self._realkey(key)
        return super().__getitem__(key)

    def __setitem__(self, key, value):
        key = self._realkey(key)
        super().__setitem__(key, value)


def initlog(args):
    """ Set up logging """
    key = ('debug' if args.debug
           else 'verbose' if args.verbose
           else 'quiet' if args.quiet
           else 'default')
    logconf = config.load('logging.yaml')
    logging.config.dictConfig(logconf[key].to_dict())


def main(argv=None):
    """ Entry point for fpensemble."""
    ts_start = datetime.now()
    try:
        args = Args(docopt(__doc__.strip(), argv,
                    version=version, options_first=True))
    except DocoptExit as ex:
        print(ex, file=sys.stderr)
        sys.exit(2)
    initlog(args)

    try:
        cmd = globals().get(f"cmd_{args.command.replace('-', '_')}")
        if not cmd:
            log.critical("'%s' is not a valid command; see fpensemble --help",
                         args.command)
            sys.exit(2)
        args = Args(docopt(getdoc(cmd), argv, version=version))
        initlog(args)  # because log opts may come before or after the command
        util.debug_structure(dict(args.items()))
        cmd(args)
        log.debug("total running time: %s", datetime.now()-ts_start)
    except DocoptExit as ex:
        print(ex, file=sys.stderr)
        sys.exit(2)
    except KeyboardInterrupt:
        log.error("keyboard interrupt; aborting")
        sys.exit(2)
    except (FpensembleError, OSError) as ex:
        log.debug("details:", exc_info=True)
        print(error_line(ex), file=sys.stderr)
        sys.exit(1)
    except Exception as ex:  # pylint: disable=broad-except
        log.exception(ex)
        if not args.pdb:
            sys.exit(1)
        print("\n\nCRASH -- UNHANDLED EXCEPTION")
        msg = ("Starting debugger post-mortem. If you got here by "
               "accident (perhaps by trying to see what --pdb does), "
               "you can get out with 'quit'.\n\n")
        print("\n{}\n\n".format("\n".join(textwrap.wrap(msg))))
        pdb.post_mortem()
        sys.exit(1)


if __name__ == "__main__":
    main()
