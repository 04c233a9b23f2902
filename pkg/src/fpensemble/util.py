""" Various utility functions used in fpensemble."""

import contextlib
import csv
import io
import json
import logging
import os
import tempfile
from functools import lru_cache, partial
from pathlib import Path

import appdirs
import jinja2
import yaml

log = logging.getLogger(__name__)

# fpensemble's label files are tab-separated values, no quoting, no
# escaping (i.e. tab literals aren't allowed)

class TSV(csv.Dialect):
    delimiter = '\t'
    lineterminator = '\n'
    quoting = csv.QUOTE_NONE
    doublequote = False
    quotechar = None
    strict = True
csv.register_dialect('fpe_tsv', TSV)
TSVReader = partial(csv.DictReader, dialect='fpe_tsv')
TSVWriter = partial(csv.DictWriter, dialect='fpe_tsv')


def cache(function):
    """ Simple unbounded cache decorator """
    return lru_cache(maxsize=None)(function)


@contextlib.contextmanager
def flexopen(target, mode=None, *args, **kwargs):
    """ 'Open' a path or file object with a unified interface

    `target` may be a string, Path object, or open file. Any additional
    arguments will be passed to the underlying open() call. Returns the opened
    file object.

    If flexopen opens a file, it will close it on exit. If passed an
    already-opened file, it will leave it open -- the assumption is that
    whoever opened it will close it when needed.
    """
    if isinstance(target, (io.IOBase, tempfile.SpooledTemporaryFile)):
        yield target
    else:
        target = Path(target)
        mode = mode or 'r'
        with target.open(mode, *args, **kwargs) as f:
            yield f


def atomic_write(target, data):
    """ Write bytes or text to `target` without leaving partial files

    Paths are written to a temporary file in the same directory and then
    renamed over the destination. Open file objects are written directly.
    """
    if isinstance(target, io.IOBase):
        target.write(data)
        return
    target = Path(target)
    mode = 'wb' if isinstance(data, (bytes, bytearray, memoryview)) else 'w'
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f'.{target.name}.')
    try:
        with os.fdopen(fd, mode, **({} if 'b' in mode
                                    else {'encoding': 'utf-8',
                                          'newline': '\n'})) as f:
            f.write(data)
        os.replace(tmp, target)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise
    log.debug("wrote %s", target)


def canonical_json(data):
    """ Serialize to fpensemble's canonical (diffable) JSON form """
    return json.dumps(data, sort_keys=True, indent=2) + '\n'


def readtsv(infile):
    """ Read in a tsv file

    Accepts a string, Path, or open file object. File objects should be
    opened in text mode with newline=''.
    """
    with flexopen(infile, newline='', encoding='utf-8') as f:
        return list(TSVReader(f))


def dumptsv(dataset, headers):
    """ Render an iterable of mappings as tsv text """
    out = io.StringIO(newline='')
    writer = TSVWriter(out, headers)
    writer.writeheader()
    for item in dataset:
        writer.writerow(item)
    return out.getvalue()


def debug_structure(data, loglevel=logging.DEBUG):
    """ yamlize a data structure and log it as debug """
    if not log.isEnabledFor(loglevel):
        return
    for line in yaml.safe_dump(data, sort_keys=True).splitlines():
        log.log(loglevel, line)


def percent(value, places=2):
    """ Format a rate in [0, 1] as a percentage (jinja filter) """
    if value is None or isinstance(value, jinja2.Undefined):
        return "--"
    return f"{value * 100:.{places}f}%"


@cache
def jinja_env():
    user_templates = Path(appdirs.user_data_dir('fpensemble'), 'templates')
    tpl_loader = jinja2.ChoiceLoader([
        jinja2.FileSystemLoader(user_templates),
        jinja2.PackageLoader('fpensemble'),
        ])
    env = jinja2.Environment(
            loader=tpl_loader,
            finalize=lambda obj: "" if obj is None else obj,
            trim_blocks=True,
            lstrip_blocks=True,
            keep_trailing_newline=True,
            )
    env.filters["percent"] = percent
    return env


def jrender(_template, **kwargs):
    return jinja_env().get_template(_template).render(**kwargs)
