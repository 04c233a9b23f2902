#!/usr/bin/env python3

from setuptools import setup, find_packages
from pathlib import Path


readme = Path(__file__).parent / "README.md"
# Keep these alphabetical, if possible
deps = [
    "addict>=2",
    "alive-progress>=2",
    "appdirs",
    "docopt",
    "jinja2",
    "more-itertools",
    "numpy>=1.22",
    "pyyaml>=3.10",
    "scipy>=1.8",
    ]
bdeps = [
    'setuptools-scm>=3.3.0',
    'wheel',
    ]
tdeps = [
    'pytest-subtests',
    'tox',
    ]
scmver = {
    'write_to': 'src/fpensemble/version.py',
    'fallback_version': 'UNKNOWN',
    }
classifiers = [
    "Development Status :: 3 - Alpha",
    "Intended Audience :: Science/Research",
    "Natural Language :: English",
    "Operating System :: OS Independent",
    "Programming Language :: Python :: 3",
    "Topic :: Scientific/Engineering :: Image Recognition",
    ]

setup(name="fpensemble",
      packages=find_packages("src"),
      package_dir={'': "src"},
      package_data={'fpensemble': ['config/*.yaml', 'templates/*']},
      include_package_data=True,
      install_requires=deps,
      setup_requires=bdeps,
      tests_require=tdeps,
      extras_require={'test': tdeps},
      use_scm_version=scmver,
      python_requires=">=3.9",
      description="Ensembles of fingerprint representations: encoding, "
                  "fusion, exhaustive search and evaluation.",
      long_description=readme.read_text(),
      long_description_content_type='text/markdown',
      classifiers=classifiers,
      zip_safe=False,
      keywords="fingerprint biometrics embedding fusion",
      test_suite="test",
      entry_points={"console_scripts": ["fpensemble = fpensemble.cli:main"]},
      )
